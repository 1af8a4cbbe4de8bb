#include "posefuse/data.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "posefuse/errors.hpp"

namespace posefuse::data {

namespace {

constexpr int kTrigFeatures = 12;  // sin/cos of y and 2y, 3 components each

Eigen::VectorXd trig_features(const so3::AxisAngle& y) {
  Eigen::VectorXd t(kTrigFeatures);
  for (int i = 0; i < 3; ++i) {
    t[4 * i + 0] = std::sin(y[i]);
    t[4 * i + 1] = std::cos(y[i]);
    t[4 * i + 2] = std::sin(2.0 * y[i]);
    t[4 * i + 3] = std::cos(2.0 * y[i]);
  }
  return t;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  if (k < 1) throw InvalidConfig("SynthConfig: k must be >= 1");
  if (per_category < 1) throw InvalidConfig("SynthConfig: per_category must be >= 1");
  if (input_dim < 1) throw InvalidConfig("SynthConfig: input_dim must be >= 1");
  if (sigma < 0.0) throw InvalidConfig("SynthConfig: sigma must be >= 0");
  if (!(max_angle > 0.0) || max_angle >= M_PI) {
    throw InvalidConfig("SynthConfig: max_angle must be in (0, pi)");
  }
}

SynthGenerator::SynthGenerator(const SynthConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  // ||t(y)||^2 = 6, so this scale puts the per-feature pose signal at
  // roughly unit variance for signal_scale = 1.
  const double w_scale = cfg_.signal_scale / std::sqrt(kTrigFeatures / 2.0);
  for (int i = 0; i < cfg_.k; ++i) {
    Rng rng(cfg_.map_seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(i + 1));
    nn::MatrixRM w(cfg_.input_dim, kTrigFeatures);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = w_scale * rng.normal();
    }
    maps_.push_back(std::move(w));
    Eigen::VectorXd offset(cfg_.input_dim);
    for (Eigen::Index r = 0; r < offset.size(); ++r) offset[r] = rng.normal();
    offset *= cfg_.separation / offset.norm();
    offsets_.push_back(std::move(offset));
  }
}

Eigen::VectorXd SynthGenerator::features_clean(int category, const so3::AxisAngle& y) const {
  if (category < 0 || category >= cfg_.k) throw IndexOutOfRange("features_clean: bad category");
  const auto i = static_cast<std::size_t>(category);
  return maps_[i] * trig_features(y) + offsets_[i];
}

Eigen::VectorXd SynthGenerator::features_for(int category, const so3::AxisAngle& y,
                                             Rng& noise_rng) const {
  Eigen::VectorXd x = features_clean(category, y);
  if (cfg_.sigma > 0.0) {
    for (Eigen::Index r = 0; r < x.size(); ++r) x[r] += cfg_.sigma * noise_rng.normal();
  }
  return x;
}

Dataset SynthGenerator::generate(std::uint64_t seed) const {
  Dataset ds;
  ds.input_dim = cfg_.input_dim;
  ds.k = cfg_.k;
  ds.samples.reserve(static_cast<std::size_t>(cfg_.k) * static_cast<std::size_t>(cfg_.per_category));
  for (int c = 0; c < cfg_.k; ++c) {
    Rng rng(seed + 0xd1b54a32d192ed03ULL * static_cast<std::uint64_t>(c + 1));
    for (int n = 0; n < cfg_.per_category; ++n) {
      LabeledSample s;
      s.category = c;
      s.axis_angle = so3::random_axis_angle(rng, cfg_.max_angle);
      s.rotation = so3::exp_map(s.axis_angle);
      s.x = features_for(c, s.axis_angle, rng);
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

LabeledSample SynthGenerator::jitter(const LabeledSample& sample, Rng& rng, double max_deg) const {
  if (max_deg < 0.0 || max_deg > 10.0) throw InvalidRange("jitter: max_deg must be in [0, 10]");
  if (max_deg == 0.0) return sample;
  const double max_rad = so3::deg_to_rad(max_deg);
  LabeledSample out = sample;
  for (;;) {
    const so3::Rotation delta = so3::random_rotation(rng, max_rad);
    const so3::Rotation rotated = delta * sample.rotation;
    const double angle = so3::geodesic_distance(rotated, so3::Rotation::Identity());
    if (angle >= M_PI - 1e-3) continue;  // keep the canonical range with margin
    out.axis_angle = so3::log_map(rotated);
    out.rotation = so3::exp_map(out.axis_angle);
    break;
  }
  out.x = features_for(sample.category, out.axis_angle, rng);
  return out;
}

Dataset generate(const SynthConfig& cfg, std::uint64_t seed) {
  return SynthGenerator(cfg).generate(seed);
}

void save_csv(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_csv: cannot open " + path);
  for (int i = 0; i < dataset.input_dim; ++i) out << "x" << i << ",";
  out << "cat,y0,y1,y2\n";
  for (const LabeledSample& s : dataset.samples) {
    for (Eigen::Index i = 0; i < s.x.size(); ++i) out << format_double(s.x[i]) << ",";
    out << s.category << "," << format_double(s.axis_angle[0]) << ","
        << format_double(s.axis_angle[1]) << "," << format_double(s.axis_angle[2]) << "\n";
  }
  if (!out) throw IoError("save_csv: write failed for " + path);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& field, std::size_t line, std::size_t column) {
  double v = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc{} || ptr != end) {
    throw ParseError("bad float '" + field + "'", line, column);
  }
  return v;
}

int parse_int(const std::string& field, std::size_t line, std::size_t column) {
  int v = 0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc{} || ptr != end) {
    throw ParseError("bad integer '" + field + "'", line, column);
  }
  return v;
}

}  // namespace

Dataset load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("load_csv: empty file " + path);

  const std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 5) throw SchemaError("load_csv: header has too few columns");
  const int input_dim = static_cast<int>(header.size()) - 4;
  for (int i = 0; i < input_dim; ++i) {
    if (header[static_cast<std::size_t>(i)] != "x" + std::to_string(i)) {
      throw SchemaError("load_csv: expected column x" + std::to_string(i) + ", got '" +
                        header[static_cast<std::size_t>(i)] + "'");
    }
  }
  const auto d = static_cast<std::size_t>(input_dim);
  if (header[d] != "cat" || header[d + 1] != "y0" || header[d + 2] != "y1" ||
      header[d + 3] != "y2") {
    throw SchemaError("load_csv: expected trailing columns cat,y0,y1,y2");
  }

  Dataset ds;
  ds.input_dim = input_dim;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != d + 4) {
      throw ParseError("expected " + std::to_string(d + 4) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no, fields.size());
    }
    LabeledSample s;
    s.x.resize(input_dim);
    for (std::size_t i = 0; i < d; ++i) {
      s.x[static_cast<Eigen::Index>(i)] = parse_double(fields[i], line_no, i + 1);
    }
    s.category = parse_int(fields[d], line_no, d + 1);
    if (s.category < 0) throw ParseError("negative category", line_no, d + 1);
    for (int i = 0; i < 3; ++i) {
      s.axis_angle[i] = parse_double(fields[d + 1 + static_cast<std::size_t>(i)], line_no,
                                     d + 2 + static_cast<std::size_t>(i));
    }
    s.rotation = so3::exp_map(s.axis_angle);
    ds.k = std::max(ds.k, s.category + 1);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace posefuse::data
