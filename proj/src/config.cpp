#include "posefuse/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "posefuse/errors.hpp"

namespace posefuse::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw InvalidConfig("config: bad float for " + key + ": '" + v + "'");
  }
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw InvalidConfig("config: bad integer for " + key + ": '" + v + "'");
  }
  return out;
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(static_cast<int>(to_int(key, item)));
  }
  return out;
}

}  // namespace

train::ProtocolKind parse_protocol(const std::string& s) {
  if (s == "balanced") return train::ProtocolKind::Balanced;
  if (s == "pose-first" || s == "pose_first") return train::ProtocolKind::PoseFirst;
  throw InvalidConfig("unknown protocol '" + s + "' (expected balanced|pose-first)");
}

model::Fusion parse_fusion(const std::string& s) {
  if (s == "weighted") return model::Fusion::Weighted;
  if (s == "top1") return model::Fusion::Top1;
  throw InvalidConfig("unknown fusion '" + s + "' (expected weighted|top1)");
}

model::Variant parse_variant(const std::string& s) {
  if (s == "dependent") return model::Variant::CategoryDependent;
  if (s == "independent") return model::Variant::CategoryIndependent;
  throw InvalidConfig("unknown variant '" + s + "' (expected dependent|independent)");
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "run.seed") seed = static_cast<std::uint64_t>(to_int(key, value));
  else if (key == "run.out_dir") out_dir = value;
  else if (key == "run.protocol") protocol = parse_protocol(value);
  else if (key == "data.path") data_path = value;
  else if (key == "data.test_path") test_data_path = value;
  else if (key == "data.k") synth.k = static_cast<int>(to_int(key, value));
  else if (key == "data.per_category_train") synth.per_category = static_cast<int>(to_int(key, value));
  else if (key == "data.per_category_test") per_category_test = static_cast<int>(to_int(key, value));
  else if (key == "data.input_dim") synth.input_dim = static_cast<int>(to_int(key, value));
  else if (key == "data.sigma") synth.sigma = to_double(key, value);
  else if (key == "data.max_angle") synth.max_angle = to_double(key, value);
  else if (key == "data.separation") synth.separation = to_double(key, value);
  else if (key == "data.signal_scale") synth.signal_scale = to_double(key, value);
  else if (key == "data.map_seed") synth.map_seed = static_cast<std::uint64_t>(to_int(key, value));
  else if (key == "data.seed") data_seed = static_cast<std::uint64_t>(to_int(key, value));
  else if (key == "model.variant") model.variant = parse_variant(value);
  else if (key == "model.feature_hidden") model.feature_hidden = to_int_list(key, value);
  else if (key == "model.feature_dim") model.feature_dim = static_cast<int>(to_int(key, value));
  else if (key == "model.category_hidden") model.category_hidden = to_int_list(key, value);
  else if (key == "model.head_hidden") model.head_hidden = to_int_list(key, value);
  else if (key == "model.independent_hidden") model.independent_hidden = static_cast<int>(to_int(key, value));
  else if (key == "train.fusion") train.fusion = parse_fusion(value);
  else if (key == "train.lambda") train.lambda = to_double(key, value);
  else if (key == "train.batch_size") train.batch_size = static_cast<int>(to_int(key, value));
  else if (key == "train.lr") train.lr = to_double(key, value);
  else if (key == "train.joint_lr") train.joint_lr = to_double(key, value);
  else if (key == "train.epochs_pretrain") train.epochs_pretrain = static_cast<int>(to_int(key, value));
  else if (key == "train.epochs_heads") train.epochs_heads = static_cast<int>(to_int(key, value));
  else if (key == "train.epochs_oracle") train.epochs_oracle = static_cast<int>(to_int(key, value));
  else if (key == "train.epochs_category") train.epochs_category = static_cast<int>(to_int(key, value));
  else if (key == "train.epochs_joint") train.epochs_joint = static_cast<int>(to_int(key, value));
  else throw InvalidConfig("config: unknown key '" + key + "'");
}

void RunConfig::finalize() {
  model.k = synth.k;
  model.input_dim = synth.input_dim;
  if (train.lambda < 0.0) throw InvalidConfig("config: lambda must be >= 0");
  model.validate();
  synth.validate();
}

void apply_config_text(RunConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidConfig("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    cfg.set(section.empty() ? key : section + "." + key, value);
  }
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg;
  apply_config_text(cfg, ss.str());
  return cfg;
}

std::string canonical_model_config(const model::ModelConfig& cfg) {
  auto join = [](const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(v[i]);
    }
    return s;
  };
  std::ostringstream os;
  os << "k=" << cfg.k << "\n";
  os << "input_dim=" << cfg.input_dim << "\n";
  os << "feature_hidden=" << join(cfg.feature_hidden) << "\n";
  os << "feature_dim=" << cfg.feature_dim << "\n";
  os << "category_hidden=" << join(cfg.category_hidden) << "\n";
  os << "head_hidden=" << join(cfg.head_hidden) << "\n";
  os << "variant=" << (cfg.variant == model::Variant::CategoryDependent ? "dependent" : "independent") << "\n";
  os << "independent_hidden=" << cfg.independent_hidden << "\n";
  return os.str();
}

model::ModelConfig parse_model_config(const std::string& text) {
  model::ModelConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidConfig("model config echo: bad line '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "k") cfg.k = static_cast<int>(to_int(key, value));
    else if (key == "input_dim") cfg.input_dim = static_cast<int>(to_int(key, value));
    else if (key == "feature_hidden") cfg.feature_hidden = to_int_list(key, value);
    else if (key == "feature_dim") cfg.feature_dim = static_cast<int>(to_int(key, value));
    else if (key == "category_hidden") cfg.category_hidden = to_int_list(key, value);
    else if (key == "head_hidden") cfg.head_hidden = to_int_list(key, value);
    else if (key == "variant") cfg.variant = parse_variant(value);
    else if (key == "independent_hidden") cfg.independent_hidden = static_cast<int>(to_int(key, value));
    else throw InvalidConfig("model config echo: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

}  // namespace posefuse::cli
