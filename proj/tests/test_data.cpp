#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "posefuse/data.hpp"
#include "posefuse/errors.hpp"
#include "posefuse/nn.hpp"

using namespace posefuse;

namespace {

data::SynthConfig small_config() {
  data::SynthConfig cfg;
  cfg.k = 3;
  cfg.per_category = 40;
  cfg.input_dim = 16;
  cfg.sigma = 0.05;
  return cfg;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

// multinomial logistic regression on raw features; linear by construction
double linear_probe_accuracy(const data::Dataset& train, const data::Dataset& test) {
  nn::ParameterStore store;
  Rng rng(1);
  nn::MlpLayout layout;
  layout.prefix = "probe";
  layout.layers = {{train.input_dim, train.k, false, nn::Activation::None}};
  nn::mlp_init(store, layout, rng);

  nn::Tensor2 x(static_cast<Eigen::Index>(train.samples.size()), train.input_dim);
  for (std::size_t i = 0; i < train.samples.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = train.samples[i].x.transpose();
  }
  for (int epoch = 0; epoch < 200; ++epoch) {
    const nn::Tensor2 p = nn::softmax(nn::mlp_forward(store, layout, x, {}, nullptr));
    nn::Tensor2 glogits = p;
    for (std::size_t i = 0; i < train.samples.size(); ++i) {
      glogits(static_cast<Eigen::Index>(i), train.samples[i].category) -= 1.0;
    }
    glogits /= static_cast<double>(train.samples.size());
    nn::MlpCache cache;
    nn::mlp_forward(store, layout, x, {}, &cache);
    nn::GradMap grads;
    nn::mlp_backward(store, layout, cache, glogits, grads);
    nn::adam_step(store, grads, {.lr = 0.05});
  }

  int correct = 0;
  for (const auto& s : test.samples) {
    nn::Tensor2 xi = s.x.transpose();
    const nn::Tensor2 logits = nn::mlp_forward(store, layout, xi, {}, nullptr);
    Eigen::Index best;
    logits.row(0).maxCoeff(&best);
    if (static_cast<int>(best) == s.category) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.samples.size());
}

}  // namespace

TEST_CASE("generation is deterministic and balanced") {
  const auto cfg = small_config();
  const data::Dataset a = data::generate(cfg, 5);
  const data::Dataset b = data::generate(cfg, 5);
  REQUIRE(a.samples.size() == b.samples.size());
  CHECK(a.samples.size() == 120);
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK((a.samples[i].x - b.samples[i].x).norm() == 0.0);
    CHECK((a.samples[i].axis_angle - b.samples[i].axis_angle).norm() == 0.0);
    CHECK(a.samples[i].category == b.samples[i].category);
  }
  std::vector<int> counts(3, 0);
  for (const auto& s : a.samples) counts[static_cast<std::size_t>(s.category)]++;
  CHECK(counts == std::vector<int>{40, 40, 40});

  const data::Dataset c = data::generate(cfg, 6);
  bool any_different = false;
  for (std::size_t i = 0; i < a.samples.size() && !any_different; ++i) {
    if ((a.samples[i].x - c.samples[i].x).norm() > 0.0) any_different = true;
  }
  CHECK(any_different);
}

TEST_CASE("generated poses satisfy the canonical-range invariants") {
  const auto cfg = small_config();
  const data::Dataset ds = data::generate(cfg, 11);
  for (const auto& s : ds.samples) {
    CHECK(s.axis_angle.norm() <= cfg.max_angle);
    CHECK(s.axis_angle.norm() < M_PI);
    CHECK((so3::exp_map(s.axis_angle) - s.rotation).norm() <= 1e-12);
    CHECK(so3::is_rotation(s.rotation));
    CHECK((so3::log_map(s.rotation) - s.axis_angle).norm() <= 1e-9);
  }
}

TEST_CASE("a linear probe separates the categories") {
  data::SynthConfig cfg;  // standard-benchmark geometry at reduced count
  cfg.k = 4;
  cfg.per_category = 150;
  cfg.input_dim = 64;
  cfg.sigma = 0.05;
  const data::Dataset train = data::generate(cfg, 42);
  data::SynthConfig test_cfg = cfg;
  test_cfg.per_category = 50;
  const data::Dataset test = data::generate(test_cfg, 43);
  CHECK(linear_probe_accuracy(train, test) >= 0.95);
}

TEST_CASE("jitter composes a bounded rotation and keeps the label") {
  const auto cfg = small_config();
  const data::SynthGenerator gen(cfg);
  const data::Dataset ds = gen.generate(3);
  Rng rng(7);

  const data::LabeledSample& s = ds.samples[5];
  const data::LabeledSample unchanged = gen.jitter(s, rng, 0.0);
  CHECK((unchanged.x - s.x).norm() == 0.0);
  CHECK((unchanged.axis_angle - s.axis_angle).norm() == 0.0);

  for (int i = 0; i < 200; ++i) {
    const auto& base = ds.samples[static_cast<std::size_t>(i) % ds.samples.size()];
    const data::LabeledSample j = gen.jitter(base, rng, 5.0);
    CHECK(j.category == base.category);
    CHECK(so3::viewpoint_error_deg(base.rotation, j.rotation) <= 5.0 + 1e-9);
    CHECK(j.axis_angle.norm() < M_PI - 1e-3);
    CHECK((so3::exp_map(j.axis_angle) - j.rotation).norm() <= 1e-12);
  }

  CHECK_THROWS_AS(gen.jitter(s, rng, 11.0), InvalidRange);
  CHECK_THROWS_AS(gen.jitter(s, rng, -1.0), InvalidRange);
}

TEST_CASE("csv round-trip is lossless") {
  const auto cfg = small_config();
  const data::Dataset ds = data::generate(cfg, 9);
  const std::string path = temp_path("posefuse_roundtrip.csv");
  data::save_csv(ds, path);
  const data::Dataset back = data::load_csv(path);

  REQUIRE(back.samples.size() == ds.samples.size());
  CHECK(back.input_dim == ds.input_dim);
  CHECK(back.k == ds.k);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    CHECK((back.samples[i].x - ds.samples[i].x).norm() == 0.0);  // 17 sig digits round-trip
    CHECK((back.samples[i].axis_angle - ds.samples[i].axis_angle).norm() == 0.0);
    CHECK((back.samples[i].rotation - ds.samples[i].rotation).norm() <= 1e-15);
    CHECK(back.samples[i].category == ds.samples[i].category);
  }
  std::filesystem::remove(path);
}

TEST_CASE("csv schema and parse errors") {
  const std::string path = temp_path("posefuse_bad.csv");

  {
    std::ofstream out(path);
    out << "x0,x1,wrong,y0,y1,y2\n";
  }
  CHECK_THROWS_AS(data::load_csv(path), SchemaError);

  {
    std::ofstream out(path);
    out << "x0,x1,cat,y0,y1,y2\n";
    out << "0.5,0.25,1,0.1,0.2,0.3\n";
    out << "0.5,oops,1,0.1,0.2,0.3\n";
  }
  try {
    data::load_csv(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 3);
    CHECK(e.column == 2);
  }

  {
    std::ofstream out(path);
    out << "x0,x1,cat,y0,y1,y2\n";
    out << "0.5,0.25,1,0.1,0.2\n";  // truncated row
  }
  CHECK_THROWS_AS(data::load_csv(path), ParseError);

  CHECK_THROWS_AS(data::load_csv(temp_path("posefuse_missing_file.csv")), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("invalid synthesis configs are rejected") {
  data::SynthConfig cfg = small_config();
  cfg.sigma = -0.1;
  CHECK_THROWS_AS(data::generate(cfg, 1), InvalidConfig);
  cfg = small_config();
  cfg.max_angle = M_PI;
  CHECK_THROWS_AS(data::generate(cfg, 1), InvalidConfig);
  cfg = small_config();
  cfg.per_category = 0;
  CHECK_THROWS_AS(data::generate(cfg, 1), InvalidConfig);
}
