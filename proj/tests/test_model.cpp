#include <cmath>

#include "doctest.h"
#include "posefuse/errors.hpp"
#include "posefuse/model.hpp"

using namespace posefuse;
using model::Fusion;
using model::Model;
using model::ModelConfig;
using model::Variant;
using nn::Tensor2;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.k = 3;
  cfg.input_dim = 10;
  cfg.feature_hidden = {16};
  cfg.feature_dim = 8;
  cfg.category_hidden = {};
  cfg.head_hidden = {12, 6};
  return cfg;
}

Tensor2 random_tensor(Rng& rng, int rows, int cols) {
  Tensor2 t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.normal();
  return t;
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig bad = tiny_config();
  bad.k = 1;
  CHECK_THROWS_AS(Model{bad}, InvalidConfig);
  bad = tiny_config();
  bad.head_hidden = {5};
  CHECK_THROWS_AS(Model{bad}, InvalidConfig);
}

TEST_CASE("feature and category forward contracts") {
  const Model m(tiny_config());
  nn::ParameterStore store;
  Rng rng(1);
  m.init_params(store, rng);

  Tensor2 x = random_tensor(rng, 7, 10);
  const Tensor2 f1 = m.feature_forward(store, x, {.train = false});
  CHECK(f1.rows() == 7);
  CHECK(f1.cols() == 8);
  const Tensor2 f2 = m.feature_forward(store, x, {.train = false});
  CHECK((f1 - f2).norm() == 0.0);  // bitwise-stable

  const Tensor2 p = m.category_forward(store, f1, {.train = false});
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    CHECK(std::abs(p.row(i).sum() - 1.0) <= 1e-9);
    CHECK((p.row(i).array() >= 0.0).all());
  }

  Tensor2 bad = random_tensor(rng, 3, 4);
  CHECK_THROWS_AS(m.feature_forward(store, bad, {.train = false}), ShapeMismatch);
  CHECK_THROWS_AS(m.category_logits(store, bad, {.train = false}), ShapeMismatch);
}

TEST_CASE("identity-initialized single feature layer is a passthrough") {
  ModelConfig cfg = tiny_config();
  cfg.feature_hidden = {};
  cfg.feature_dim = cfg.input_dim;
  const Model m(cfg);
  nn::ParameterStore store;
  Rng rng(2);
  m.init_params(store, rng);
  // overwrite the single dense layer with identity weights
  nn::Param& w = store.at("fn.l0.w");
  Eigen::Map<Tensor2>(w.value.data(), cfg.input_dim, cfg.input_dim).setIdentity();
  store.at("fn.l0.b").value.setZero();

  Tensor2 x = random_tensor(rng, 4, cfg.input_dim).cwiseAbs();  // positive: ReLU passes through
  const Tensor2 f = m.feature_forward(store, x, {.train = false});
  CHECK((f - x).norm() == 0.0);
}

TEST_CASE("pose heads: bounds, identical weights, independent replication") {
  const Model m(tiny_config());
  nn::ParameterStore store;
  Rng rng(3);
  m.init_params(store, rng);

  Tensor2 x = random_tensor(rng, 6, 10);
  const Tensor2 feat = m.feature_forward(store, x, {.train = false});
  const auto heads = m.pose_heads_forward(store, feat, {.train = false});
  CHECK(heads.size() == 3);
  for (const auto& h : heads) {
    CHECK(h.cols() == 3);
    CHECK((h.array().abs() < M_PI).all());
  }

  // two heads with identical weights give identical outputs
  for (const auto& name : m.head_layout(1).all_names()) {
    std::string src = name;
    src.replace(0, 3, "pn0");
    store.at(name).value = store.at(src).value;
  }
  const auto heads2 = m.pose_heads_forward(store, feat, {.train = false});
  CHECK((heads2[0] - heads2[1]).norm() == 0.0);

  ModelConfig icfg = tiny_config();
  icfg.variant = Variant::CategoryIndependent;
  const Model mi(icfg);
  nn::ParameterStore istore;
  Rng irng(4);
  mi.init_params(istore, irng);
  const Tensor2 ifeat = mi.feature_forward(istore, x, {.train = false});
  const auto iheads = mi.pose_heads_forward(istore, ifeat, {.train = false});
  CHECK(iheads.size() == 3);
  CHECK((iheads[0] - iheads[1]).norm() == 0.0);
  CHECK((iheads[0] - iheads[2]).norm() == 0.0);
  // the shared first hidden layer is k times wider by default
  CHECK(istore.at("pn.l0.w").dims[0] == 3 * 12);
}

TEST_CASE("weighted fusion identities") {
  std::vector<Eigen::Vector3d> heads = {{1, 0, 0}, {0, 1, 0}};
  Eigen::VectorXd p(2);
  p << 0.25, 0.75;
  const Eigen::Vector3d y = model::fuse_weighted(heads, p);
  CHECK(y.x() == 0.25);
  CHECK(y.y() == 0.75);
  CHECK(y.z() == 0.0);

  // delta distribution selects exactly one head, bitwise
  Eigen::VectorXd delta(2);
  delta << 0.0, 1.0;
  const Eigen::Vector3d sel = model::fuse_weighted(heads, delta);
  CHECK(sel == heads[1]);
  CHECK(model::fuse_top1(heads, delta) == heads[1]);

  // all heads equal: any p returns that point
  std::vector<Eigen::Vector3d> same = {{0.3, -0.2, 0.9}, {0.3, -0.2, 0.9}};
  Eigen::VectorXd q(2);
  q << 0.6, 0.4;
  CHECK((model::fuse_weighted(same, q) - same[0]).norm() < 1e-15);

  Eigen::VectorXd wrong(3);
  wrong << 0.2, 0.3, 0.5;
  CHECK_THROWS_AS(model::fuse_weighted(heads, wrong), ShapeMismatch);
}

TEST_CASE("weighted fusion stays inside the per-component head bound") {
  Rng rng(5);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<Eigen::Vector3d> heads;
    double head_max = 0.0;
    for (int i = 0; i < 4; ++i) {
      Eigen::Vector3d h(M_PI * std::tanh(rng.normal()), M_PI * std::tanh(rng.normal()),
                        M_PI * std::tanh(rng.normal()));
      head_max = std::max(head_max, h.cwiseAbs().maxCoeff());
      heads.push_back(h);
    }
    Eigen::VectorXd p(4);
    for (int i = 0; i < 4; ++i) p[i] = rng.uniform();
    p /= p.sum();
    const Eigen::Vector3d y = model::fuse_weighted(heads, p);
    CHECK(y.cwiseAbs().maxCoeff() <= head_max + 1e-12);
    CHECK(y.cwiseAbs().maxCoeff() < M_PI);
  }
}

TEST_CASE("top-1 fusion: ties, selection, rescaling invariance") {
  std::vector<Eigen::Vector3d> heads = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  Eigen::VectorXd uniform = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
  CHECK(model::fuse_top1(heads, uniform) == heads[0]);  // tie-break to lowest index

  Eigen::VectorXd p(3);
  p << 0.2, 0.5, 0.3;
  CHECK(model::fuse_top1(heads, p) == heads[1]);

  // any argmax-preserving rescaling selects the same head bitwise
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd q(3);
    for (int i = 0; i < 3; ++i) q[i] = rng.uniform(0.01, 1.0);
    const Eigen::Vector3d base = model::fuse_top1(heads, q);
    Eigen::VectorXd scaled = q * rng.uniform(0.1, 10.0);
    CHECK(model::fuse_top1(heads, scaled) == base);
    Eigen::VectorXd powed = q.array().pow(2.0);  // strictly monotone on positives
    CHECK(model::fuse_top1(heads, powed) == base);
  }
}

TEST_CASE("predict applies the exponential map to the fused vector") {
  const Model m(tiny_config());
  nn::ParameterStore store;
  Rng rng(7);
  m.init_params(store, rng);
  Tensor2 x = random_tensor(rng, 5, 10);

  const auto pred = m.predict(store, x, Fusion::Weighted);
  CHECK(pred.probabilities.rows() == 5);
  CHECK(pred.fused.rows() == 5);
  CHECK(pred.rotations.size() == 5);
  for (Eigen::Index i = 0; i < 5; ++i) {
    CHECK(so3::is_rotation(pred.rotations[static_cast<std::size_t>(i)]));
    const so3::Rotation expected = so3::exp_map(pred.fused.row(i).transpose());
    CHECK((pred.rotations[static_cast<std::size_t>(i)] - expected).norm() == 0.0);
  }

  // weighted and top1 agree when the argmax weight is 1 (delta distributions
  // cannot come out of a softmax, so drive fusion directly)
  const Tensor2 feat = m.feature_forward(store, x, {.train = false});
  const auto heads = m.pose_heads_forward(store, feat, {.train = false});
  Tensor2 delta = Tensor2::Zero(5, 3);
  for (Eigen::Index i = 0; i < 5; ++i) delta(i, 2) = 1.0;
  const Tensor2 fw = model::fuse_batch(heads, delta, Fusion::Weighted);
  const Tensor2 ft = model::fuse_batch(heads, delta, Fusion::Top1);
  CHECK((fw - ft).norm() == 0.0);
  CHECK((fw - heads[2]).norm() == 0.0);
}
