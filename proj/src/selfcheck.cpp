#include "posefuse/selfcheck.hpp"

#include <cmath>
#include <sstream>

#include "posefuse/errors.hpp"
#include "posefuse/losses.hpp"
#include "posefuse/model.hpp"
#include "posefuse/train.hpp"

namespace posefuse::selfcheck {

using nn::GradMap;
using nn::ParameterStore;
using nn::Tensor2;

namespace {

constexpr double kStep = 1e-5;
constexpr double kLayerTol = 1e-6;
constexpr double kLossTol = 1e-4;
constexpr double kReluMargin = 1e-4;

Eigen::Map<Tensor2> param_matrix(ParameterStore& store, const std::string& name) {
  nn::Param& p = store.at(name);
  return Eigen::Map<Tensor2>(p.value.data(), static_cast<Eigen::Index>(p.dims[0]),
                             static_cast<Eigen::Index>(p.dims[1]));
}

// f = sum(C .* mlp(x)) with both the input and the layer parameters treated
// as checkable coordinates.
CheckResult check_layer(const std::string& name, const nn::LayerSpec& spec, int batch,
                        std::uint64_t seed) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(seed + attempt);
    nn::MlpLayout layout;
    layout.prefix = "layer";
    layout.layers = {spec};
    ParameterStore store;
    nn::mlp_init(store, layout, rng);
    nn::Param& xp = store.add("x", {static_cast<std::uint64_t>(batch),
                                    static_cast<std::uint64_t>(spec.in)});
    for (Eigen::Index i = 0; i < xp.value.size(); ++i) xp.value[i] = rng.normal();
    Tensor2 proj(batch, spec.out);
    for (Eigen::Index i = 0; i < proj.size(); ++i) proj.data()[i] = rng.normal();

    nn::MlpCache cache;
    const nn::ForwardOpts opts{.train = true};
    const Tensor2 x0 = param_matrix(store, "x");
    nn::mlp_forward(store, layout, x0, opts, &cache);
    if (spec.act == nn::Activation::Relu &&
        cache.act_input[0].array().abs().minCoeff() < kReluMargin) {
      continue;  // resample away from the kink
    }

    GradMap analytic;
    const Tensor2 gx = nn::mlp_backward(store, layout, cache, proj, analytic);
    nn::accumulate(analytic, "x", gx);

    auto f = [&](const ParameterStore& s) {
      const nn::Param& xq = s.at("x");
      const Eigen::Map<const Tensor2> xm(xq.value.data(), batch, spec.in);
      const Tensor2 y = nn::mlp_forward(s, layout, xm, opts, nullptr);
      return (y.array() * proj.array()).sum();
    };
    CheckResult result;
    result.name = name;
    result.tolerance = kLayerTol;
    result.report = nn::gradcheck(f, store, analytic, kStep, kLayerTol);
    return result;
  }
}

CheckResult check_softmax_ce(std::uint64_t seed) {
  Rng rng(seed);
  const int batch = 6;
  const int k = 4;
  ParameterStore store;
  nn::Param& logits = store.add("logits", {static_cast<std::uint64_t>(batch),
                                           static_cast<std::uint64_t>(k)});
  for (Eigen::Index i = 0; i < logits.value.size(); ++i) logits.value[i] = rng.normal();
  std::vector<int> cats(batch);
  for (int i = 0; i < batch; ++i) cats[static_cast<std::size_t>(i)] = static_cast<int>(rng.bounded(k));

  auto f = [&](const ParameterStore& s) {
    const Eigen::Map<const Tensor2> lm(s.at("logits").value.data(), batch, k);
    const Tensor2 p = nn::softmax(lm);
    double total = 0.0;
    for (int i = 0; i < batch; ++i) {
      total += loss::cross_entropy(p.row(i).transpose(), cats[static_cast<std::size_t>(i)]).value;
    }
    return total / batch;
  };

  const Tensor2 p = nn::softmax(param_matrix(store, "logits"));
  Tensor2 glogits(batch, k);
  for (int i = 0; i < batch; ++i) {
    glogits.row(i) =
        loss::cross_entropy(p.row(i).transpose(), cats[static_cast<std::size_t>(i)]).grad_logits.transpose() /
        batch;
  }
  GradMap analytic;
  nn::accumulate(analytic, "logits", glogits);

  CheckResult result;
  result.name = "softmax_cross_entropy";
  result.tolerance = kLayerTol;
  result.report = nn::gradcheck(f, store, analytic, kStep, kLayerTol);
  return result;
}

CheckResult check_pose_loss(std::uint64_t seed) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(seed + attempt);
    ParameterStore store;
    nn::Param& yp = store.add("y", {3});
    for (int i = 0; i < 3; ++i) yp.value[i] = rng.uniform(-1.2, 1.2);
    const so3::Rotation r_star = so3::random_rotation(rng, 2.5);

    const Eigen::Vector3d y0 = yp.value.head<3>();
    const auto pl = loss::pose_loss(y0, r_star);
    if (pl.value < 0.05 || pl.value > M_PI - 0.05) continue;  // stay off the clamp zones

    GradMap analytic;
    nn::accumulate(analytic, "y", Eigen::VectorXd(pl.grad));
    auto f = [&](const ParameterStore& s) {
      const Eigen::Vector3d y = s.at("y").value.head<3>();
      return loss::pose_loss(y, r_star).value;
    };
    CheckResult result;
    result.name = "pose_loss";
    result.tolerance = kLossTol;
    result.report = nn::gradcheck(f, store, analytic, kStep, kLossTol);
    return result;
  }
}

CheckResult check_joint_objective(std::uint64_t seed) {
  model::ModelConfig cfg;
  cfg.k = 3;
  cfg.input_dim = 10;
  cfg.feature_hidden = {16};
  cfg.feature_dim = 8;
  cfg.category_hidden = {};
  cfg.head_hidden = {12, 6};
  const model::Model m(cfg);
  const double lambda = 0.1;
  const int batch = 9;

  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(seed + attempt);
    ParameterStore store;
    m.init_params(store, rng);

    Tensor2 x(batch, cfg.input_dim);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    std::vector<int> cats(batch);
    std::vector<so3::Rotation> rots(batch);
    std::vector<const so3::Rotation*> targets(batch);
    for (int i = 0; i < batch; ++i) {
      const auto b = static_cast<std::size_t>(i);
      cats[b] = i % cfg.k;
      const Eigen::Vector3d axis = so3::random_axis_angle(rng, 1.0).normalized();
      rots[b] = so3::exp_map(rng.uniform(0.3, 2.7) * axis);
      targets[b] = &rots[b];
    }

    GradMap analytic;
    const train::JointPass pass =
        train::joint_pass(m, store, x, cats, targets, model::Fusion::Weighted, lambda, &analytic);

    // margins: ReLU preactivations off the kink, relative angles off the clamp
    bool clean = true;
    for (const auto& c : {pass.feature, pass.category}) {
      for (const auto& a : c.act_input) {
        if (a.size() && a.array().abs().minCoeff() < kReluMargin) clean = false;
      }
    }
    for (const auto& hc : pass.heads) {
      for (const auto& a : hc.act_input) {
        if (a.size() && a.array().abs().minCoeff() < kReluMargin) clean = false;
      }
    }
    if (pass.pose_mean < 0.05 || pass.pose_mean > M_PI - 0.1) clean = false;
    if (!clean) continue;

    auto f = [&](const ParameterStore& s) {
      const train::JointPass p =
          train::joint_pass(m, s, x, cats, targets, model::Fusion::Weighted, lambda, nullptr);
      return p.pose_mean + lambda * p.cat_mean;
    };
    CheckResult result;
    result.name = "joint_objective";
    result.tolerance = kLossTol;
    result.report = nn::gradcheck(f, store, analytic, kStep, kLossTol);
    return result;
  }
}

}  // namespace

std::string SuiteResult::summary() const {
  std::ostringstream os;
  for (const auto& c : checks) {
    os << (c.report.pass ? "ok  " : "FAIL") << "  " << c.name
       << "  max_rel_err=" << c.report.max_rel_err << "  tol=" << c.tolerance;
    if (!c.report.worst_name.empty()) {
      os << "  worst=" << c.report.worst_name << "[" << c.report.worst_index << "]";
    }
    os << "\n";
  }
  return os.str();
}

SuiteResult run_gradcheck_suite(bool inject_fault) {
  SuiteResult suite;

  std::vector<CheckResult> checks;
  checks.push_back(check_layer("dense", {7, 5, false, nn::Activation::None}, 4, 11));
  checks.push_back(check_layer("dense_relu", {7, 5, false, nn::Activation::Relu}, 4, 12));
  checks.push_back(check_layer("dense_batchnorm", {6, 5, true, nn::Activation::None}, 8, 13));
  checks.push_back(check_layer("dense_pi_tanh", {6, 3, false, nn::Activation::PiTanh}, 4, 14));
  checks.push_back(check_softmax_ce(15));
  checks.push_back(check_pose_loss(16));
  checks.push_back(check_joint_objective(17));

  if (inject_fault) {
    // corrupt one analytic coordinate of a fresh dense check
    Rng rng(21);
    nn::MlpLayout layout;
    layout.prefix = "layer";
    layout.layers = {{4, 3, false, nn::Activation::None}};
    ParameterStore store;
    nn::mlp_init(store, layout, rng);
    nn::Param& xp = store.add("x", {2, 4});
    for (Eigen::Index i = 0; i < xp.value.size(); ++i) xp.value[i] = rng.normal();
    Tensor2 proj(2, 3);
    for (Eigen::Index i = 0; i < proj.size(); ++i) proj.data()[i] = rng.normal();
    nn::MlpCache cache;
    const nn::ForwardOpts opts{.train = true};
    const Tensor2 x0 = Eigen::Map<Tensor2>(store.at("x").value.data(), 2, 4);
    nn::mlp_forward(store, layout, x0, opts, &cache);
    GradMap analytic;
    nn::mlp_backward(store, layout, cache, proj, analytic);
    analytic.at("layer.l0.w")[0] += 0.25;  // the injected fault
    auto f = [&](const ParameterStore& s) {
      const Eigen::Map<const Tensor2> xm(s.at("x").value.data(), 2, 4);
      return (nn::mlp_forward(s, layout, xm, opts, nullptr).array() * proj.array()).sum();
    };
    CheckResult faulty;
    faulty.name = "injected_fault";
    faulty.tolerance = kLayerTol;
    faulty.report = nn::gradcheck(f, store, analytic, kStep, kLayerTol);
    checks.push_back(std::move(faulty));
  }

  for (auto& c : checks) {
    if (!c.report.pass) {
      suite.pass = false;
      for (const auto& e : c.report.entries) {
        if (e.max_rel_err > c.tolerance) {
          suite.failing.push_back(c.name + ": " + e.name + "[" + std::to_string(e.worst_index) +
                                  "] rel_err=" + std::to_string(e.max_rel_err));
        }
      }
    }
    suite.checks.push_back(std::move(c));
  }
  return suite;
}

}  // namespace posefuse::selfcheck
