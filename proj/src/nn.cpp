#include "posefuse/nn.hpp"

#include <cmath>

#include "posefuse/errors.hpp"

namespace posefuse::nn {

Tensor2 dense_forward(const MatrixRM& weight, const Eigen::VectorXd& bias, const Tensor2& x) {
  if (x.cols() != weight.cols()) {
    throw ShapeMismatch("dense_forward: input width " + std::to_string(x.cols()) +
                        " != layer width " + std::to_string(weight.cols()));
  }
  Tensor2 y = x * weight.transpose();
  y.rowwise() += bias.transpose();
  return y;
}

DenseGrads dense_backward(const MatrixRM& weight, const Tensor2& x, const Tensor2& gy) {
  if (gy.rows() != x.rows() || gy.cols() != weight.rows()) {
    throw ShapeMismatch("dense_backward: upstream gradient shape mismatch");
  }
  DenseGrads g;
  g.gx = gy * weight;
  g.gw = gy.transpose() * x;
  g.gb = gy.colwise().sum();
  return g;
}

Tensor2 batchnorm_forward(const Tensor2& x, const Eigen::VectorXd& scale,
                          const Eigen::VectorXd& shift, const Eigen::VectorXd& running_mean,
                          const Eigen::VectorXd& running_var, double eps, bool train,
                          BatchNormCache* cache) {
  if (x.cols() != scale.size()) throw ShapeMismatch("batchnorm_forward: feature width mismatch");
  Eigen::VectorXd mean, var;
  if (train) {
    if (x.rows() < 2) throw BatchTooSmall("batchnorm_forward: train mode needs batch >= 2");
    mean = x.colwise().mean();
    var = (x.rowwise() - mean.transpose()).array().square().colwise().mean();
  } else {
    mean = running_mean;
    var = running_var;
  }
  const Eigen::VectorXd inv_std = (var.array() + eps).rsqrt();
  Tensor2 xhat = (x.rowwise() - mean.transpose()).array().rowwise() * inv_std.transpose().array();
  Tensor2 y = (xhat.array().rowwise() * scale.transpose().array()).rowwise() +
              shift.transpose().array();
  if (cache) {
    cache->xhat = xhat;
    cache->inv_std = inv_std;
    cache->batch_mean = mean;
    cache->batch_var = var;
    cache->train = train;
  }
  return y;
}

void batchnorm_update_running(Eigen::VectorXd& running_mean, Eigen::VectorXd& running_var,
                              const BatchNormCache& cache, double momentum) {
  running_mean = momentum * running_mean + (1.0 - momentum) * cache.batch_mean;
  running_var = momentum * running_var + (1.0 - momentum) * cache.batch_var;
}

BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const Eigen::VectorXd& scale,
                                  const Tensor2& gy) {
  BatchNormGrads g;
  g.gscale = (gy.array() * cache.xhat.array()).colwise().sum();
  g.gshift = gy.colwise().sum();
  const Tensor2 gxhat = gy.array().rowwise() * scale.transpose().array();
  if (!cache.train) {
    g.gx = gxhat.array().rowwise() * cache.inv_std.transpose().array();
    return g;
  }
  const double n = static_cast<double>(gy.rows());
  const Eigen::RowVectorXd sum_gxhat = gxhat.colwise().sum();
  const Eigen::RowVectorXd sum_gxhat_xhat = (gxhat.array() * cache.xhat.array()).colwise().sum();
  Tensor2 centered = gxhat * n;
  centered.rowwise() -= sum_gxhat;
  centered -= (cache.xhat.array().rowwise() * sum_gxhat_xhat.array()).matrix();
  g.gx = centered.array().rowwise() * (cache.inv_std.transpose().array() / n);
  return g;
}

Tensor2 relu(const Tensor2& x) { return x.cwiseMax(0.0); }

Tensor2 relu_backward(const Tensor2& x, const Tensor2& gy) {
  return (x.array() > 0.0).select(gy, 0.0);
}

Tensor2 pi_tanh(const Tensor2& x) { return M_PI * x.array().tanh(); }

Tensor2 pi_tanh_backward(const Tensor2& y, const Tensor2& gy) {
  // dy/dx = pi * (1 - tanh^2) = pi - y^2 / pi
  return gy.array() * (M_PI - y.array().square() / M_PI);
}

Tensor2 softmax(const Tensor2& logits) {
  Tensor2 out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    Eigen::ArrayXd e = (logits.row(i).array() - m).exp();
    out.row(i) = e / e.sum();
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string MlpLayout::weight_name(std::size_t i) const {
  return prefix + ".l" + std::to_string(i) + ".w";
}
std::string MlpLayout::bias_name(std::size_t i) const {
  return prefix + ".l" + std::to_string(i) + ".b";
}
std::string MlpLayout::bn_scale_name(std::size_t i) const {
  return prefix + ".l" + std::to_string(i) + ".bn.scale";
}
std::string MlpLayout::bn_shift_name(std::size_t i) const {
  return prefix + ".l" + std::to_string(i) + ".bn.shift";
}
std::string MlpLayout::bn_rmean_name(std::size_t i) const {
  return prefix + ".l" + std::to_string(i) + ".bn.rmean";
}
std::string MlpLayout::bn_rvar_name(std::size_t i) const {
  return prefix + ".l" + std::to_string(i) + ".bn.rvar";
}

std::vector<std::string> MlpLayout::trainable_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    names.push_back(weight_name(i));
    // the batch-norm shift absorbs a dense bias exactly, so layers feeding a
    // batch norm carry no bias parameter
    if (!layers[i].batch_norm) names.push_back(bias_name(i));
    if (layers[i].batch_norm) {
      names.push_back(bn_scale_name(i));
      names.push_back(bn_shift_name(i));
    }
  }
  return names;
}

std::vector<std::string> MlpLayout::all_names() const {
  std::vector<std::string> names = trainable_names();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].batch_norm) {
      names.push_back(bn_rmean_name(i));
      names.push_back(bn_rvar_name(i));
    }
  }
  return names;
}

void mlp_init(ParameterStore& store, const MlpLayout& layout, Rng& rng) {
  for (std::size_t i = 0; i < layout.layers.size(); ++i) {
    const LayerSpec& spec = layout.layers[i];
    const auto out = static_cast<std::uint64_t>(spec.out);
    const auto in = static_cast<std::uint64_t>(spec.in);
    Param& w = store.add(layout.weight_name(i), {out, in});
    const double bound = std::sqrt(6.0 / static_cast<double>(spec.in + spec.out));
    for (Eigen::Index k = 0; k < w.value.size(); ++k) {
      w.value[k] = rng.uniform(-bound, bound);
    }
    if (!spec.batch_norm) store.add(layout.bias_name(i), {out});
    if (spec.batch_norm) {
      store.add(layout.bn_scale_name(i), {out}).value.setOnes();
      store.add(layout.bn_shift_name(i), {out});
      store.add(layout.bn_rmean_name(i), {out});
      store.add(layout.bn_rvar_name(i), {out}).value.setOnes();
    }
  }
}

Tensor2 mlp_forward(const ParameterStore& store, const MlpLayout& layout, const Tensor2& x,
                    const ForwardOpts& opts, MlpCache* cache) {
  const std::size_t n = layout.layers.size();
  if (cache) {
    cache->inputs.assign(n, {});
    cache->preact.assign(n, {});
    cache->bn.assign(n, {});
    cache->act_input.assign(n, {});
    cache->act_output.assign(n, {});
  }
  Tensor2 h = x;
  for (std::size_t i = 0; i < n; ++i) {
    const LayerSpec& spec = layout.layers[i];
    if (cache) cache->inputs[i] = h;
    const Eigen::VectorXd bias = spec.batch_norm ? Eigen::VectorXd::Zero(spec.out)
                                                 : store.at(layout.bias_name(i)).value;
    h = dense_forward(store.at(layout.weight_name(i)).matrix(), bias, h);
    if (cache) cache->preact[i] = h;
    if (spec.batch_norm) {
      h = batchnorm_forward(h, store.at(layout.bn_scale_name(i)).value,
                            store.at(layout.bn_shift_name(i)).value,
                            store.at(layout.bn_rmean_name(i)).value,
                            store.at(layout.bn_rvar_name(i)).value, kBatchNormEps, opts.train,
                            cache ? &cache->bn[i] : nullptr);
    }
    if (spec.act != Activation::None && cache) cache->act_input[i] = h;
    switch (spec.act) {
      case Activation::None:
        break;
      case Activation::Relu:
        h = relu(h);
        break;
      case Activation::PiTanh:
        h = pi_tanh(h);
        break;
    }
    if (spec.act != Activation::None && cache) cache->act_output[i] = h;
  }
  return h;
}

Tensor2 mlp_backward(const ParameterStore& store, const MlpLayout& layout, const MlpCache& cache,
                     const Tensor2& gy, GradMap& gmap) {
  Tensor2 g = gy;
  for (std::size_t ii = layout.layers.size(); ii-- > 0;) {
    const LayerSpec& spec = layout.layers[ii];
    switch (spec.act) {
      case Activation::None:
        break;
      case Activation::Relu:
        g = relu_backward(cache.act_input[ii], g);
        break;
      case Activation::PiTanh:
        g = pi_tanh_backward(cache.act_output[ii], g);
        break;
    }
    if (spec.batch_norm) {
      BatchNormGrads bg = batchnorm_backward(cache.bn[ii], store.at(layout.bn_scale_name(ii)).value, g);
      accumulate(gmap, layout.bn_scale_name(ii), bg.gscale);
      accumulate(gmap, layout.bn_shift_name(ii), bg.gshift);
      g = std::move(bg.gx);
    }
    DenseGrads dg = dense_backward(store.at(layout.weight_name(ii)).matrix(), cache.inputs[ii], g);
    accumulate(gmap, layout.weight_name(ii), dg.gw);
    if (!spec.batch_norm) accumulate(gmap, layout.bias_name(ii), dg.gb);
    g = std::move(dg.gx);
  }
  return g;
}

void mlp_update_running(ParameterStore& store, const MlpLayout& layout, const MlpCache& cache) {
  for (std::size_t i = 0; i < layout.layers.size(); ++i) {
    if (!layout.layers[i].batch_norm || !cache.bn[i].train) continue;
    batchnorm_update_running(store.at(layout.bn_rmean_name(i)).value,
                             store.at(layout.bn_rvar_name(i)).value, cache.bn[i],
                             kBatchNormMomentum);
  }
}

GradCheckReport gradcheck(const std::function<double(const ParameterStore&)>& f,
                          ParameterStore& store, const GradMap& analytic, double h,
                          double tolerance) {
  if (!(h > 0.0)) throw InvalidRange("gradcheck: h must be positive");
  GradCheckReport report;
  report.tolerance = tolerance;
  for (const auto& [name, grad] : analytic) {
    Param& p = store.at(name);
    if (grad.size() != p.value.size()) throw ShapeMismatch("gradcheck: shape mismatch " + name);
    GradCheckEntry entry;
    entry.name = name;
    for (Eigen::Index k = 0; k < p.value.size(); ++k) {
      const double saved = p.value[k];
      p.value[k] = saved + h;
      const double fp = f(store);
      p.value[k] = saved - h;
      const double fm = f(store);
      p.value[k] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = grad[k];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (rel > entry.max_rel_err) {
        entry.max_rel_err = rel;
        entry.worst_index = static_cast<int>(k);
        entry.analytic = a;
        entry.numeric = numeric;
      }
    }
    if (entry.max_rel_err > report.max_rel_err) {
      report.max_rel_err = entry.max_rel_err;
      report.worst_name = entry.name;
      report.worst_index = entry.worst_index;
    }
    report.entries.push_back(std::move(entry));
  }
  report.pass = report.max_rel_err <= tolerance;
  return report;
}

}  // namespace posefuse::nn
