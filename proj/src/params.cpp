#include "posefuse/params.hpp"

#include <cmath>

#include "posefuse/errors.hpp"

namespace posefuse::nn {

std::uint64_t Param::size() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

Eigen::Map<MatrixRM> Param::matrix() {
  const auto rows = static_cast<Eigen::Index>(dims.size() == 2 ? dims[0] : 1);
  const auto cols = static_cast<Eigen::Index>(dims.size() == 2 ? dims[1] : dims[0]);
  return Eigen::Map<MatrixRM>(value.data(), rows, cols);
}

Eigen::Map<const MatrixRM> Param::matrix() const {
  const auto rows = static_cast<Eigen::Index>(dims.size() == 2 ? dims[0] : 1);
  const auto cols = static_cast<Eigen::Index>(dims.size() == 2 ? dims[1] : dims[0]);
  return Eigen::Map<const MatrixRM>(value.data(), rows, cols);
}

Param& ParameterStore::add(const std::string& name, std::vector<std::uint64_t> dims) {
  if (params_.count(name)) {
    throw ShapeMismatch("parameter already registered: " + name);
  }
  Param p;
  p.dims = std::move(dims);
  const auto n = static_cast<Eigen::Index>(p.size());
  p.value = Eigen::VectorXd::Zero(n);
  p.adam_m = Eigen::VectorXd::Zero(n);
  p.adam_v = Eigen::VectorXd::Zero(n);
  return params_.emplace(name, std::move(p)).first->second;
}

Param& ParameterStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ShapeMismatch("unknown parameter: " + name);
  return it->second;
}

const Param& ParameterStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ShapeMismatch("unknown parameter: " + name);
  return it->second;
}

bool ParameterStore::has(const std::string& name) const { return params_.count(name) != 0; }

bool ParameterStore::operator==(const ParameterStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  auto it = params_.begin();
  auto jt = other.params_.begin();
  for (; it != params_.end(); ++it, ++jt) {
    if (it->first != jt->first) return false;
    const Param& a = it->second;
    const Param& b = jt->second;
    if (a.dims != b.dims || a.step != b.step) return false;
    if (a.value != b.value || a.adam_m != b.adam_m || a.adam_v != b.adam_v) return false;
  }
  return true;
}

void accumulate(GradMap& gmap, const std::string& name, const Eigen::VectorXd& grad) {
  auto it = gmap.find(name);
  if (it == gmap.end()) {
    gmap.emplace(name, grad);
  } else {
    if (it->second.size() != grad.size()) throw ShapeMismatch("gradient shape mismatch: " + name);
    it->second += grad;
  }
}

void accumulate(GradMap& gmap, const std::string& name, const MatrixRM& grad) {
  accumulate(gmap, name, Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(grad.data(), grad.size())));
}

void scale(GradMap& gmap, double factor) {
  for (auto& [name, g] : gmap) g *= factor;
}

void adam_step(ParameterStore& store, const GradMap& grads, const AdamConfig& cfg) {
  for (const auto& [name, g] : grads) {
    Param& p = store.at(name);
    if (g.size() != p.value.size()) {
      throw ShapeMismatch("adam_step: gradient shape mismatch for " + name);
    }
    p.step += 1;
    p.adam_m = cfg.beta1 * p.adam_m + (1.0 - cfg.beta1) * g;
    p.adam_v = cfg.beta2 * p.adam_v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p.step));
    const Eigen::ArrayXd m_hat = p.adam_m.array() / c1;
    const Eigen::ArrayXd v_hat = p.adam_v.array() / c2;
    p.value.array() -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
  }
}

}  // namespace posefuse::nn
