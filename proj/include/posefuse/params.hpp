#ifndef POSEFUSE_PARAMS_HPP
#define POSEFUSE_PARAMS_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace posefuse::nn {

// Row-major batch-by-features matrix. Row-major keeps flat views and
// serialization order identical to the on-disk layout.
using Tensor2 = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixRM = Tensor2;

// One named tensor plus its Adam state. Rank 1 or 2.
struct Param {
  std::vector<std::uint64_t> dims;
  Eigen::VectorXd value;  // flat, row-major for rank 2
  Eigen::VectorXd adam_m;
  Eigen::VectorXd adam_v;
  std::uint64_t step = 0;

  std::uint64_t size() const;
  Eigen::Map<MatrixRM> matrix();
  Eigen::Map<const MatrixRM> matrix() const;
};

class ParameterStore {
 public:
  // Registers a zero-initialized tensor; throws ShapeMismatch on duplicates.
  Param& add(const std::string& name, std::vector<std::uint64_t> dims);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool has(const std::string& name) const;
  std::size_t size() const { return params_.size(); }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  bool operator==(const ParameterStore& other) const;

 private:
  std::map<std::string, Param> params_;  // name-ordered, deterministic iteration
};

using GradMap = std::map<std::string, Eigen::VectorXd>;

// grad is accumulated (summed) into gmap[name]
void accumulate(GradMap& gmap, const std::string& name, const Eigen::VectorXd& grad);
void accumulate(GradMap& gmap, const std::string& name, const MatrixRM& grad);
void scale(GradMap& gmap, double factor);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam, applied in place to every name present in grads.
// Per-parameter step count is incremented once per call.
void adam_step(ParameterStore& store, const GradMap& grads, const AdamConfig& cfg);

}  // namespace posefuse::nn

#endif
