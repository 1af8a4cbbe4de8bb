#ifndef POSEFUSE_NN_HPP
#define POSEFUSE_NN_HPP

#include <functional>
#include <string>
#include <vector>

#include "posefuse/params.hpp"
#include "posefuse/random.hpp"

namespace posefuse::nn {

// ---------------------------------------------------------------------------
// layer math (pure; parameters passed explicitly)

// y = x * W^T + b, W is out-by-in
Tensor2 dense_forward(const MatrixRM& weight, const Eigen::VectorXd& bias, const Tensor2& x);

struct DenseGrads {
  Tensor2 gx;
  MatrixRM gw;
  Eigen::VectorXd gb;
};
DenseGrads dense_backward(const MatrixRM& weight, const Tensor2& x, const Tensor2& gy);

struct BatchNormCache {
  Tensor2 xhat;
  Eigen::VectorXd inv_std;
  Eigen::VectorXd batch_mean;
  Eigen::VectorXd batch_var;  // biased
  bool train = false;
};

constexpr double kBatchNormMomentum = 0.9;
constexpr double kBatchNormEps = 1e-5;

// Train mode normalizes with batch statistics (batch >= 2 rows or
// BatchTooSmall); eval mode uses the running statistics. Pure: running
// statistics are updated separately via batchnorm_update_running.
Tensor2 batchnorm_forward(const Tensor2& x, const Eigen::VectorXd& scale,
                          const Eigen::VectorXd& shift, const Eigen::VectorXd& running_mean,
                          const Eigen::VectorXd& running_var, double eps, bool train,
                          BatchNormCache* cache);

void batchnorm_update_running(Eigen::VectorXd& running_mean, Eigen::VectorXd& running_var,
                              const BatchNormCache& cache, double momentum);

struct BatchNormGrads {
  Tensor2 gx;
  Eigen::VectorXd gscale;
  Eigen::VectorXd gshift;
};
BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const Eigen::VectorXd& scale,
                                  const Tensor2& gy);

Tensor2 relu(const Tensor2& x);
Tensor2 relu_backward(const Tensor2& x, const Tensor2& gy);

// pi * tanh(x): every output component lies in (-pi, pi)
Tensor2 pi_tanh(const Tensor2& x);
Tensor2 pi_tanh_backward(const Tensor2& y, const Tensor2& gy);  // y = pi_tanh(x)

// Row-wise, max-subtracted; rows sum to 1 and entries are strictly positive.
Tensor2 softmax(const Tensor2& logits);

// ---------------------------------------------------------------------------
// multilayer perceptron bound to named parameters in a ParameterStore

enum class Activation { None, Relu, PiTanh };

struct LayerSpec {
  int in = 0;
  int out = 0;
  bool batch_norm = false;
  Activation act = Activation::None;
};

struct MlpLayout {
  std::string prefix;
  std::vector<LayerSpec> layers;

  std::string weight_name(std::size_t i) const;
  std::string bias_name(std::size_t i) const;
  std::string bn_scale_name(std::size_t i) const;
  std::string bn_shift_name(std::size_t i) const;
  std::string bn_rmean_name(std::size_t i) const;
  std::string bn_rvar_name(std::size_t i) const;

  // weights, biases and batch-norm scale/shift (excludes running statistics)
  std::vector<std::string> trainable_names() const;
  // every parameter owned by this MLP
  std::vector<std::string> all_names() const;
};

struct ForwardOpts {
  bool train = false;
};

struct MlpCache {
  std::vector<Tensor2> inputs;       // input to each dense layer
  std::vector<Tensor2> preact;       // dense output (batch-norm input when present)
  std::vector<BatchNormCache> bn;    // per layer (unused entries empty)
  std::vector<Tensor2> act_input;    // activation input
  std::vector<Tensor2> act_output;   // activation output
};

// Weight init uniform in +/-sqrt(6/(fan_in+fan_out)), biases zero, batch-norm
// scale 1 / shift 0, running stats (0, 1).
void mlp_init(ParameterStore& store, const MlpLayout& layout, Rng& rng);

Tensor2 mlp_forward(const ParameterStore& store, const MlpLayout& layout, const Tensor2& x,
                    const ForwardOpts& opts, MlpCache* cache);

// Backward through a cached training forward. Accumulates parameter gradients
// into gmap and returns the gradient w.r.t. the MLP input.
Tensor2 mlp_backward(const ParameterStore& store, const MlpLayout& layout, const MlpCache& cache,
                     const Tensor2& gy, GradMap& gmap);

// Applies the running-statistics update for every batch-norm layer touched by
// the cached forward. Single-writer: call only from the owning training loop.
void mlp_update_running(ParameterStore& store, const MlpLayout& layout, const MlpCache& cache);

// ---------------------------------------------------------------------------
// finite-difference gradient checker

struct GradCheckEntry {
  std::string name;
  int worst_index = -1;
  double max_rel_err = 0.0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  bool pass = false;
  double tolerance = 0.0;
  double max_rel_err = 0.0;
  std::string worst_name;
  int worst_index = -1;
  std::vector<GradCheckEntry> entries;
};

// Central differences of f around the current store values, compared against
// the supplied analytic gradient with rel err |a-n| / max(|a|,|n|,1e-8).
// Only names present in `analytic` are checked. f must not mutate the store.
GradCheckReport gradcheck(const std::function<double(const ParameterStore&)>& f,
                          ParameterStore& store, const GradMap& analytic, double h,
                          double tolerance);

}  // namespace posefuse::nn

#endif
