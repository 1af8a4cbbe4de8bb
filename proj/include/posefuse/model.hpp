#ifndef POSEFUSE_MODEL_HPP
#define POSEFUSE_MODEL_HPP

#include <string>
#include <vector>

#include "posefuse/nn.hpp"
#include "posefuse/so3.hpp"

namespace posefuse::model {

using nn::Tensor2;

enum class Variant { CategoryDependent, CategoryIndependent };
enum class Fusion { Weighted, Top1 };

struct ModelConfig {
  int k = 4;
  int input_dim = 64;
  std::vector<int> feature_hidden = {128};
  int feature_dim = 64;  // d
  std::vector<int> category_hidden = {64};
  std::vector<int> head_hidden = {128, 64};
  Variant variant = Variant::CategoryDependent;
  // Hidden width of the first FC layer in the category-independent variant;
  // 0 selects k * head_hidden[0], which roughly matches the total parameter
  // count of the k per-category heads.
  int independent_hidden = 0;

  void validate() const;  // throws InvalidConfig
};

struct Prediction {
  Tensor2 probabilities;              // n x k
  Tensor2 fused;                      // n x 3 axis-angle vectors
  std::vector<so3::Rotation> rotations;  // n entries
};

struct ModelCache {
  nn::MlpCache feature;
  nn::MlpCache category;
  std::vector<nn::MlpCache> heads;
  Tensor2 features;
  Tensor2 logits;
  std::vector<Tensor2> head_outputs;
};

// Shared feature network, category network and a bank of per-category 3-layer
// FC pose heads (FC-BN-ReLU, FC-BN-ReLU, FC, pi*tanh). The independent
// variant owns a single shared head whose output fills every category slot.
class Model {
 public:
  explicit Model(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }

  void init_params(nn::ParameterStore& store, Rng& rng) const;

  Tensor2 feature_forward(const nn::ParameterStore& store, const Tensor2& x,
                          const nn::ForwardOpts& opts, nn::MlpCache* cache = nullptr) const;

  Tensor2 category_logits(const nn::ParameterStore& store, const Tensor2& features,
                          const nn::ForwardOpts& opts, nn::MlpCache* cache = nullptr) const;

  // Rows of the returned tensor are valid probability vectors.
  Tensor2 category_forward(const nn::ParameterStore& store, const Tensor2& features,
                           const nn::ForwardOpts& opts, nn::MlpCache* cache = nullptr) const;

  // k tensors of shape n x 3 (shared output replicated for the independent
  // variant). Every component lies in (-pi, pi).
  std::vector<Tensor2> pose_heads_forward(const nn::ParameterStore& store,
                                          const Tensor2& features, const nn::ForwardOpts& opts,
                                          std::vector<nn::MlpCache>* caches = nullptr) const;

  Prediction predict(const nn::ParameterStore& store, const Tensor2& x, Fusion fusion) const;

  const nn::MlpLayout& feature_layout() const { return feature_; }
  const nn::MlpLayout& category_layout() const { return category_; }
  // Index is ignored for the independent variant (one shared head).
  const nn::MlpLayout& head_layout(int i) const;
  int head_count() const { return static_cast<int>(heads_.size()); }

  std::vector<std::string> feature_param_names() const { return feature_.trainable_names(); }
  std::vector<std::string> category_param_names() const { return category_.trainable_names(); }
  std::vector<std::string> pose_param_names() const;

 private:
  ModelConfig cfg_;
  nn::MlpLayout feature_;
  nn::MlpLayout category_;
  std::vector<nn::MlpLayout> heads_;  // size k, or 1 for the independent variant
};

// y_wgt = sum_i p_i * y_i
Eigen::Vector3d fuse_weighted(const std::vector<Eigen::Vector3d>& heads, const Eigen::VectorXd& p);

// y_top1 = y_argmax(p); ties break to the lowest index
Eigen::Vector3d fuse_top1(const std::vector<Eigen::Vector3d>& heads, const Eigen::VectorXd& p);

// Row i of the result fuses row i of each head output with row i of p.
Tensor2 fuse_batch(const std::vector<Tensor2>& head_outputs, const Tensor2& p, Fusion fusion);

// One-hot row extraction helper shared by fusion call sites.
std::vector<Eigen::Vector3d> head_rows(const std::vector<Tensor2>& head_outputs, Eigen::Index row);

int argmax_row(const Eigen::VectorXd& p);

}  // namespace posefuse::model

#endif
