#include "posefuse/model.hpp"

#include "posefuse/errors.hpp"

namespace posefuse::model {

void ModelConfig::validate() const {
  if (k < 2) throw InvalidConfig("ModelConfig: k must be >= 2");
  if (input_dim < 1 || feature_dim < 1) throw InvalidConfig("ModelConfig: widths must be >= 1");
  for (int w : feature_hidden)
    if (w < 1) throw InvalidConfig("ModelConfig: feature widths must be >= 1");
  for (int w : category_hidden)
    if (w < 1) throw InvalidConfig("ModelConfig: category widths must be >= 1");
  if (head_hidden.size() != 2 || head_hidden[0] < 1 || head_hidden[1] < 1)
    throw InvalidConfig("ModelConfig: pose heads take exactly two hidden widths");
  if (independent_hidden < 0) throw InvalidConfig("ModelConfig: independent_hidden must be >= 0");
}

namespace {

nn::MlpLayout make_feature_layout(const ModelConfig& cfg) {
  nn::MlpLayout layout;
  layout.prefix = "fn";
  int in = cfg.input_dim;
  for (int w : cfg.feature_hidden) {
    layout.layers.push_back({in, w, false, nn::Activation::Relu});
    in = w;
  }
  layout.layers.push_back({in, cfg.feature_dim, false, nn::Activation::Relu});
  return layout;
}

nn::MlpLayout make_category_layout(const ModelConfig& cfg) {
  nn::MlpLayout layout;
  layout.prefix = "cn";
  int in = cfg.feature_dim;
  for (int w : cfg.category_hidden) {
    layout.layers.push_back({in, w, false, nn::Activation::Relu});
    in = w;
  }
  layout.layers.push_back({in, cfg.k, false, nn::Activation::None});  // logits
  return layout;
}

nn::MlpLayout make_head_layout(const ModelConfig& cfg, const std::string& prefix, int h1) {
  nn::MlpLayout layout;
  layout.prefix = prefix;
  layout.layers.push_back({cfg.feature_dim, h1, true, nn::Activation::Relu});
  layout.layers.push_back({h1, cfg.head_hidden[1], true, nn::Activation::Relu});
  layout.layers.push_back({cfg.head_hidden[1], 3, false, nn::Activation::PiTanh});
  return layout;
}

}  // namespace

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  feature_ = make_feature_layout(cfg_);
  category_ = make_category_layout(cfg_);
  if (cfg_.variant == Variant::CategoryDependent) {
    for (int i = 0; i < cfg_.k; ++i) {
      heads_.push_back(make_head_layout(cfg_, "pn" + std::to_string(i), cfg_.head_hidden[0]));
    }
  } else {
    const int h1 = cfg_.independent_hidden > 0 ? cfg_.independent_hidden
                                               : cfg_.k * cfg_.head_hidden[0];
    heads_.push_back(make_head_layout(cfg_, "pn", h1));
  }
}

void Model::init_params(nn::ParameterStore& store, Rng& rng) const {
  nn::mlp_init(store, feature_, rng);
  nn::mlp_init(store, category_, rng);
  for (const auto& head : heads_) nn::mlp_init(store, head, rng);
}

Tensor2 Model::feature_forward(const nn::ParameterStore& store, const Tensor2& x,
                               const nn::ForwardOpts& opts, nn::MlpCache* cache) const {
  if (x.cols() != cfg_.input_dim) {
    throw ShapeMismatch("feature_forward: expected input width " +
                        std::to_string(cfg_.input_dim) + ", got " + std::to_string(x.cols()));
  }
  return nn::mlp_forward(store, feature_, x, opts, cache);
}

Tensor2 Model::category_logits(const nn::ParameterStore& store, const Tensor2& features,
                               const nn::ForwardOpts& opts, nn::MlpCache* cache) const {
  if (features.cols() != cfg_.feature_dim) {
    throw ShapeMismatch("category_logits: expected feature width " +
                        std::to_string(cfg_.feature_dim));
  }
  return nn::mlp_forward(store, category_, features, opts, cache);
}

Tensor2 Model::category_forward(const nn::ParameterStore& store, const Tensor2& features,
                                const nn::ForwardOpts& opts, nn::MlpCache* cache) const {
  return nn::softmax(category_logits(store, features, opts, cache));
}

std::vector<Tensor2> Model::pose_heads_forward(const nn::ParameterStore& store,
                                               const Tensor2& features,
                                               const nn::ForwardOpts& opts,
                                               std::vector<nn::MlpCache>* caches) const {
  if (features.cols() != cfg_.feature_dim) {
    throw ShapeMismatch("pose_heads_forward: expected feature width " +
                        std::to_string(cfg_.feature_dim));
  }
  if (caches) caches->assign(heads_.size(), {});
  std::vector<Tensor2> outputs;
  outputs.reserve(cfg_.k);
  if (cfg_.variant == Variant::CategoryDependent) {
    for (std::size_t i = 0; i < heads_.size(); ++i) {
      outputs.push_back(
          nn::mlp_forward(store, heads_[i], features, opts, caches ? &(*caches)[i] : nullptr));
    }
  } else {
    Tensor2 shared =
        nn::mlp_forward(store, heads_[0], features, opts, caches ? &(*caches)[0] : nullptr);
    for (int i = 0; i < cfg_.k; ++i) outputs.push_back(shared);
  }
  return outputs;
}

Prediction Model::predict(const nn::ParameterStore& store, const Tensor2& x, Fusion fusion) const {
  const nn::ForwardOpts opts{.train = false};
  const Tensor2 features = feature_forward(store, x, opts);
  Prediction pred;
  pred.probabilities = category_forward(store, features, opts);
  pred.fused = fuse_batch(pose_heads_forward(store, features, opts), pred.probabilities, fusion);
  pred.rotations.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < pred.fused.rows(); ++i) {
    pred.rotations.push_back(so3::exp_map(pred.fused.row(i).transpose()));
  }
  return pred;
}

const nn::MlpLayout& Model::head_layout(int i) const {
  if (cfg_.variant == Variant::CategoryIndependent) return heads_[0];
  if (i < 0 || i >= cfg_.k) throw IndexOutOfRange("head_layout: bad head index");
  return heads_[static_cast<std::size_t>(i)];
}

std::vector<std::string> Model::pose_param_names() const {
  std::vector<std::string> names;
  for (const auto& head : heads_) {
    for (auto& n : head.trainable_names()) names.push_back(n);
  }
  return names;
}

int argmax_row(const Eigen::VectorXd& p) {
  int best = 0;
  for (int i = 1; i < p.size(); ++i) {
    if (p[i] > p[best]) best = i;  // strict: ties keep the lowest index
  }
  return best;
}

Eigen::Vector3d fuse_weighted(const std::vector<Eigen::Vector3d>& heads, const Eigen::VectorXd& p) {
  if (static_cast<std::size_t>(p.size()) != heads.size()) {
    throw ShapeMismatch("fuse_weighted: k mismatch");
  }
  Eigen::Vector3d y = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < heads.size(); ++i) {
    y += p[static_cast<Eigen::Index>(i)] * heads[i];
  }
  return y;
}

Eigen::Vector3d fuse_top1(const std::vector<Eigen::Vector3d>& heads, const Eigen::VectorXd& p) {
  if (static_cast<std::size_t>(p.size()) != heads.size()) {
    throw ShapeMismatch("fuse_top1: k mismatch");
  }
  return heads[static_cast<std::size_t>(argmax_row(p))];
}

std::vector<Eigen::Vector3d> head_rows(const std::vector<Tensor2>& head_outputs,
                                       Eigen::Index row) {
  std::vector<Eigen::Vector3d> rows;
  rows.reserve(head_outputs.size());
  for (const auto& h : head_outputs) rows.push_back(h.row(row).transpose());
  return rows;
}

Tensor2 fuse_batch(const std::vector<Tensor2>& head_outputs, const Tensor2& p, Fusion fusion) {
  if (head_outputs.empty() || p.cols() != static_cast<Eigen::Index>(head_outputs.size())) {
    throw ShapeMismatch("fuse_batch: k mismatch");
  }
  Tensor2 fused = Tensor2::Zero(p.rows(), 3);
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const auto rows = head_rows(head_outputs, r);
    const Eigen::VectorXd pr = p.row(r).transpose();
    fused.row(r) =
        (fusion == Fusion::Weighted ? fuse_weighted(rows, pr) : fuse_top1(rows, pr)).transpose();
  }
  return fused;
}

}  // namespace posefuse::model
