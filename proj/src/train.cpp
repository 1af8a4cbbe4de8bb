#include "posefuse/train.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>

#include "posefuse/errors.hpp"

namespace posefuse::train {

using nn::GradMap;
using nn::ParameterStore;
using nn::Tensor2;

Eigen::VectorXd oracle_distribution(int c_star, int k) {
  if (c_star < 0 || c_star >= k) {
    throw IndexOutOfRange("oracle_distribution: index " + std::to_string(c_star) +
                          " out of range for k=" + std::to_string(k));
  }
  Eigen::VectorXd p = Eigen::VectorXd::Zero(k);
  p[c_star] = 1.0;
  return p;
}

std::vector<std::vector<int>> balanced_batches(const data::Dataset& dataset, int batch_size,
                                               int k, Rng& rng) {
  if (batch_size < k) {
    throw BatchSmallerThanK("balanced_batches: batch size " + std::to_string(batch_size) +
                            " < k = " + std::to_string(k));
  }
  if (dataset.samples.empty()) throw EmptyDataset("balanced_batches: empty dataset");

  std::vector<std::vector<int>> pools(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    pools[static_cast<std::size_t>(dataset.samples[i].category)].push_back(static_cast<int>(i));
  }
  std::vector<int> present;
  for (int c = 0; c < k; ++c) {
    if (!pools[static_cast<std::size_t>(c)].empty()) present.push_back(c);
  }
  const int k_eff = static_cast<int>(present.size());

  std::vector<std::vector<int>> queues(present.size());
  std::vector<std::size_t> cursors(present.size(), 0);
  for (std::size_t j = 0; j < present.size(); ++j) {
    queues[j] = pools[static_cast<std::size_t>(present[j])];
    rng.shuffle(queues[j]);
  }
  auto draw = [&](std::size_t j) {
    if (cursors[j] >= queues[j].size()) {  // recycle an exhausted category
      rng.shuffle(queues[j]);
      cursors[j] = 0;
    }
    return queues[j][cursors[j]++];
  };

  const int base = batch_size / k_eff;
  const int extras = batch_size % k_eff;
  const auto n_batches = static_cast<int>(
      (dataset.samples.size() + static_cast<std::size_t>(batch_size) - 1) /
      static_cast<std::size_t>(batch_size));

  std::vector<std::vector<int>> batches;
  batches.reserve(static_cast<std::size_t>(n_batches));
  for (int b = 0; b < n_batches; ++b) {
    std::vector<int> batch;
    batch.reserve(static_cast<std::size_t>(batch_size));
    for (std::size_t j = 0; j < present.size(); ++j) {
      int quota = base;
      for (int e = 0; e < extras; ++e) {  // round-robin the ceil quota
        if (static_cast<std::size_t>((b * extras + e) % k_eff) == j) ++quota;
      }
      for (int q = 0; q < quota; ++q) batch.push_back(draw(j));
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

Protocol make_protocol(ProtocolKind kind, const TrainConfig& cfg) {
  Protocol p;
  p.kind = kind;
  const Phase pretrain{"pretrain", cfg.epochs_pretrain, cfg.lr, kTrainFN | kTrainCN,
                       PhaseLoss::Category, CategorySource::Network, false};
  const Phase heads{"heads", cfg.epochs_heads, cfg.lr, kTrainPN, PhaseLoss::Pose,
                    CategorySource::Oracle, true};
  const Phase oracle{"oracle", cfg.epochs_oracle, cfg.lr, kTrainFN | kTrainPN, PhaseLoss::Pose,
                     CategorySource::Oracle, true};
  const Phase category{"category", cfg.epochs_category, cfg.lr, kTrainCN, PhaseLoss::Category,
                       CategorySource::Network, false};
  const Phase joint{"joint", cfg.epochs_joint, cfg.joint_lr, kTrainFN | kTrainCN | kTrainPN,
                    PhaseLoss::Joint, CategorySource::Network, false};
  if (kind == ProtocolKind::Balanced) {
    p.phases = {pretrain, heads, category, joint};
  } else {
    p.phases = {pretrain, heads, oracle, category, joint};
  }
  return p;
}

namespace {

void gather_batch(const data::Dataset& ds, const std::vector<int>& idx, Tensor2& x,
                  std::vector<int>& cats, std::vector<const so3::Rotation*>& targets) {
  const auto n = static_cast<Eigen::Index>(idx.size());
  x.resize(n, ds.input_dim);
  cats.resize(idx.size());
  targets.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const data::LabeledSample& s = ds.samples[static_cast<std::size_t>(idx[i])];
    x.row(static_cast<Eigen::Index>(i)) = s.x.transpose();
    cats[i] = s.category;
    targets[i] = &s.rotation;
  }
}

}  // namespace

Phase Trainer::make_phase(const std::string& name, int epochs) const {
  Protocol p = make_protocol(ProtocolKind::PoseFirst, cfg_);
  for (Phase& ph : p.phases) {
    if (ph.name == name) {
      if (epochs >= 0) ph.epochs = epochs;
      return ph;
    }
  }
  throw InvalidConfig("unknown phase: " + name);
}

void Trainer::step_category(const Phase& phase, ParameterStore& store, const Tensor2& x,
                            const std::vector<int>& cats, StepStats& stats) {
  const nn::ForwardOpts opts{.train = true};
  const bool fn_trainable = (phase.trainable & kTrainFN) != 0;
  nn::MlpCache fn_cache, cn_cache;
  const Tensor2 features =
      model_.feature_forward(store, x, opts, fn_trainable ? &fn_cache : nullptr);
  const Tensor2 logits = model_.category_logits(store, features, opts, &cn_cache);
  const Tensor2 p = nn::softmax(logits);

  const auto n = static_cast<double>(x.rows());
  Tensor2 glogits(p.rows(), p.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const auto ce = loss::cross_entropy(p.row(i).transpose(), cats[static_cast<std::size_t>(i)]);
    stats.cat_sum += ce.value;
    glogits.row(i) = ce.grad_logits.transpose() / n;
  }
  stats.rows += x.rows();

  GradMap grads;
  const Tensor2 gfeat = nn::mlp_backward(store, model_.category_layout(), cn_cache, glogits, grads);
  if (fn_trainable) {
    nn::mlp_backward(store, model_.feature_layout(), fn_cache, gfeat, grads);
  } else {
    // drop gradients that would touch the frozen feature network
  }
  nn::adam_step(store, grads, {.lr = phase.lr});
}

void Trainer::step_pose_per_head(const Phase& phase, ParameterStore& store, const Tensor2& x,
                                 const std::vector<int>& cats,
                                 const std::vector<const so3::Rotation*>& targets,
                                 StepStats& stats) {
  const nn::ForwardOpts opts{.train = true};
  const bool fn_trainable = (phase.trainable & kTrainFN) != 0;
  nn::MlpCache fn_cache;
  const Tensor2 features =
      model_.feature_forward(store, x, opts, fn_trainable ? &fn_cache : nullptr);

  // The independent variant has a single shared head trained on every row;
  // the dependent variant routes each row to its ground-truth category head.
  const bool independent = model_.config().variant == model::Variant::CategoryIndependent;
  const int groups = independent ? 1 : model_.config().k;
  std::vector<std::vector<Eigen::Index>> rows_by_head(static_cast<std::size_t>(groups));
  for (std::size_t i = 0; i < cats.size(); ++i) {
    const auto g = static_cast<std::size_t>(independent ? 0 : cats[i]);
    rows_by_head[g].push_back(static_cast<Eigen::Index>(i));
  }

  const auto n = static_cast<double>(x.rows());
  GradMap grads;
  Tensor2 gfeat = Tensor2::Zero(features.rows(), features.cols());

  for (int c = 0; c < groups; ++c) {
    const auto& rows = rows_by_head[static_cast<std::size_t>(c)];
    if (rows.empty()) continue;  // head stays untouched, batch-norm stats frozen
    const nn::MlpLayout& head = model_.head_layout(c);

    Tensor2 feat_c(static_cast<Eigen::Index>(rows.size()), features.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) feat_c.row(static_cast<Eigen::Index>(r)) = features.row(rows[r]);

    nn::MlpCache head_cache;
    const Tensor2 y = nn::mlp_forward(store, head, feat_c, opts, &head_cache);
    Tensor2 gy(y.rows(), y.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto ri = static_cast<Eigen::Index>(r);
      const auto pl = loss::pose_loss(y.row(ri).transpose(),
                                      *targets[static_cast<std::size_t>(rows[r])]);
      stats.pose_sum += pl.value;
      gy.row(ri) = pl.grad.transpose() / n;
    }
    const Tensor2 gfeat_c = nn::mlp_backward(store, head, head_cache, gy, grads);
    if (fn_trainable) {
      for (std::size_t r = 0; r < rows.size(); ++r) {
        gfeat.row(rows[r]) += gfeat_c.row(static_cast<Eigen::Index>(r));
      }
    }
    nn::mlp_update_running(store, head, head_cache);
  }
  stats.rows += x.rows();

  if (fn_trainable) {
    nn::mlp_backward(store, model_.feature_layout(), fn_cache, gfeat, grads);
  }
  nn::adam_step(store, grads, {.lr = phase.lr});
}

JointPass joint_pass(const model::Model& m, const ParameterStore& store, const Tensor2& x,
                     const std::vector<int>& cats,
                     const std::vector<const so3::Rotation*>& targets, model::Fusion fusion,
                     double lambda, nn::GradMap* grads) {
  JointPass pass;
  const nn::ForwardOpts opts{.train = true};
  const Tensor2 features = m.feature_forward(store, x, opts, &pass.feature);
  const Tensor2 logits = m.category_logits(store, features, opts, &pass.category);
  const Tensor2 p = nn::softmax(logits);
  const std::vector<Tensor2> heads = m.pose_heads_forward(store, features, opts, &pass.heads);

  const int k = m.config().k;
  const bool independent = m.config().variant == model::Variant::CategoryIndependent;
  const int head_count = m.head_count();
  const auto n = static_cast<double>(x.rows());

  std::vector<Tensor2> ghead(static_cast<std::size_t>(head_count));
  for (auto& g : ghead) g = Tensor2::Zero(x.rows(), 3);
  Tensor2 glogits = Tensor2::Zero(p.rows(), p.cols());

  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::VectorXd p_row = p.row(i).transpose();
    const auto rows = model::head_rows(heads, i);
    const Eigen::Vector3d fused = fusion == model::Fusion::Weighted
                                      ? model::fuse_weighted(rows, p_row)
                                      : model::fuse_top1(rows, p_row);
    const auto pl = loss::pose_loss(fused, *targets[static_cast<std::size_t>(i)]);
    pass.pose_mean += pl.value;

    if (grads) {
      if (fusion == model::Fusion::Weighted) {
        Eigen::VectorXd gp(k);
        for (int c = 0; c < k; ++c) {
          const auto hc = static_cast<std::size_t>(independent ? 0 : c);
          ghead[hc].row(i) += (p_row[c] / n) * pl.grad.transpose();
          gp[c] = rows[static_cast<std::size_t>(c)].dot(pl.grad);
        }
        // softmax backward for the pose path: dL/dz = p ∘ (gp - <gp, p>)
        const double dot = gp.dot(p_row);
        glogits.row(i) += ((gp.array() - dot) * p_row.array()).matrix().transpose() / n;
      } else {
        const int c_hat = model::argmax_row(p_row);
        const auto hc = static_cast<std::size_t>(independent ? 0 : c_hat);
        ghead[hc].row(i) += pl.grad.transpose() / n;
        // argmax selection is constant within a step: no pose gradient into p
      }
    }

    const auto ce = loss::cross_entropy(p_row, cats[static_cast<std::size_t>(i)]);
    pass.cat_mean += ce.value;
    if (grads) glogits.row(i) += (lambda / n) * ce.grad_logits.transpose();
  }
  pass.pose_mean /= n;
  pass.cat_mean /= n;

  if (grads) {
    Tensor2 gfeat = nn::mlp_backward(store, m.category_layout(), pass.category, glogits, *grads);
    for (int h = 0; h < head_count; ++h) {
      const auto hi = static_cast<std::size_t>(h);
      gfeat += nn::mlp_backward(store, m.head_layout(h), pass.heads[hi], ghead[hi], *grads);
    }
    nn::mlp_backward(store, m.feature_layout(), pass.feature, gfeat, *grads);
  }
  return pass;
}

void Trainer::step_joint(const Phase& phase, ParameterStore& store, const Tensor2& x,
                         const std::vector<int>& cats,
                         const std::vector<const so3::Rotation*>& targets, StepStats& stats) {
  GradMap grads;
  const JointPass pass =
      joint_pass(model_, store, x, cats, targets, cfg_.fusion, cfg_.lambda, &grads);
  const auto n = static_cast<double>(x.rows());
  stats.pose_sum += pass.pose_mean * n;
  stats.cat_sum += pass.cat_mean * n;
  stats.rows += x.rows();
  for (int h = 0; h < model_.head_count(); ++h) {
    nn::mlp_update_running(store, model_.head_layout(h), pass.heads[static_cast<std::size_t>(h)]);
  }
  nn::adam_step(store, grads, {.lr = phase.lr});
}

void Trainer::run_phase(const Phase& phase, ParameterStore& store, const data::Dataset& ds,
                        const data::Dataset* val, Rng& rng, TrainReport* report,
                        const ProtocolHooks* hooks, int* epoch_counter) {
  if (ds.samples.empty()) throw EmptyDataset("run_phase '" + phase.name + "': empty dataset");
  if (phase.per_head && model_.config().variant == model::Variant::CategoryDependent) {
    // warn about categories the dataset never provides; their heads are skipped
    std::vector<bool> seen(static_cast<std::size_t>(model_.config().k), false);
    for (const auto& s : ds.samples) seen[static_cast<std::size_t>(s.category)] = true;
    for (int c = 0; c < model_.config().k; ++c) {
      if (!seen[static_cast<std::size_t>(c)]) {
        std::cerr << "warning: category " << c << " has no samples; head " << c
                  << " is skipped in phase '" << phase.name << "'\n";
      }
    }
  }

  for (int e = 0; e < phase.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto batches = balanced_batches(ds, cfg_.batch_size, model_.config().k, rng);
    StepStats stats;
    Tensor2 x;
    std::vector<int> cats;
    std::vector<const so3::Rotation*> targets;
    for (const auto& batch : batches) {
      gather_batch(ds, batch, x, cats, targets);
      switch (phase.loss) {
        case PhaseLoss::Category:
          step_category(phase, store, x, cats, stats);
          break;
        case PhaseLoss::Pose:
          step_pose_per_head(phase, store, x, cats, targets, stats);
          break;
        case PhaseLoss::Joint:
          step_joint(phase, store, x, cats, targets, stats);
          break;
      }
    }

    EpochRecord rec;
    rec.epoch = epoch_counter ? ++(*epoch_counter) : e + 1;
    rec.phase = phase.name;
    rec.loss_pose = stats.rows ? stats.pose_sum / static_cast<double>(stats.rows) : 0.0;
    rec.loss_cat = stats.rows ? stats.cat_sum / static_cast<double>(stats.rows) : 0.0;
    if (!std::isfinite(rec.loss_pose) || !std::isfinite(rec.loss_cat)) {
      throw NanLoss(phase.name, rec.epoch);
    }
    if (val) {
      const auto ev = eval::evaluate(model_, store, *val, cfg_.fusion,
                                     phase.cat_source == CategorySource::Oracle);
      rec.val_pose_err_deg = ev.mean_median_pose_err_deg;
      rec.val_cat_acc = ev.overall_category_acc;
    }
    rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    if (report) report->epochs.push_back(rec);
    if (hooks && hooks->on_epoch) hooks->on_epoch(rec);
  }
}

void Trainer::pretrain_feature(ParameterStore& store, const data::Dataset& ds,
                               const data::Dataset* val, int epochs, Rng& rng,
                               TrainReport* report) {
  run_phase(make_phase("pretrain", epochs), store, ds, val, rng, report);
}

void Trainer::train_heads_independent(ParameterStore& store, const data::Dataset& ds,
                                      const data::Dataset* val, int epochs, Rng& rng,
                                      TrainReport* report) {
  run_phase(make_phase("heads", epochs), store, ds, val, rng, report);
}

void Trainer::train_pose_first_phase(ParameterStore& store, const data::Dataset& ds,
                                     const data::Dataset* val, int epochs, Rng& rng,
                                     TrainReport* report) {
  run_phase(make_phase("oracle", epochs), store, ds, val, rng, report);
}

void Trainer::train_category_phase(ParameterStore& store, const data::Dataset& ds,
                                   const data::Dataset* val, int epochs, Rng& rng,
                                   TrainReport* report) {
  run_phase(make_phase("category", epochs), store, ds, val, rng, report);
}

void Trainer::finetune_joint(ParameterStore& store, const data::Dataset& ds,
                             const data::Dataset* val, int epochs, Rng& rng,
                             TrainReport* report) {
  run_phase(make_phase("joint", epochs), store, ds, val, rng, report);
}

TrainReport Trainer::run_protocol(const Protocol& protocol, ParameterStore& store,
                                  const data::Dataset& ds, const data::Dataset* val, Rng& rng,
                                  int start_phase, const ProtocolHooks& hooks) {
  TrainReport report;
  const auto t0 = std::chrono::steady_clock::now();
  int epoch_counter = 0;
  for (int pi = 0; pi < start_phase && pi < static_cast<int>(protocol.phases.size()); ++pi) {
    epoch_counter += protocol.phases[static_cast<std::size_t>(pi)].epochs;
  }
  for (std::size_t pi = static_cast<std::size_t>(start_phase); pi < protocol.phases.size(); ++pi) {
    const Phase& phase = protocol.phases[pi];
    run_phase(phase, store, ds, val, rng, &report, &hooks, &epoch_counter);
    if (hooks.on_phase_end) hooks.on_phase_end(static_cast<int>(pi), phase, store, rng);
  }
  report.wall_ms_total = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
  return report;
}

}  // namespace posefuse::train
