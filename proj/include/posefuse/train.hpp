#ifndef POSEFUSE_TRAIN_HPP
#define POSEFUSE_TRAIN_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "posefuse/data.hpp"
#include "posefuse/eval.hpp"
#include "posefuse/losses.hpp"
#include "posefuse/model.hpp"

namespace posefuse::train {

enum class ProtocolKind { Balanced, PoseFirst };
enum class PhaseLoss { Pose, Category, Joint };
enum class CategorySource { Oracle, Network };

// Trainable subnetwork bitmask
constexpr unsigned kTrainFN = 1u;
constexpr unsigned kTrainCN = 2u;
constexpr unsigned kTrainPN = 4u;

struct Phase {
  std::string name;
  int epochs = 0;
  double lr = 1e-3;
  unsigned trainable = 0;
  PhaseLoss loss = PhaseLoss::Joint;
  CategorySource cat_source = CategorySource::Network;
  // When set, head i trains only on rows with c* = i; other heads receive an
  // exactly zero gradient and leave their batch-norm statistics untouched.
  bool per_head = false;
};

struct Protocol {
  ProtocolKind kind = ProtocolKind::PoseFirst;
  std::vector<Phase> phases;
};

struct TrainConfig {
  int batch_size = 32;
  double lr = 1e-3;
  double joint_lr = 1e-4;  // drop for the final fine-tuning phase
  double lambda = 0.1;
  model::Fusion fusion = model::Fusion::Weighted;
  int epochs_pretrain = 20;
  int epochs_heads = 30;
  int epochs_oracle = 30;
  int epochs_category = 10;
  int epochs_joint = 20;
};

// Expands the schedule: balanced is pretrain/heads/category/joint, pose-first
// is pretrain/heads/oracle/category/joint.
Protocol make_protocol(ProtocolKind kind, const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;  // monotone across phases, 1-based
  std::string phase;
  double loss_pose = 0.0;
  double loss_cat = 0.0;
  double val_pose_err_deg = 0.0;
  double val_cat_acc = 0.0;
  std::int64_t wall_ms = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::int64_t wall_ms_total = 0;
};

// p = delta(c_star)
Eigen::VectorXd oracle_distribution(int c_star, int k);

// One epoch of balanced batches: every batch holds floor(B/K) or ceil(B/K)
// indices per (nonempty) category; the ceil quota rotates round-robin so
// per-category totals stay within one of each other over the epoch. Batches
// are drawn without replacement until a category runs out, which reshuffles
// and recycles that category. Throws BatchSmallerThanK.
std::vector<std::vector<int>> balanced_batches(const data::Dataset& dataset, int batch_size,
                                               int k, Rng& rng);

struct ProtocolHooks {
  std::function<void(int phase_index, const Phase&, const nn::ParameterStore&, const Rng&)>
      on_phase_end;
  std::function<void(const EpochRecord&)> on_epoch;
};

// One joint forward/backward over a batch. Pure: batch-norm runs on batch
// statistics but running statistics are not touched; the caches are returned
// so a training step can apply them. grads may be null for a value-only pass.
struct JointPass {
  nn::MlpCache feature;
  nn::MlpCache category;
  std::vector<nn::MlpCache> heads;
  double pose_mean = 0.0;
  double cat_mean = 0.0;
};

JointPass joint_pass(const model::Model& m, const nn::ParameterStore& store,
                     const nn::Tensor2& x, const std::vector<int>& cats,
                     const std::vector<const so3::Rotation*>& targets, model::Fusion fusion,
                     double lambda, nn::GradMap* grads);

class Trainer {
 public:
  Trainer(const model::Model& m, TrainConfig cfg) : model_(m), cfg_(std::move(cfg)) {}

  // Table-1 style phases as standalone operations. val may be null.
  void pretrain_feature(nn::ParameterStore& store, const data::Dataset& ds,
                        const data::Dataset* val, int epochs, Rng& rng,
                        TrainReport* report = nullptr);
  void train_heads_independent(nn::ParameterStore& store, const data::Dataset& ds,
                               const data::Dataset* val, int epochs, Rng& rng,
                               TrainReport* report = nullptr);
  void train_pose_first_phase(nn::ParameterStore& store, const data::Dataset& ds,
                              const data::Dataset* val, int epochs, Rng& rng,
                              TrainReport* report = nullptr);
  void train_category_phase(nn::ParameterStore& store, const data::Dataset& ds,
                            const data::Dataset* val, int epochs, Rng& rng,
                            TrainReport* report = nullptr);
  void finetune_joint(nn::ParameterStore& store, const data::Dataset& ds,
                      const data::Dataset* val, int epochs, Rng& rng,
                      TrainReport* report = nullptr);

  void run_phase(const Phase& phase, nn::ParameterStore& store, const data::Dataset& ds,
                 const data::Dataset* val, Rng& rng, TrainReport* report,
                 const ProtocolHooks* hooks = nullptr, int* epoch_counter = nullptr);

  // Executes phases[start_phase..] in order. Hooks fire after every phase
  // (checkpointing) and every epoch (metrics logging).
  TrainReport run_protocol(const Protocol& protocol, nn::ParameterStore& store,
                           const data::Dataset& ds, const data::Dataset* val, Rng& rng,
                           int start_phase = 0, const ProtocolHooks& hooks = {});

  Phase make_phase(const std::string& name, int epochs) const;

 private:
  struct StepStats {
    double pose_sum = 0.0;
    double cat_sum = 0.0;
    long rows = 0;
  };

  void step_category(const Phase& phase, nn::ParameterStore& store, const nn::Tensor2& x,
                     const std::vector<int>& cats, StepStats& stats);
  void step_pose_per_head(const Phase& phase, nn::ParameterStore& store, const nn::Tensor2& x,
                          const std::vector<int>& cats,
                          const std::vector<const so3::Rotation*>& targets, StepStats& stats);
  void step_joint(const Phase& phase, nn::ParameterStore& store, const nn::Tensor2& x,
                  const std::vector<int>& cats, const std::vector<const so3::Rotation*>& targets,
                  StepStats& stats);

  const model::Model& model_;
  TrainConfig cfg_;
};

}  // namespace posefuse::train

#endif
