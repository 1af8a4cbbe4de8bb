#ifndef POSEFUSE_EVAL_HPP
#define POSEFUSE_EVAL_HPP

#include <array>
#include <string>
#include <vector>

#include "json.hpp"
#include "posefuse/data.hpp"
#include "posefuse/model.hpp"

namespace posefuse::eval {

struct EvalReport {
  int k = 0;
  std::vector<int> per_category_count;
  std::vector<double> median_pose_err_deg;  // per category
  double mean_median_pose_err_deg = 0.0;    // unweighted over categories
  std::vector<double> category_acc;         // per category
  double mean_category_acc = 0.0;           // unweighted over categories
  double overall_category_acc = 0.0;        // sample-weighted
  double p_below_22_5 = 0.0;                // strict threshold, pooled over samples
  double p_below_45 = 0.0;
  double aaai_rotation = 0.0;               // mean AAAI score of the rotation error
  double aaai_azimuth = 0.0;                // mean AAAI score of the azimuth error
  std::array<double, 3> topk_pose_err_deg{};  // k = 1, 2, 3 (clamped to model k)

  nlohmann::json to_json() const;
  std::string to_table() const;
};

// Per-category medians (even counts average the middle two) and their
// unweighted mean. Throws EmptyCategory when a group is empty.
std::pair<std::vector<double>, double> median_pose_err(
    const std::vector<std::vector<double>>& errors_by_category);

// Fraction of errors strictly below the threshold.
double threshold_acc(const std::vector<double>& errors, double delta);

// 1 - min(|err|, 2*pi - |err|) / pi for err in radians.
double aaai_score(double err);

// Circular azimuth difference in radians, in [0, pi]. Propagates GimbalLock.
double azimuth_err(const so3::Rotation& r, const so3::Rotation& r_star);

// Minimum viewpoint error over the k most probable categories' heads.
// Ties in p break toward the lower category index. Throws InvalidK.
double topk_pose_err(const std::vector<Eigen::Vector3d>& head_outputs, const Eigen::VectorXd& p,
                     const so3::Rotation& r_star, int k);

// Single-pass computation of every report field. oracle_category replaces the
// category network's output with delta(c*).
EvalReport evaluate(const model::Model& m, const nn::ParameterStore& store,
                    const data::Dataset& dataset, model::Fusion fusion,
                    bool oracle_category = false);

}  // namespace posefuse::eval

#endif
