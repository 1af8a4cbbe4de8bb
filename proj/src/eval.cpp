#include "posefuse/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "posefuse/errors.hpp"

namespace posefuse::eval {

using nn::Tensor2;

std::pair<std::vector<double>, double> median_pose_err(
    const std::vector<std::vector<double>>& errors_by_category) {
  std::vector<double> medians;
  medians.reserve(errors_by_category.size());
  for (std::size_t c = 0; c < errors_by_category.size(); ++c) {
    std::vector<double> errs = errors_by_category[c];
    if (errs.empty()) {
      throw EmptyCategory("median_pose_err: category " + std::to_string(c) + " has no samples");
    }
    std::sort(errs.begin(), errs.end());
    const std::size_t n = errs.size();
    const double median =
        (n % 2 == 1) ? errs[n / 2] : 0.5 * (errs[n / 2 - 1] + errs[n / 2]);
    medians.push_back(median);
  }
  const double mean = std::accumulate(medians.begin(), medians.end(), 0.0) /
                      static_cast<double>(medians.size());
  return {medians, mean};
}

double threshold_acc(const std::vector<double>& errors, double delta) {
  if (!(delta > 0.0)) throw InvalidRange("threshold_acc: delta must be positive");
  if (errors.empty()) return 0.0;
  std::size_t below = 0;
  for (double e : errors) {
    if (e < delta) ++below;
  }
  return static_cast<double>(below) / static_cast<double>(errors.size());
}

double aaai_score(double err) {
  const double a = std::abs(err);
  const double folded = std::min(a, 2.0 * M_PI - a) / M_PI;
  return 1.0 - folded * folded;
}

double azimuth_err(const so3::Rotation& r, const so3::Rotation& r_star) {
  const double az = so3::rotation_to_azimuth(r);
  const double az_star = so3::rotation_to_azimuth(r_star);
  const double d = std::abs(az - az_star);
  return std::min(d, 2.0 * M_PI - d);
}

double topk_pose_err(const std::vector<Eigen::Vector3d>& head_outputs, const Eigen::VectorXd& p,
                     const so3::Rotation& r_star, int k) {
  const int n = static_cast<int>(head_outputs.size());
  if (k < 1 || k > n) throw InvalidK("topk_pose_err: k must be in [1, " + std::to_string(n) + "]");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return p[a] > p[b]; });
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < k; ++i) {
    const auto c = static_cast<std::size_t>(order[static_cast<std::size_t>(i)]);
    best = std::min(best, so3::viewpoint_error_deg(so3::exp_map(head_outputs[c]), r_star));
  }
  return best;
}

EvalReport evaluate(const model::Model& m, const nn::ParameterStore& store,
                    const data::Dataset& dataset, model::Fusion fusion, bool oracle_category) {
  const int k = m.config().k;
  if (dataset.input_dim != m.config().input_dim) {
    throw ShapeMismatch("evaluate: dataset input_dim " + std::to_string(dataset.input_dim) +
                        " != model input_dim " + std::to_string(m.config().input_dim));
  }
  if (dataset.k > k) {
    throw ShapeMismatch("evaluate: dataset has more categories than the model");
  }
  if (dataset.samples.empty()) throw EmptyDataset("evaluate: empty dataset");

  const auto n = static_cast<Eigen::Index>(dataset.samples.size());
  Tensor2 x(n, dataset.input_dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = dataset.samples[static_cast<std::size_t>(i)].x.transpose();
  }

  const nn::ForwardOpts opts{.train = false};
  const Tensor2 features = m.feature_forward(store, x, opts);
  Tensor2 p = m.category_forward(store, features, opts);
  const std::vector<Tensor2> heads = m.pose_heads_forward(store, features, opts);
  if (oracle_category) {
    p.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      p(i, dataset.samples[static_cast<std::size_t>(i)].category) = 1.0;
    }
  }
  const Tensor2 fused = model::fuse_batch(heads, p, fusion);

  EvalReport report;
  report.k = k;
  report.per_category_count.assign(static_cast<std::size_t>(k), 0);
  std::vector<std::vector<double>> errs_by_cat(static_cast<std::size_t>(k));
  std::array<std::vector<std::vector<double>>, 3> topk_by_cat;
  for (auto& g : topk_by_cat) g.assign(static_cast<std::size_t>(k), {});
  std::vector<int> correct_by_cat(static_cast<std::size_t>(k), 0);
  std::vector<double> pooled_errs;
  pooled_errs.reserve(static_cast<std::size_t>(n));
  double aaai_rot_sum = 0.0;
  double aaai_az_sum = 0.0;

  for (Eigen::Index i = 0; i < n; ++i) {
    const data::LabeledSample& s = dataset.samples[static_cast<std::size_t>(i)];
    const auto cat = static_cast<std::size_t>(s.category);
    report.per_category_count[cat] += 1;

    const so3::Rotation r_pred = so3::exp_map(fused.row(i).transpose());
    const double err_deg = so3::viewpoint_error_deg(r_pred, s.rotation);
    errs_by_cat[cat].push_back(err_deg);
    pooled_errs.push_back(err_deg);
    aaai_rot_sum += aaai_score(so3::deg_to_rad(err_deg));
    aaai_az_sum += aaai_score(azimuth_err(r_pred, s.rotation));

    const Eigen::VectorXd p_row = p.row(i).transpose();
    if (model::argmax_row(p_row) == s.category) correct_by_cat[cat] += 1;

    const auto rows = model::head_rows(heads, i);
    for (int kk = 1; kk <= 3; ++kk) {
      const int kc = std::min(kk, k);
      topk_by_cat[static_cast<std::size_t>(kk - 1)][cat].push_back(
          topk_pose_err(rows, p_row, s.rotation, kc));
    }
  }

  auto [medians, mean_median] = median_pose_err(errs_by_cat);
  report.median_pose_err_deg = std::move(medians);
  report.mean_median_pose_err_deg = mean_median;

  report.category_acc.resize(static_cast<std::size_t>(k));
  int correct_total = 0;
  for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
    report.category_acc[c] =
        static_cast<double>(correct_by_cat[c]) / static_cast<double>(report.per_category_count[c]);
    correct_total += correct_by_cat[c];
  }
  report.mean_category_acc =
      std::accumulate(report.category_acc.begin(), report.category_acc.end(), 0.0) /
      static_cast<double>(k);
  report.overall_category_acc = static_cast<double>(correct_total) / static_cast<double>(n);

  report.p_below_22_5 = threshold_acc(pooled_errs, 22.5);
  report.p_below_45 = threshold_acc(pooled_errs, 45.0);
  report.aaai_rotation = aaai_rot_sum / static_cast<double>(n);
  report.aaai_azimuth = aaai_az_sum / static_cast<double>(n);

  for (int kk = 0; kk < 3; ++kk) {
    report.topk_pose_err_deg[static_cast<std::size_t>(kk)] =
        median_pose_err(topk_by_cat[static_cast<std::size_t>(kk)]).second;
  }
  return report;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["k"] = k;
  j["per_category_count"] = per_category_count;
  j["median_pose_err_deg"] = median_pose_err_deg;
  j["mean_median_pose_err_deg"] = mean_median_pose_err_deg;
  j["category_acc"] = category_acc;
  j["mean_category_acc"] = mean_category_acc;
  j["overall_category_acc"] = overall_category_acc;
  j["p_below_22.5"] = p_below_22_5;
  j["p_below_45"] = p_below_45;
  j["aaai_rotation"] = aaai_rotation;
  j["aaai_azimuth"] = aaai_azimuth;
  j["top1_pose_err_deg"] = topk_pose_err_deg[0];
  j["top2_pose_err_deg"] = topk_pose_err_deg[1];
  j["top3_pose_err_deg"] = topk_pose_err_deg[2];
  return j;
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(3);
  os << "category    count   pose-err(deg)   cat-acc\n";
  for (int c = 0; c < k; ++c) {
    const auto i = static_cast<std::size_t>(c);
    os << "  " << c << "         " << per_category_count[i] << "     "
       << median_pose_err_deg[i] << "          " << category_acc[i] << "\n";
  }
  os << "mean of per-category medians: " << mean_median_pose_err_deg << " deg\n";
  os << "mean per-category cat-acc:    " << mean_category_acc << "\n";
  os << "overall cat-acc:              " << overall_category_acc << "\n";
  os << "P%(<22.5deg): " << p_below_22_5 << "   P%(<45deg): " << p_below_45 << "\n";
  os << "AAAI (rotation): " << aaai_rotation << "   AAAI (azimuth): " << aaai_azimuth << "\n";
  os << "top-k pose-err (deg): k=1 " << topk_pose_err_deg[0] << ", k=2 " << topk_pose_err_deg[1]
     << ", k=3 " << topk_pose_err_deg[2] << "\n";
  return os.str();
}

}  // namespace posefuse::eval
