#ifndef POSEFUSE_DATA_HPP
#define POSEFUSE_DATA_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "posefuse/params.hpp"
#include "posefuse/random.hpp"
#include "posefuse/so3.hpp"

namespace posefuse::data {

struct LabeledSample {
  Eigen::VectorXd x;
  int category = 0;
  so3::Rotation rotation;       // R*, always exp_map(axis_angle)
  so3::AxisAngle axis_angle;    // y*, canonical |y| < pi
};

struct Dataset {
  int input_dim = 0;
  int k = 0;
  std::vector<LabeledSample> samples;
};

struct SynthConfig {
  int k = 4;
  int per_category = 500;
  int input_dim = 64;
  std::uint64_t map_seed = 7;       // seeds the per-category feature maps
  double sigma = 0.05;              // feature noise
  double max_angle = M_PI - 0.1;    // ground-truth angle cap, < pi
  double separation = 3.0;          // norm of the category-identifying offset
  double signal_scale = 1.0;        // pose-signal magnitude per feature

  void validate() const;  // throws InvalidConfig
};

// Per-category smooth pose-to-feature maps: x = W_i * t(y) + offset_i + eps,
// where t(y) stacks sin/cos of the axis-angle components and their doubles.
// The maps depend only on (config, map_seed), so jittered samples can be
// re-rendered through the exact map that produced them.
class SynthGenerator {
 public:
  explicit SynthGenerator(const SynthConfig& cfg);

  const SynthConfig& config() const { return cfg_; }

  // Deterministic per seed; categories use independent streams.
  Dataset generate(std::uint64_t seed) const;

  Eigen::VectorXd features_for(int category, const so3::AxisAngle& y, Rng& noise_rng) const;
  Eigen::VectorXd features_clean(int category, const so3::AxisAngle& y) const;

  // Composes a small random rotation onto the ground truth and re-renders the
  // features; resamples when the composed angle leaves the canonical range.
  // max_deg in [0, 10]; 0 returns the sample unchanged.
  LabeledSample jitter(const LabeledSample& sample, Rng& rng, double max_deg) const;

 private:
  SynthConfig cfg_;
  std::vector<nn::MatrixRM> maps_;        // k entries, input_dim x n_trig_features
  std::vector<Eigen::VectorXd> offsets_;  // k entries
};

Dataset generate(const SynthConfig& cfg, std::uint64_t seed);

// CSV schema: header `x0..x{D-1},cat,y0,y1,y2`; decimal floats at 17
// significant digits; LF line endings. Rotations are re-derived from the
// stored axis-angle on load, so round-trips are lossless.
void save_csv(const Dataset& dataset, const std::string& path);
Dataset load_csv(const std::string& path);

}  // namespace posefuse::data

#endif
