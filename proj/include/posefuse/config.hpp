#ifndef POSEFUSE_CONFIG_HPP
#define POSEFUSE_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>

#include "posefuse/data.hpp"
#include "posefuse/model.hpp"
#include "posefuse/train.hpp"

namespace posefuse::cli {

// Whole-run configuration. File format is plain `key = value` lines under
// `[section]` headers; every key has a CLI override and precedence is
// CLI > file > default.
struct RunConfig {
  std::uint64_t seed = 42;         // model init + training stream
  std::string out_dir = "out";

  std::string data_path;           // train CSV; empty selects inline synthesis
  std::string test_data_path;      // eval CSV; empty selects inline synthesis
  data::SynthConfig synth;         // inline synthesis parameters
  int per_category_test = 100;
  std::uint64_t data_seed = 100;   // sample-draw seed (test split uses +1)

  model::ModelConfig model;
  train::TrainConfig train;
  train::ProtocolKind protocol = train::ProtocolKind::PoseFirst;

  // Applies one `section.key` assignment; throws InvalidConfig on unknown
  // keys or unparsable values.
  void set(const std::string& key, const std::string& value);

  // Synthesis + model widths share one input dimension; call after the last
  // override.
  void finalize();
};

RunConfig parse_config_file(const std::string& path);  // IoError, InvalidConfig
void apply_config_text(RunConfig& cfg, const std::string& text);

train::ProtocolKind parse_protocol(const std::string& s);    // balanced | pose-first
model::Fusion parse_fusion(const std::string& s);            // weighted | top1
model::Variant parse_variant(const std::string& s);          // dependent | independent

// Canonical one-line-per-key serialization of the architecture; embedded in
// checkpoints and digested for integrity checks.
std::string canonical_model_config(const model::ModelConfig& cfg);
model::ModelConfig parse_model_config(const std::string& text);

}  // namespace posefuse::cli

#endif
