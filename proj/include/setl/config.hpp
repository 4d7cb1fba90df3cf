#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "setl/checkpoint.hpp"
#include "setl/mfcc.hpp"
#include "setl/pipeline.hpp"
#include "setl/synth.hpp"
#include "setl/tdnn.hpp"
#include "setl/training.hpp"

namespace setl {

struct NetworkConfig {
  double width_factor = 1.0;
  int base_width = 1024;
  std::vector<int> strides = SpecOptions{}.strides;
  int head_hidden = 256;
  std::string tap = "tdnn12";
  bool freeze_pretrained = false;
};

struct EvaluationConfig {
  std::vector<std::string> taps = {"tdnn12", "tdnn13", "prefinal"};
  // Held-out session for finetune/evaluate/compare-taps; empty picks the
  // last session in sorted order.
  std::string test_session;
};

// Relative paths resolve against the working directory. Empty manifest
// paths default to the datagen layout under data_dir.
struct PathsConfig {
  std::string data_dir = "data";
  std::string manifest;
  std::string pretrain_manifest;
  std::string work_dir = "work";
  std::string output_dir = "out";

  std::filesystem::path emotion_manifest_path() const;
  std::filesystem::path pretrain_manifest_path() const;
  std::filesystem::path features_dir() const;
  std::filesystem::path ivector_model_path() const;
  std::filesystem::path pretrain_dir() const;
  std::filesystem::path pretrained_checkpoint_path() const;
  std::filesystem::path finetune_dir() const;
  std::filesystem::path finetuned_checkpoint_path() const;
};

// The complete resolved configuration of a run. Every stage derives its RNG
// seed from `seed`, so one number pins the whole pipeline.
struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = OpenMP default
  int sample_rate_hz = 16000;
  MfccConfig mfcc;
  AdaptConfig adapt;
  NetworkConfig network;
  TrainConfig pretrain;
  TrainConfig finetune;
  SynthSpec synth;
  EvaluationConfig evaluation;
  PathsConfig paths;

  // Throws Error(config) on any invalid field.
  void validate() const;

  std::uint64_t synth_seed() const { return seed; }
  std::uint64_t adapt_seed() const { return seed + 1; }
  std::uint64_t pretrain_seed() const { return seed + 2; }
  std::uint64_t finetune_seed() const { return seed + 3; }

  int input_dim() const { return mfcc.num_ceps + adapt.ivector_dim; }
  FeatureFingerprint fingerprint() const;
  SpecOptions spec_options(int head_dim) const;
  TrainConfig pretrain_config() const;  // with the derived seed
  TrainConfig finetune_config() const;
};

// Strict JSON parsing: unknown keys and wrongly typed values throw
// Error(config); missing keys keep their defaults.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string dump_run_config(const RunConfig& cfg);

// Applies TDNN_TRANSFER_SEED when set.
void apply_environment(RunConfig& cfg);

// Writes <dir>/config.json holding the resolved configuration.
void write_config_echo(const std::filesystem::path& dir, const RunConfig& cfg);

}  // namespace setl
