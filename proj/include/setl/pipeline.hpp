#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "setl/cross_validation.hpp"
#include "setl/ivector.hpp"
#include "setl/manifest.hpp"
#include "setl/mfcc.hpp"
#include "setl/training.hpp"

namespace setl {

enum class AdaptScope { utterance, speaker };

std::string to_string(AdaptScope s);
AdaptScope parse_adapt_scope(std::string_view s);

struct AdaptConfig {
  int components = 64;
  int ivector_dim = 100;
  int ubm_iterations = 20;
  int tv_iterations = 10;
  AdaptScope scope = AdaptScope::utterance;

  void validate() const;
};

// MFCCs for every row, in manifest order. Throws if the audio sample rate
// differs from `sample_rate_hz`.
std::vector<FeatureMatrix> extract_features(const Manifest& m, const MfccConfig& cfg, int sample_rate_hz);
std::vector<FeatureMatrix> extract_features(const PretrainManifest& m, const MfccConfig& cfg, int sample_rate_hz);

IvectorExtractor train_adaptation(std::span<const FeatureMatrix> feats, const AdaptConfig& cfg, std::uint64_t seed);

// Appends an i-vector to every frame. With speaker scope, one i-vector is
// extracted from the pooled statistics of all utterances sharing a speaker id.
std::vector<FeatureMatrix> apply_adaptation(std::span<const FeatureMatrix> feats, std::span<const std::string> speakers,
                                            const IvectorExtractor& model, AdaptScope scope);

std::vector<std::string> speakers_of(const Manifest& m);
std::vector<std::string> speakers_of(const PretrainManifest& m);

// Frame-level phone targets for the pretraining proxy task.
std::vector<LabeledFrames> pretrain_examples(const PretrainManifest& m, std::vector<FeatureMatrix> feats,
                                             const MfccConfig& cfg, int sample_rate_hz);

std::vector<LabeledUtterance> emotion_examples(const Manifest& m, std::vector<FeatureMatrix> feats);

// Utterance-level labels replicated to frames.
std::vector<LabeledFrames> to_frames(std::span<const LabeledUtterance> utts);

}  // namespace setl
