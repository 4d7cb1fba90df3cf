#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string_view>
#include <vector>

#include "setl/checkpoint.hpp"
#include "setl/training.hpp"

namespace setl {

// Pretrains the full network (TDNN stack + prefinal + proxy head) on
// frame-labeled utterances. A global per-dimension input standardization is
// estimated from the data first and stored in the network.
Checkpoint pretrain(std::span<const LabeledFrames> corpus, const NetworkSpec& spec, const TrainConfig& cfg,
                    const FeatureFingerprint& fingerprint, TrainReport* report = nullptr,
                    const TrainHooks& hooks = {});

// Sets net.input_shift/input_scale to the pooled mean and inverse std.
void fit_input_normalization(Network& net, std::span<const LabeledFrames> corpus);

struct HeadOptions {
  int hidden_dim = 256;
  std::uint64_t seed = 0;
};

// Keeps layers up to and including `tap`, then appends a fresh rectified
// dense layer and a linear output of num_classes (softmax is applied by the
// objective and by the decision rule).
Network attach_head(const Checkpoint& ck, std::string_view tap, int num_classes, const HeadOptions& opts = {});

struct FreezePolicy {
  std::set<int> frozen_layers;

  // Freezes every layer that came from the pretrained checkpoint.
  static FreezePolicy freeze_pretrained(const Network& net);
  // Throws if a head layer is frozen.
  std::vector<bool> trainable_mask(const Network& net) const;
};

TrainReport finetune(Network& net, std::span<const LabeledFrames> data, const FreezePolicy& policy,
                     const TrainConfig& cfg, const TrainHooks& hooks = {});

}  // namespace setl
