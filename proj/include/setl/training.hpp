#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "setl/tdnn.hpp"

namespace setl {

struct TrainConfig {
  double learning_rate = 0.003;
  double momentum = 0.9;
  int epochs = 4;
  int batch_frames = 512;
  double lr_decay = 0.9;  // multiplicative, applied after every epoch
  std::uint64_t seed = 0;
  bool shuffle = true;
  // Utterances are cut into chunks of this many training frames before
  // shuffling; 0 keeps whole utterances.
  int chunk_frames = 150;
  // Train on every k-th frame of each utterance (1 = every frame).
  int output_frame_stride = 1;
  // Weight frames by inverse class frequency.
  bool class_balance = false;

  void validate() const;
};

// One utterance with a label per frame.
struct LabeledFrames {
  FeatureMatrix features;
  std::vector<int> labels;
};

// Replicates an utterance-level label to every frame.
LabeledFrames label_all_frames(FeatureMatrix features, int label);

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double frame_accuracy = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
};

// CSV with header epoch,loss,frame_acc,seconds.
void write_train_report(const std::filesystem::path& path, const TrainReport& report);

std::vector<double> softmax(std::span<const double> logits);
double cross_entropy(std::span<const double> probs, int label);

// v <- momentum * v - lr * g;  p <- p + v.  Throws Error(numeric) on a
// non-finite gradient.
void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
              double learning_rate, double momentum);
void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
              const TrainConfig& cfg);

struct TrainHooks {
  // Per-layer trainable flags; empty means every layer trains.
  std::vector<bool> trainable;
  // Called after each epoch; returning true stops training early.
  std::function<bool(const EpochStats&, const Network&)> on_epoch_end;
};

// Shuffled mini-batch SGD with momentum on mean frame cross-entropy.
// Deterministic for a fixed cfg.seed.
TrainReport train(Network& net, std::span<const LabeledFrames> data, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

// Mean frame cross-entropy of one labeled utterance under a dense forward pass.
double frame_loss(const Network& net, const LabeledFrames& sample);
// Analytic gradient of frame_loss.
Gradients frame_loss_gradient(const Network& net, const LabeledFrames& sample);

struct GradCheckResult {
  static constexpr int kMaxStepReductions = 30;

  double max_relative_error = 0.0;
  std::size_t parameters_checked = 0;
  std::size_t worst_layer = 0;
  // Parameters whose probe crossed a rectifier kink and were retried with a
  // step halved until clean, and those still crossing after kMaxStepReductions.
  std::size_t reduced_steps = 0;
  std::size_t kinks_skipped = 0;
};

// Central finite differences of frame_loss against the analytic gradient for
// every parameter; relative errors use denominators floored at 1e-8. Probes
// run an independent dense forward in extended precision with Richardson
// extrapolation over steps h and h/2. A probe that flips any rectifier unit
// is not differentiable there and is retried with a halved step.
GradCheckResult gradient_check(const Network& net, const LabeledFrames& sample, double step);

}  // namespace setl
