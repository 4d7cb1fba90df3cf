#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "setl/checkpoint.hpp"
#include "setl/manifest.hpp"
#include "setl/metrics.hpp"
#include "setl/training.hpp"

namespace setl {

struct Fold {
  std::vector<std::string> train_sessions;
  std::string test_session;
};

struct FoldSpec {
  std::vector<Fold> folds;
};

// One fold per distinct session: fold i tests session i and trains on the rest.
FoldSpec make_folds(const Manifest& m);
FoldSpec make_folds(std::vector<std::string> sessions);

// A featurized utterance with its utterance-level label.
struct LabeledUtterance {
  FeatureMatrix features;
  int label = 0;
  std::string session;
  std::string speaker;
};

struct CvConfig {
  std::string tap = "tdnn12";
  int num_classes = 4;
  int head_hidden = 256;
  bool freeze_pretrained = false;
  TrainConfig finetune;
};

struct FoldResult {
  std::string test_session;
  double ua = 0.0;
  double wa = 0.0;
  ConfusionMatrix confusion;
  std::vector<std::string> utt_ids;
  std::vector<int> refs;
  std::vector<int> preds;
  TrainReport training;
  std::vector<std::string> warnings;
};

struct EvalReport {
  std::vector<FoldResult> folds;
  double mean_ua = 0.0;
  double mean_wa = 0.0;
  Matrix mean_confusion;             // average of row-normalized matrices
  std::vector<double> class_recalls;  // diagonal of mean_confusion
  std::string config_echo;
};

// Trains a fresh head on `train` from the shared checkpoint and scores `test`.
FoldResult run_fold(std::span<const LabeledUtterance> train, std::span<const LabeledUtterance> test,
                    const Checkpoint& pretrained, const CvConfig& cfg);

FoldResult evaluate_network(const Network& net, std::span<const LabeledUtterance> test, int num_classes);

EvalReport cross_validate(std::span<const LabeledUtterance> data, const FoldSpec& folds, const Checkpoint& pretrained,
                          const CvConfig& cfg);

// eval_report.csv: fold,test_session,ua,wa,cm_<ref>_<pred>... (normalized,
// row-major), plus a final "mean" row; confusion.txt; predictions.csv.
void write_eval_report(const std::filesystem::path& dir, const EvalReport& report);

struct TapResult {
  std::string tap;
  double ua = 0.0;
  double wa = 0.0;
};

// Fine-tunes one head per tap on every session except `test_session` and
// scores that session.
std::vector<TapResult> compare_taps(std::span<const LabeledUtterance> data, const std::string& test_session,
                                    const Checkpoint& pretrained, const std::vector<std::string>& taps,
                                    const CvConfig& cfg);
void write_tap_comparison(const std::filesystem::path& path, const std::vector<TapResult>& rows);

}  // namespace setl
