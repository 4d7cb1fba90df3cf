#pragma once

#include <span>
#include <string>
#include <vector>

#include "setl/matrix.hpp"
#include "setl/tdnn.hpp"

namespace setl {

struct UtteranceDecision {
  int label = 0;
  std::vector<double> score;  // sum over frames of softmax outputs
};

// Sums per-frame probability rows; ties go to the lowest class index.
UtteranceDecision aggregate_frame_posteriors(const Matrix& frame_probs);

// Dense forward, softmax per frame, then aggregate_frame_posteriors.
UtteranceDecision classify_utterance(const Network& net, const FeatureMatrix& x);

// Macro-averaged recall over classes present in `refs`. Absent classes are
// skipped and reported through `warnings` when given.
double unweighted_accuracy(std::span<const int> preds, std::span<const int> refs, int num_classes,
                           std::vector<std::string>* warnings = nullptr);
double weighted_accuracy(std::span<const int> preds, std::span<const int> refs);

// Rows are reference classes, columns predictions.
struct ConfusionMatrix {
  Matrix counts;

  int num_classes() const { return static_cast<int>(counts.rows()); }
  // Each row divided by its sum; rows with no references stay zero.
  Matrix normalized() const;
  double total() const;
  double trace() const;
};

ConfusionMatrix confusion_matrix(std::span<const int> preds, std::span<const int> refs, int num_classes);

// Element-wise mean of row-normalized matrices.
Matrix average_normalized(std::span<const ConfusionMatrix> matrices);

}  // namespace setl
