#include "setl/metrics.hpp"

#include <algorithm>

#include "setl/error.hpp"
#include "setl/training.hpp"

namespace setl {

UtteranceDecision aggregate_frame_posteriors(const Matrix& frame_probs) {
  if (frame_probs.rows() == 0) fail(ErrorKind::invalid_argument, "cannot classify an empty utterance");
  UtteranceDecision d;
  d.score.assign(frame_probs.cols(), 0.0);
  for (std::size_t t = 0; t < frame_probs.rows(); ++t) {
    const auto row = frame_probs.row(t);
    for (std::size_t c = 0; c < row.size(); ++c) d.score[c] += row[c];
  }
  // max_element returns the first maximum, i.e. the lowest index on ties.
  d.label = static_cast<int>(std::max_element(d.score.begin(), d.score.end()) - d.score.begin());
  return d;
}

UtteranceDecision classify_utterance(const Network& net, const FeatureMatrix& x) {
  if (x.num_frames() == 0) fail(ErrorKind::invalid_argument, "cannot classify an empty utterance");
  const ActivationTrace trace = forward(net, x);
  const Matrix& logits = trace.outputs.back();
  Matrix probs(logits.rows(), logits.cols());
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    const auto p = softmax(logits.row(t));
    std::copy(p.begin(), p.end(), probs.row(t).begin());
  }
  return aggregate_frame_posteriors(probs);
}

namespace {

void check_labels(std::span<const int> preds, std::span<const int> refs, int num_classes) {
  if (preds.empty() || refs.empty()) fail(ErrorKind::invalid_argument, "metrics: empty input");
  if (preds.size() != refs.size()) fail(ErrorKind::invalid_argument, "metrics: predictions and references differ in length");
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= num_classes || refs[i] < 0 || refs[i] >= num_classes) {
      fail(ErrorKind::invalid_argument, "metrics: label out of range");
    }
  }
}

}  // namespace

ConfusionMatrix confusion_matrix(std::span<const int> preds, std::span<const int> refs, int num_classes) {
  if (num_classes < 1) fail(ErrorKind::invalid_argument, "metrics: need at least one class");
  check_labels(preds, refs, num_classes);
  ConfusionMatrix cm{Matrix(num_classes, num_classes)};
  for (std::size_t i = 0; i < preds.size(); ++i) cm.counts(refs[i], preds[i]) += 1.0;
  return cm;
}

Matrix ConfusionMatrix::normalized() const {
  Matrix out(counts.rows(), counts.cols());
  for (std::size_t r = 0; r < counts.rows(); ++r) {
    double sum = 0.0;
    for (double v : counts.row(r)) sum += v;
    if (sum == 0.0) continue;
    for (std::size_t c = 0; c < counts.cols(); ++c) out(r, c) = counts(r, c) / sum;
  }
  return out;
}

double ConfusionMatrix::total() const {
  double s = 0.0;
  for (double v : counts.values()) s += v;
  return s;
}

double ConfusionMatrix::trace() const {
  double s = 0.0;
  for (std::size_t i = 0; i < counts.rows(); ++i) s += counts(i, i);
  return s;
}

double unweighted_accuracy(std::span<const int> preds, std::span<const int> refs, int num_classes,
                           std::vector<std::string>* warnings) {
  const ConfusionMatrix cm = confusion_matrix(preds, refs, num_classes);
  double recall_sum = 0.0;
  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    double row = 0.0;
    for (double v : cm.counts.row(c)) row += v;
    if (row == 0.0) {
      if (warnings) warnings->push_back("class " + std::to_string(c) + " absent from references; excluded from UA");
      continue;
    }
    recall_sum += cm.counts(c, c) / row;
    ++present;
  }
  return recall_sum / present;
}

double weighted_accuracy(std::span<const int> preds, std::span<const int> refs) {
  if (preds.empty() || preds.size() != refs.size()) fail(ErrorKind::invalid_argument, "metrics: bad input lengths");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == refs[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

Matrix average_normalized(std::span<const ConfusionMatrix> matrices) {
  if (matrices.empty()) fail(ErrorKind::invalid_argument, "average_normalized: no matrices");
  Matrix avg(matrices.front().counts.rows(), matrices.front().counts.cols());
  for (const auto& m : matrices) {
    if (m.counts.rows() != avg.rows()) fail(ErrorKind::dimension_mismatch, "average_normalized: class count differs");
    const Matrix n = m.normalized();
    for (std::size_t i = 0; i < avg.size(); ++i) avg.values()[i] += n.values()[i];
  }
  for (double& v : avg.values()) v /= static_cast<double>(matrices.size());
  return avg;
}

}  // namespace setl
