#include "setl/cross_validation.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <set>

#include "setl/error.hpp"
#include "setl/transfer.hpp"

namespace setl {

FoldSpec make_folds(std::vector<std::string> sessions) {
  std::sort(sessions.begin(), sessions.end());
  sessions.erase(std::unique(sessions.begin(), sessions.end()), sessions.end());
  if (sessions.size() < 2) fail(ErrorKind::invalid_argument, "cross-validation needs at least two sessions");
  FoldSpec spec;
  for (const auto& test : sessions) {
    Fold f;
    f.test_session = test;
    for (const auto& s : sessions) {
      if (s != test) f.train_sessions.push_back(s);
    }
    spec.folds.push_back(std::move(f));
  }
  return spec;
}

FoldSpec make_folds(const Manifest& m) { return make_folds(m.sessions()); }

namespace {

std::vector<LabeledFrames> to_frames(std::span<const LabeledUtterance> utts) {
  std::vector<LabeledFrames> out;
  out.reserve(utts.size());
  for (const auto& u : utts) out.push_back(label_all_frames(u.features, u.label));
  return out;
}

std::string class_name(int c) {
  return c < static_cast<int>(kEmotionLabels.size()) ? std::string(kEmotionLabels[c]) : "c" + std::to_string(c);
}

}  // namespace

FoldResult evaluate_network(const Network& net, std::span<const LabeledUtterance> test, int num_classes) {
  if (test.empty()) fail(ErrorKind::invalid_argument, "evaluation: no test utterances");
  FoldResult r;
  for (const auto& u : test) {
    r.utt_ids.push_back(u.features.utterance_id);
    r.refs.push_back(u.label);
    r.preds.push_back(classify_utterance(net, u.features).label);
  }
  r.ua = unweighted_accuracy(r.preds, r.refs, num_classes, &r.warnings);
  r.wa = weighted_accuracy(r.preds, r.refs);
  r.confusion = confusion_matrix(r.preds, r.refs, num_classes);
  return r;
}

FoldResult run_fold(std::span<const LabeledUtterance> train, std::span<const LabeledUtterance> test,
                    const Checkpoint& pretrained, const CvConfig& cfg) {
  if (train.empty()) fail(ErrorKind::invalid_argument, "fold has no training utterances");
  std::vector<std::string> warnings;
  std::set<int> seen;
  for (const auto& u : train) seen.insert(u.label);
  for (int c = 0; c < cfg.num_classes; ++c) {
    if (!seen.count(c)) warnings.push_back("class " + class_name(c) + " absent from fold training data");
  }
  Network net = attach_head(pretrained, cfg.tap, cfg.num_classes, HeadOptions{cfg.head_hidden, cfg.finetune.seed});
  const FreezePolicy policy = cfg.freeze_pretrained ? FreezePolicy::freeze_pretrained(net) : FreezePolicy{};
  const auto frames = to_frames(train);
  TrainReport report = finetune(net, frames, policy, cfg.finetune);
  FoldResult r = evaluate_network(net, test, cfg.num_classes);
  r.training = std::move(report);
  r.warnings.insert(r.warnings.begin(), warnings.begin(), warnings.end());
  return r;
}

EvalReport cross_validate(std::span<const LabeledUtterance> data, const FoldSpec& folds, const Checkpoint& pretrained,
                          const CvConfig& cfg) {
  if (folds.folds.empty()) fail(ErrorKind::invalid_argument, "cross_validate: no folds");
  EvalReport report;
  std::vector<ConfusionMatrix> matrices;
  for (const auto& fold : folds.folds) {
    const std::set<std::string> train_sessions(fold.train_sessions.begin(), fold.train_sessions.end());
    std::vector<LabeledUtterance> train, test;
    for (const auto& u : data) {
      if (u.session == fold.test_session) test.push_back(u);
      else if (train_sessions.count(u.session)) train.push_back(u);
    }
    if (test.empty()) fail(ErrorKind::invalid_argument, "session '" + fold.test_session + "' has no utterances");
    FoldResult r = run_fold(train, test, pretrained, cfg);
    r.test_session = fold.test_session;
    matrices.push_back(r.confusion);
    report.folds.push_back(std::move(r));
  }
  for (const auto& f : report.folds) {
    report.mean_ua += f.ua;
    report.mean_wa += f.wa;
  }
  report.mean_ua /= static_cast<double>(report.folds.size());
  report.mean_wa /= static_cast<double>(report.folds.size());
  report.mean_confusion = average_normalized(matrices);
  for (std::size_t c = 0; c < report.mean_confusion.rows(); ++c) {
    report.class_recalls.push_back(report.mean_confusion(c, c));
  }
  return report;
}

void write_eval_report(const std::filesystem::path& dir, const EvalReport& report) {
  std::filesystem::create_directories(dir);
  const int k = report.folds.empty() ? 0 : report.folds.front().confusion.num_classes();
  {
    std::ofstream out(dir / "eval_report.csv");
    if (!out) fail(ErrorKind::io, "cannot write eval report in " + dir.string());
    out << "fold,test_session,ua,wa";
    for (int r = 0; r < k; ++r) {
      for (int c = 0; c < k; ++c) out << ",cm_" << class_name(r) << '_' << class_name(c);
    }
    out << '\n' << std::setprecision(10);
    for (std::size_t i = 0; i < report.folds.size(); ++i) {
      const auto& f = report.folds[i];
      out << i + 1 << ',' << f.test_session << ',' << f.ua << ',' << f.wa;
      const Matrix normalized = f.confusion.normalized();
      for (double v : normalized.values()) out << ',' << v;
      out << '\n';
    }
    out << "mean,all," << report.mean_ua << ',' << report.mean_wa;
    for (double v : report.mean_confusion.values()) out << ',' << v;
    out << '\n';
  }
  {
    std::ofstream out(dir / "confusion.txt");
    out << "# mean row-normalized confusion matrix (rows: reference, columns: prediction)\n";
    out << std::setw(6) << "";
    for (int c = 0; c < k; ++c) out << std::setw(8) << class_name(c);
    out << '\n' << std::fixed << std::setprecision(3);
    for (int r = 0; r < k; ++r) {
      out << std::setw(6) << class_name(r);
      for (int c = 0; c < k; ++c) out << std::setw(8) << report.mean_confusion(r, c);
      out << '\n';
    }
    out << "# mean UA " << report.mean_ua << ", mean WA " << report.mean_wa << '\n';
    for (const auto& f : report.folds) {
      for (const auto& w : f.warnings) out << "# warning (" << f.test_session << "): " << w << '\n';
    }
  }
  {
    std::ofstream out(dir / "predictions.csv");
    out << "utt_id,test_session,ref,pred\n";
    for (const auto& f : report.folds) {
      for (std::size_t i = 0; i < f.utt_ids.size(); ++i) {
        out << f.utt_ids[i] << ',' << f.test_session << ',' << class_name(f.refs[i]) << ',' << class_name(f.preds[i])
            << '\n';
      }
    }
  }
  if (!report.config_echo.empty()) {
    std::ofstream out(dir / "config.json");
    out << report.config_echo;
    if (report.config_echo.back() != '\n') out << '\n';
  }
}

std::vector<TapResult> compare_taps(std::span<const LabeledUtterance> data, const std::string& test_session,
                                    const Checkpoint& pretrained, const std::vector<std::string>& taps,
                                    const CvConfig& cfg) {
  std::vector<LabeledUtterance> train, test;
  for (const auto& u : data) (u.session == test_session ? test : train).push_back(u);
  if (test.empty()) fail(ErrorKind::invalid_argument, "no utterances in held-out session '" + test_session + "'");
  std::vector<TapResult> rows;
  for (const auto& tap : taps) {
    CvConfig c = cfg;
    c.tap = tap;
    const FoldResult r = run_fold(train, test, pretrained, c);
    rows.push_back({tap, r.ua, r.wa});
  }
  return rows;
}

void write_tap_comparison(const std::filesystem::path& path, const std::vector<TapResult>& rows) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write tap comparison: " + path.string());
  out << "tap,ua,wa\n" << std::setprecision(10);
  for (const auto& r : rows) out << r.tap << ',' << r.ua << ',' << r.wa << '\n';
}

}  // namespace setl
