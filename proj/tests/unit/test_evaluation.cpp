#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "setl/cross_validation.hpp"
#include "setl/error.hpp"
#include "setl/metrics.hpp"
#include "setl/transfer.hpp"
#include "support.hpp"

using namespace setl;

namespace {

Matrix rows(const std::vector<std::vector<double>>& r) {
  Matrix m(r.size(), r.front().size());
  for (std::size_t i = 0; i < r.size(); ++i) std::copy(r[i].begin(), r[i].end(), m.row(i).begin());
  return m;
}

Matrix random_probs(std::mt19937_64& rng, std::size_t frames, std::size_t k) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  Matrix m(frames, k);
  for (std::size_t t = 0; t < frames; ++t) {
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += (m(t, c) = u(rng));
    for (std::size_t c = 0; c < k; ++c) m(t, c) /= s;
  }
  return m;
}

}  // namespace

TEST_CASE("frame posterior aggregation") {
  const auto d = aggregate_frame_posteriors(rows({{0.7, 0.1, 0.1, 0.1}, {0.2, 0.4, 0.2, 0.2}}));
  CHECK(d.label == 0);
  CHECK(d.score[0] == doctest::Approx(0.9));
  CHECK(d.score[1] == doctest::Approx(0.5));
  CHECK(d.score[2] == doctest::Approx(0.3));
  CHECK(d.score[3] == doctest::Approx(0.3));
  CHECK(aggregate_frame_posteriors(rows({{0.1, 0.2, 0.6, 0.1}})).label == 2);
  CHECK(aggregate_frame_posteriors(rows({{0.5, 0.5, 0.0, 0.0}})).label == 0);
  CHECK(aggregate_frame_posteriors(rows({{0.0, 0.5, 0.5, 0.0}})).label == 1);
  CHECK_THROWS_AS(aggregate_frame_posteriors(Matrix(0, 4)), Error);
}

TEST_CASE("aggregation is invariant to frame order and uniform scaling") {
  std::mt19937_64 rng(71);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix p = random_probs(rng, 1 + trial % 9, 4);
    const int label = aggregate_frame_posteriors(p).label;
    std::vector<std::size_t> order(p.rows());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    Matrix q(p.rows(), 4), s(p.rows(), 4);
    for (std::size_t i = 0; i < order.size(); ++i) {
      for (std::size_t c = 0; c < 4; ++c) {
        q(i, c) = p(order[i], c);
        s(i, c) = 3.5 * p(i, c);
      }
    }
    CHECK(aggregate_frame_posteriors(q).label == label);
    CHECK(aggregate_frame_posteriors(s).label == label);
  }
}

TEST_CASE("classify_utterance sums softmax outputs of the network") {
  std::mt19937_64 rng(72);
  const Network net = Network::initialize(testing::small_spec(3, 5, {{-1, 0, 1}}, 4), 2);
  const FeatureMatrix x = testing::random_features(rng, 11, 3);
  const auto d = classify_utterance(net, x);
  const ActivationTrace tr = forward(net, x);
  std::vector<double> score(4, 0.0);
  for (std::size_t t = 0; t < 11; ++t) {
    const auto p = softmax(tr.outputs.back().row(t));
    for (int c = 0; c < 4; ++c) score[c] += p[c];
  }
  for (int c = 0; c < 4; ++c) CHECK(d.score[c] == doctest::Approx(score[c]).epsilon(1e-12));
  CHECK(d.label == std::max_element(score.begin(), score.end()) - score.begin());
}

TEST_CASE("unweighted accuracy") {
  const std::vector<int> refs = {0, 0, 1, 1, 2, 2, 3, 3};
  CHECK(unweighted_accuracy(refs, refs, 4) == 1.0);
  CHECK(unweighted_accuracy(std::vector<int>(8, 0), refs, 4) == doctest::Approx(0.25));
  // recalls 1.0, 0.5, 0.75, 0.75
  const std::vector<int> r2 = {0, 0, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3};
  const std::vector<int> p2 = {0, 0, 1, 0, 2, 2, 2, 1, 3, 3, 3, 0};
  CHECK(unweighted_accuracy(p2, r2, 4) == doctest::Approx(0.75));
  CHECK(weighted_accuracy(p2, r2) == doctest::Approx(9.0 / 12.0));
  std::vector<std::string> warnings;
  const std::vector<int> r3 = {0, 0, 1};
  CHECK(unweighted_accuracy(std::vector<int>{0, 1, 1}, r3, 4, &warnings) == doctest::Approx(0.75));
  CHECK(warnings.size() == 2);
  CHECK_THROWS_AS(unweighted_accuracy(std::vector<int>{}, std::vector<int>{}, 4), Error);
  CHECK_THROWS_AS(unweighted_accuracy(std::vector<int>{0}, std::vector<int>{0, 1}, 4), Error);
  CHECK_THROWS_AS(unweighted_accuracy(std::vector<int>{4}, std::vector<int>{0}, 4), Error);
}

TEST_CASE("UA is invariant to utterance order") {
  std::mt19937_64 rng(73);
  std::uniform_int_distribution<int> cls(0, 3);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::pair<int, int>> pairs(40);
    for (auto& p : pairs) p = {cls(rng), cls(rng)};
    auto split = [](const std::vector<std::pair<int, int>>& v, std::vector<int>& a, std::vector<int>& b) {
      a.clear();
      b.clear();
      for (auto [x, y] : v) {
        a.push_back(x);
        b.push_back(y);
      }
    };
    std::vector<int> p, r;
    split(pairs, p, r);
    const double ua = unweighted_accuracy(p, r, 4);
    std::shuffle(pairs.begin(), pairs.end(), rng);
    split(pairs, p, r);
    CHECK(unweighted_accuracy(p, r, 4) == doctest::Approx(ua).epsilon(1e-15));
  }
}

TEST_CASE("confusion matrix identities") {
  std::mt19937_64 rng(74);
  std::uniform_int_distribution<int> cls(0, 3);
  const std::vector<int> perfect = {0, 1, 2, 3, 3};
  const ConfusionMatrix diag = confusion_matrix(perfect, perfect, 4);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) CHECK((diag.counts(r, c) != 0.0) == (r == c));
  }
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> p(30), r(30);
    for (int i = 0; i < 30; ++i) {
      p[i] = cls(rng);
      r[i] = i < 4 ? i : cls(rng);  // every class present
    }
    const ConfusionMatrix cm = confusion_matrix(p, r, 4);
    for (int c = 0; c < 4; ++c) {
      double row = 0.0;
      for (int j = 0; j < 4; ++j) row += cm.counts(c, j);
      CHECK(row == static_cast<double>(std::count(r.begin(), r.end(), c)));
    }
    CHECK(cm.trace() / cm.total() == doctest::Approx(weighted_accuracy(p, r)).epsilon(1e-15));
    const Matrix n = cm.normalized();
    double diag_mean = 0.0;
    for (int c = 0; c < 4; ++c) diag_mean += n(c, c) / 4.0;
    CHECK(std::abs(diag_mean - unweighted_accuracy(p, r, 4)) <= 1e-12);
  }
  // A 28% exc->neu confusion shows up as a normalized cell.
  std::vector<int> refs(100, 1), preds(100, 1);
  std::fill(preds.begin(), preds.begin() + 28, 2);
  CHECK(confusion_matrix(preds, refs, 4).normalized()(1, 2) == doctest::Approx(0.28));
}

TEST_CASE("averaging normalized confusion matrices") {
  const ConfusionMatrix a = confusion_matrix(std::vector<int>{0, 0, 1}, std::vector<int>{0, 1, 1}, 2);
  const ConfusionMatrix b = confusion_matrix(std::vector<int>{1, 1}, std::vector<int>{0, 1}, 2);
  const Matrix avg = average_normalized(std::vector<ConfusionMatrix>{a, b});
  CHECK(avg(0, 0) == doctest::Approx(0.5));
  CHECK(avg(0, 1) == doctest::Approx(0.5));
  CHECK(avg(1, 0) == doctest::Approx(0.25));
  CHECK(avg(1, 1) == doctest::Approx(0.75));
}

TEST_CASE("session folds") {
  const FoldSpec five = make_folds(std::vector<std::string>{"Ses03", "Ses01", "Ses02", "Ses05", "Ses04", "Ses01"});
  REQUIRE(five.folds.size() == 5);
  std::set<std::string> tested;
  for (const auto& f : five.folds) {
    tested.insert(f.test_session);
    CHECK(f.train_sessions.size() == 4);
    CHECK(std::find(f.train_sessions.begin(), f.train_sessions.end(), f.test_session) == f.train_sessions.end());
  }
  CHECK(tested.size() == 5);
  CHECK(five.folds.front().test_session == "Ses01");
  CHECK(make_folds(std::vector<std::string>{"a", "b"}).folds.size() == 2);
  CHECK_THROWS_AS(make_folds(std::vector<std::string>{"a", "a"}), Error);
}

TEST_CASE("cross-validation harness") {
  std::mt19937_64 rng(75);
  std::normal_distribution<double> g;
  std::vector<LabeledUtterance> data;
  for (int s = 1; s <= 3; ++s) {
    for (int u = 0; u < 8; ++u) {
      LabeledUtterance lu;
      lu.label = u % 4;
      lu.session = "S" + std::to_string(s);
      lu.speaker = lu.session + "_a";
      lu.features = testing::random_features(rng, 15, 6, 0.5);
      lu.features.utterance_id = lu.session + "_" + std::to_string(u);
      for (std::size_t t = 0; t < 15; ++t) lu.features.frames(t, static_cast<std::size_t>(lu.label)) += 2.0;
      data.push_back(std::move(lu));
    }
  }
  SpecOptions opts;
  opts.width_factor = 1.0 / 128;
  opts.input_dim = 6;
  Checkpoint ck;
  ck.net = Network::initialize(paper_default_spec(opts), 1);
  CvConfig cfg;
  cfg.head_hidden = 16;
  cfg.finetune.epochs = 3;
  cfg.finetune.learning_rate = 0.01;
  cfg.finetune.batch_frames = 64;
  cfg.finetune.seed = 9;
  const std::vector<std::string> sessions = {"S1", "S2", "S3"};
  const EvalReport a = cross_validate(data, make_folds(sessions), ck, cfg);
  const EvalReport b = cross_validate(data, make_folds(sessions), ck, cfg);
  REQUIRE(a.folds.size() == 3);
  double mean = 0.0;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < 3; ++i) {
    mean += a.folds[i].ua / 3.0;
    CHECK(a.folds[i].ua == b.folds[i].ua);
    CHECK(a.folds[i].preds == b.folds[i].preds);
    for (const auto& id : a.folds[i].utt_ids) CHECK(seen.insert(id).second);
  }
  CHECK(seen.size() == data.size());
  CHECK(a.mean_ua == doctest::Approx(mean).epsilon(1e-15));
  CHECK(a.class_recalls.size() == 4);

  testing::TempDir dir;
  EvalReport with_echo = a;
  with_echo.config_echo = "{\"seed\": 1}\n";
  write_eval_report(dir.path(), with_echo);
  const std::string csv = testing::slurp(dir / "eval_report.csv");
  CHECK(csv.rfind("fold,test_session,ua,wa,cm_ang_ang,cm_ang_exc,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  CHECK(csv.find("\nmean,all,") != std::string::npos);
  CHECK(testing::slurp(dir / "config.json") == "{\"seed\": 1}\n");
  CHECK(std::filesystem::exists(dir / "confusion.txt"));
  CHECK(std::count_if(csv.begin(), csv.end(), [](char c) { return c == ','; }) == 5 * (4 + 16 - 1));
  // Every confusion row in the file is a distribution.
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  while (std::getline(lines, line)) {
    std::vector<double> cells;
    std::istringstream fields(line);
    std::string field;
    for (int i = 0; std::getline(fields, field, ','); ++i) {
      if (i >= 4) cells.push_back(std::stod(field));
    }
    REQUIRE(cells.size() == 16);
    for (int r = 0; r < 4; ++r) {
      double sum = 0.0;
      for (int c = 0; c < 4; ++c) {
        const double v = cells[static_cast<std::size_t>(r * 4 + c)];
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        sum += v;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }

  SUBCASE("a fold missing a class warns and continues") {
    std::vector<LabeledUtterance> skewed;
    for (const auto& u : data) {
      if (!(u.session != "S1" && u.label == 3)) skewed.push_back(u);
    }
    const FoldResult r = run_fold(std::vector<LabeledUtterance>(skewed.begin() + 8, skewed.end()),
                                  std::vector<LabeledUtterance>(skewed.begin(), skewed.begin() + 8), ck, cfg);
    CHECK_FALSE(r.warnings.empty());
  }
  SUBCASE("tap comparison emits one row per tap") {
    const auto rowsv = compare_taps(data, "S3", ck, {"tdnn12", "tdnn13", "prefinal"}, cfg);
    REQUIRE(rowsv.size() == 3);
    CHECK(rowsv[2].tap == "prefinal");
    write_tap_comparison(dir / "taps.csv", rowsv);
    const std::string t = testing::slurp(dir / "taps.csv");
    CHECK(t.rfind("tap,ua,wa\ntdnn12,", 0) == 0);
    CHECK(std::count(t.begin(), t.end(), '\n') == 4);
  }
}
