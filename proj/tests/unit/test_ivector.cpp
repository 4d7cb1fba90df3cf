#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "oracles.hpp"
#include "setl/error.hpp"
#include "setl/ivector.hpp"
#include "support.hpp"

using namespace setl;

namespace {

BwStats random_stats(std::mt19937_64& rng, std::size_t C, std::size_t D) {
  std::uniform_real_distribution<double> u(0.0, 20.0);
  std::normal_distribution<double> g(0.0, 3.0);
  BwStats s{std::vector<double>(C), Matrix(C, D)};
  for (double& n : s.n) n = u(rng);
  for (double& f : s.f.values()) f = g(rng);
  return s;
}

TvMatrix random_tv(std::mt19937_64& rng, std::size_t rows, std::size_t R, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  TvMatrix tv{Matrix(rows, R)};
  for (double& v : tv.t.values()) v = g(rng);
  return tv;
}

// Smallest cosine among the principal angles between the column spans.
double min_principal_cosine(const Matrix& a, const Matrix& b) {
  using M = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const M> ma(a.data(), a.rows(), a.cols()), mb(b.data(), b.rows(), b.cols());
  const Eigen::MatrixXd qa = Eigen::HouseholderQR<Eigen::MatrixXd>(ma).householderQ() *
                             Eigen::MatrixXd::Identity(a.rows(), a.cols());
  const Eigen::MatrixXd qb = Eigen::HouseholderQR<Eigen::MatrixXd>(mb).householderQ() *
                             Eigen::MatrixXd::Identity(b.rows(), b.cols());
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(qa.transpose() * qb);
  return svd.singularValues().minCoeff();
}

}  // namespace

TEST_CASE("i-vector posterior mean matches a dense Gauss-Jordan solve") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const DiagGmm gmm = oracle::random_gmm(rng, 2, 3);
    const TvMatrix tv = random_tv(rng, 6, 2);
    const BwStats s = random_stats(rng, 2, 3);
    const IVector iv = extract_ivector(gmm, tv, s);
    const auto ref = oracle::ivector(gmm, tv, s);
    for (std::size_t i = 0; i < 2; ++i) CHECK(std::abs(iv.w[i] - ref[i]) <= 1e-8 * std::max(1.0, std::abs(ref[i])));
  }
}

TEST_CASE("prior mean without evidence") {
  std::mt19937_64 rng(22);
  const DiagGmm gmm = oracle::random_gmm(rng, 3, 2);
  const TvMatrix tv = random_tv(rng, 6, 4);
  BwStats empty{std::vector<double>(3, 0.0), Matrix(3, 2)};
  for (double v : extract_ivector(gmm, tv, empty).w) CHECK(v == 0.0);
  BwStats no_first{std::vector<double>{5, 1, 9}, Matrix(3, 2)};
  for (double v : extract_ivector(gmm, tv, no_first).w) CHECK(v == 0.0);
}

TEST_CASE("more evidence moves the estimate toward the generating vector") {
  std::mt19937_64 rng(23);
  const DiagGmm gmm = oracle::random_gmm(rng, 2, 3);
  const TvMatrix tv = random_tv(rng, 6, 2);
  const std::vector<double> w_star = {0.7, -1.3};
  auto stats_at = [&](double n) {
    BwStats s{std::vector<double>{n, n}, Matrix(2, 3)};
    for (std::size_t row = 0; row < 6; ++row) {
      s.f(row / 3, row % 3) = n * (tv.t(row, 0) * w_star[0] + tv.t(row, 1) * w_star[1]);
    }
    return s;
  };
  const auto small = extract_ivector(gmm, tv, stats_at(1.0)).w;
  const auto doubled = extract_ivector(gmm, tv, stats_at(2.0)).w;
  CHECK((small[0] != doubled[0] || small[1] != doubled[1]));
  const auto big = extract_ivector(gmm, tv, stats_at(1e6)).w;
  CHECK(std::abs(big[0] - w_star[0]) < 1e-2);
  CHECK(std::abs(big[1] - w_star[1]) < 1e-2);
}

TEST_CASE("non-finite or misshapen statistics are rejected") {
  std::mt19937_64 rng(24);
  const DiagGmm gmm = oracle::random_gmm(rng, 2, 3);
  const TvMatrix tv = random_tv(rng, 6, 2);
  BwStats s = random_stats(rng, 2, 3);
  s.f(1, 1) = std::nan("");
  CHECK_THROWS_AS(extract_ivector(gmm, tv, s), Error);
  CHECK_THROWS_AS(extract_ivector(gmm, random_tv(rng, 5, 2), random_stats(rng, 2, 3)), Error);
}

TEST_CASE("total variability training") {
  std::mt19937_64 rng(25);
  // Generating model: two far-apart components in 3 dims, known T*.
  DiagGmm gmm;
  gmm.weights = {0.5, 0.5};
  gmm.means = Matrix(2, 3);
  gmm.variances = Matrix(2, 3, 0.01);
  for (int d = 0; d < 3; ++d) {
    gmm.means(0, d) = -20.0;
    gmm.means(1, d) = 20.0;
  }
  const TvMatrix t_star = random_tv(rng, 6, 2);
  std::normal_distribution<double> g;
  std::vector<BwStats> stats;
  for (int u = 0; u < 300; ++u) {
    const double w0 = g(rng), w1 = g(rng);
    FeatureMatrix x;
    x.frames = Matrix(100, 3);
    for (std::size_t t = 0; t < 100; ++t) {
      const std::size_t c = t % 2;
      for (std::size_t d = 0; d < 3; ++d) {
        const std::size_t row = c * 3 + d;
        x.frames(t, d) = gmm.means(c, d) + t_star.t(row, 0) * w0 + t_star.t(row, 1) * w1 + 0.1 * g(rng);
      }
    }
    stats.push_back(accumulate_stats(gmm, x));
  }

  SUBCASE("recovers the generating subspace") {
    std::vector<double> objective;
    const TvMatrix tv = train_total_variability(stats, gmm, TvOptions{2, 20, 5}, &objective);
    CHECK(min_principal_cosine(tv.t, t_star.t) > std::cos(5.0 * std::numbers::pi / 180.0));
    REQUIRE(objective.size() == 21);
    for (std::size_t i = 1; i < objective.size(); ++i) CHECK(objective[i] >= objective[i - 1] - 1e-6);
  }
  SUBCASE("zero iterations reproduces the seeded initialization") {
    const TvMatrix a = train_total_variability(stats, gmm, TvOptions{2, 0, 9});
    const TvMatrix b = train_total_variability(stats, gmm, TvOptions{2, 0, 9});
    CHECK(a.t == b.t);
    CHECK(a.t == init_total_variability(gmm, 2, 9).t);
    const TvMatrix c = train_total_variability(stats, gmm, TvOptions{2, 3, 9});
    const TvMatrix d = train_total_variability(stats, gmm, TvOptions{2, 3, 9});
    CHECK(c.t == d.t);
  }
  SUBCASE("all-zero initialization is a flagged fixed point") {
    try {
      train_total_variability(stats, gmm, TvMatrix{Matrix(6, 2)}, 1);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::numeric);
    }
  }
  SUBCASE("needs at least R utterances") {
    const std::vector<BwStats> two(stats.begin(), stats.begin() + 2);
    CHECK_THROWS_AS(train_total_variability(two, gmm, TvOptions{3, 1, 0}), Error);
  }
}

TEST_CASE("appending the adaptation vector") {
  FeatureMatrix x;
  x.utterance_id = "u";
  x.frames = Matrix(2, 2);
  x.frames(0, 0) = 1;
  x.frames(0, 1) = 2;
  x.frames(1, 0) = 3;
  x.frames(1, 1) = 4;
  const FeatureMatrix y = append_adaptation(x, IVector{{9, 9}, "u"});
  CHECK(y.utterance_id == "u");
  REQUIRE(y.dim() == 4);
  CHECK(y.frames.values() == std::vector<double>{1, 2, 9, 9, 3, 4, 9, 9});
  CHECK(append_adaptation(x, IVector{{}, "u"}).frames == x.frames);
  std::mt19937_64 rng(26);
  const FeatureMatrix mfcc = testing::random_features(rng, 7, 40);
  CHECK(append_adaptation(mfcc, IVector{std::vector<double>(100, 0.5), "s"}).dim() == 140);
}

TEST_CASE("IVEX1 model file round trip") {
  std::mt19937_64 rng(27);
  IvectorExtractor model{oracle::random_gmm(rng, 3, 2), random_tv(rng, 6, 4)};
  testing::TempDir dir;
  save_ivector_extractor(dir / "m.ivex", model);
  const std::string bytes = testing::slurp(dir / "m.ivex");
  CHECK(bytes.substr(0, 5) == "IVEX1");
  CHECK(bytes.size() == 5 + 12 + 8 * (3 + 6 + 6 + 24));
  const IvectorExtractor back = load_ivector_extractor(dir / "m.ivex");
  CHECK(back.ubm.weights == model.ubm.weights);
  CHECK(back.ubm.means == model.ubm.means);
  CHECK(back.ubm.variances == model.ubm.variances);
  CHECK(back.tv.t == model.tv.t);
  testing::dump(dir / "bad.ivex", bytes.substr(0, 40));
  CHECK_THROWS_AS(load_ivector_extractor(dir / "bad.ivex"), Error);
}
