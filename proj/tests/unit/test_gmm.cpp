#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "setl/error.hpp"
#include "setl/gmm.hpp"
#include "support.hpp"

using namespace setl;

namespace {

FeatureMatrix two_clusters(std::mt19937_64& rng, std::size_t per_cluster) {
  std::normal_distribution<double> g(0.0, 0.1);
  FeatureMatrix f;
  f.frames = Matrix(2 * per_cluster, 2);
  for (std::size_t t = 0; t < 2 * per_cluster; ++t) {
    const double centre = t < per_cluster ? -5.0 : 5.0;
    f.frames(t, 0) = centre + g(rng);
    f.frames(t, 1) = centre + g(rng);
  }
  return f;
}

}  // namespace

TEST_CASE("single component is the sample mean and variance") {
  std::mt19937_64 rng(1);
  std::vector<FeatureMatrix> feats = {testing::random_features(rng, 30, 3, 2.0),
                                      testing::random_features(rng, 20, 3, 2.0)};
  const DiagGmm gmm = train_ubm(feats, {1, 5, 7, 1e-4});
  std::vector<double> mean(3, 0.0), var(3, 0.0);
  for (const auto& f : feats) {
    for (std::size_t t = 0; t < f.num_frames(); ++t) {
      for (int d = 0; d < 3; ++d) mean[d] += f.frames(t, d) / 50.0;
    }
  }
  for (const auto& f : feats) {
    for (std::size_t t = 0; t < f.num_frames(); ++t) {
      for (int d = 0; d < 3; ++d) var[d] += (f.frames(t, d) - mean[d]) * (f.frames(t, d) - mean[d]) / 50.0;
    }
  }
  CHECK(gmm.weights[0] == doctest::Approx(1.0));
  for (int d = 0; d < 3; ++d) {
    CHECK(gmm.means(0, d) == doctest::Approx(mean[d]).epsilon(1e-12));
    CHECK(gmm.variances(0, d) == doctest::Approx(var[d]).epsilon(1e-10));
  }
}

TEST_CASE("two separated clusters are recovered") {
  std::mt19937_64 rng(2);
  const std::vector<FeatureMatrix> feats = {two_clusters(rng, 200)};
  std::vector<double> ll;
  const DiagGmm gmm = train_ubm(feats, {2, 10, 3, 1e-4}, &ll);
  gmm.validate();
  const int lo = gmm.means(0, 0) < 0.0 ? 0 : 1;
  for (int d = 0; d < 2; ++d) {
    double neg = 0.0, pos = 0.0;
    for (std::size_t t = 0; t < 200; ++t) {
      neg += feats[0].frames(t, d) / 200.0;
      pos += feats[0].frames(t + 200, d) / 200.0;
    }
    CHECK(std::abs(gmm.means(lo, d) - neg) < 0.01);
    CHECK(std::abs(gmm.means(1 - lo, d) - pos) < 0.01);
  }
  for (std::size_t i = 1; i < ll.size(); ++i) CHECK(ll[i] >= ll[i - 1] - 1e-6);
}

TEST_CASE("EM log-likelihood never decreases on random data") {
  std::mt19937_64 rng(3);
  std::vector<FeatureMatrix> feats;
  for (int u = 0; u < 5; ++u) feats.push_back(testing::random_features(rng, 100, 4));
  std::vector<double> ll;
  const DiagGmm gmm = train_ubm(feats, {8, 20, 9, 1e-4}, &ll);
  REQUIRE(ll.size() == 21);
  for (std::size_t i = 1; i < ll.size(); ++i) CHECK(ll[i] >= ll[i - 1] - 1e-6);
  gmm.validate();
}

TEST_CASE("zero iterations returns the seeded initialization") {
  std::mt19937_64 rng(4);
  const std::vector<FeatureMatrix> feats = {testing::random_features(rng, 200, 3)};
  const DiagGmm a = train_ubm(feats, {4, 0, 17, 1e-4});
  const DiagGmm b = train_ubm(feats, {4, 0, 17, 1e-4});
  CHECK(a.means == b.means);
  for (double w : a.weights) CHECK(w == doctest::Approx(0.25));
  // Every initial mean is one of the data frames.
  for (std::size_t c = 0; c < 4; ++c) {
    bool found = false;
    for (std::size_t t = 0; t < 200; ++t) found = found || std::equal(a.means.row(c).begin(), a.means.row(c).end(),
                                                                          feats[0].frames.row(t).begin());
    CHECK(found);
  }
}

TEST_CASE("training is deterministic under a seed") {
  std::mt19937_64 rng(5);
  const std::vector<FeatureMatrix> feats = {testing::random_features(rng, 300, 3)};
  const DiagGmm a = train_ubm(feats, {4, 5, 99, 1e-4});
  const DiagGmm b = train_ubm(feats, {4, 5, 99, 1e-4});
  CHECK(a.means == b.means);
  CHECK(a.variances == b.variances);
  CHECK(a.weights == b.weights);
}

TEST_CASE("train_ubm rejects bad inputs") {
  std::mt19937_64 rng(6);
  const std::vector<FeatureMatrix> few = {testing::random_features(rng, 39, 2)};
  CHECK_THROWS_AS(train_ubm(few, {4, 1, 0, 1e-4}), Error);
  CHECK_THROWS_AS(train_ubm(few, {0, 1, 0, 1e-4}), Error);
  const std::vector<FeatureMatrix> mixed = {testing::random_features(rng, 30, 2), testing::random_features(rng, 30, 3)};
  CHECK_THROWS_AS(train_ubm(mixed, {1, 1, 0, 1e-4}), Error);
}

TEST_CASE("Baum-Welch statistics") {
  std::mt19937_64 rng(7);
  SUBCASE("agree with direct summation") {
    const DiagGmm gmm = oracle::random_gmm(rng, 4, 3, 1.0);
    const FeatureMatrix x = testing::random_features(rng, 50, 3, 2.0);
    const BwStats s = accumulate_stats(gmm, x);
    const BwStats ref = oracle::bw_stats(gmm, x.frames);
    double total = 0.0;
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(std::abs(s.n[c] - ref.n[c]) < 1e-8);
      CHECK(s.n[c] >= 0.0);
      total += s.n[c];
      for (std::size_t d = 0; d < 3; ++d) CHECK(std::abs(s.f(c, d) - ref.f(c, d)) < 1e-8);
    }
    CHECK(total == doctest::Approx(50.0).epsilon(1e-8));
  }
  SUBCASE("a frame at a far-separated mean") {
    DiagGmm gmm = oracle::random_gmm(rng, 3, 2, 1.0);
    gmm.means(0, 0) = 100.0;
    gmm.means(0, 1) = -100.0;
    FeatureMatrix x;
    x.frames = Matrix(1, 2);
    x.frames(0, 0) = 100.0;
    x.frames(0, 1) = -100.0;
    const BwStats s = accumulate_stats(gmm, x);
    CHECK(s.n[0] == doctest::Approx(1.0));
    CHECK(std::abs(s.f(0, 0)) < 1e-12);
    CHECK(std::abs(s.f(0, 1)) < 1e-12);
  }
  SUBCASE("posteriors sum to one") {
    const DiagGmm gmm = oracle::random_gmm(rng, 5, 2);
    std::vector<double> post(5);
    const std::vector<double> x = {0.3, -1.2};
    gmm.log_likelihood(x, post);
    double s = 0.0;
    for (double p : post) s += p;
    CHECK(std::abs(s - 1.0) < 1e-10);
  }
  SUBCASE("dimension mismatch") {
    const DiagGmm gmm = oracle::random_gmm(rng, 2, 3);
    CHECK_THROWS_AS(accumulate_stats(gmm, testing::random_features(rng, 5, 4)), Error);
  }
}
