#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "setl/matrix.hpp"
#include "setl/mfcc.hpp"

namespace setl {

// Diagonal-covariance Gaussian mixture (the universal background model).
struct DiagGmm {
  std::vector<double> weights;  // C, positive, summing to 1
  Matrix means;                 // C x D
  Matrix variances;             // C x D, floored

  std::size_t num_components() const noexcept { return weights.size(); }
  std::size_t dim() const noexcept { return means.cols(); }

  // Throws if shapes disagree or the weight/variance invariants fail.
  void validate() const;

  // log p(x) and, optionally, the posterior responsibilities of every component.
  double log_likelihood(std::span<const double> x, std::span<double> posteriors = {}) const;
};

struct UbmOptions {
  int components = 64;
  int iterations = 20;
  std::uint64_t seed = 0;
  // Variances are floored at this fraction of the pooled per-dimension variance.
  double variance_floor_fraction = 1e-4;
};

// EM for a diagonal GMM, seeded k-means++ style. If `log_likelihoods` is
// given it receives the total data log-likelihood before each iteration and
// after the last one (iterations + 1 values).
DiagGmm train_ubm(std::span<const FeatureMatrix> features, const UbmOptions& opts,
                  std::vector<double>* log_likelihoods = nullptr);

// Zeroth- and centered first-order Baum-Welch statistics for one utterance
// (or a pooled set of utterances).
struct BwStats {
  std::vector<double> n;  // C occupancies
  Matrix f;               // C x D, sum_t gamma_t(c) (x_t - m_c)

  BwStats& operator+=(const BwStats& other);
};

BwStats accumulate_stats(const DiagGmm& gmm, const FeatureMatrix& x);

}  // namespace setl
