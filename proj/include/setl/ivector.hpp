#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "setl/gmm.hpp"

namespace setl {

// Total-variability matrix: supervector M = m + T w, T is (C*D) x R with the
// rows of component c stored contiguously at [c*D, (c+1)*D).
struct TvMatrix {
  Matrix t;

  std::size_t ivector_dim() const noexcept { return t.cols(); }
};

struct IVector {
  std::vector<double> w;
  std::string scope;  // utterance or speaker id the vector was computed over
};

struct TvOptions {
  int ivector_dim = 100;
  int iterations = 10;
  std::uint64_t seed = 0;
};

// Seeded N(0, 1) * 0.1 initialization; never zero since zero is an EM fixed point.
TvMatrix init_total_variability(const DiagGmm& gmm, int ivector_dim, std::uint64_t seed);

// EM training of T. `objective` receives the auxiliary log-likelihood
// sum_u (b_u' L_u^-1 b_u - log|L_u|) / 2 before every iteration and after the
// last one. Throws Error(numeric) on a degenerate (all-zero or singular)
// accumulator.
TvMatrix train_total_variability(std::span<const BwStats> stats, const DiagGmm& gmm, const TvOptions& opts,
                                 std::vector<double>* objective = nullptr);
TvMatrix train_total_variability(std::span<const BwStats> stats, const DiagGmm& gmm, TvMatrix init, int iterations,
                                 std::vector<double>* objective = nullptr);

// Posterior mean w = (I + T' S^-1 N T)^-1 T' S^-1 f.
IVector extract_ivector(const DiagGmm& gmm, const TvMatrix& tv, const BwStats& stats);

// Appends w to every frame; output dim = D + R.
FeatureMatrix append_adaptation(const FeatureMatrix& x, const IVector& iv);

// UBM + T bundled for extraction. IVEX1 layout (little-endian):
//   "IVEX1", u32 C, u32 D, u32 R, f64 weights[C], f64 means[C*D],
//   f64 variances[C*D], f64 T[(C*D)*R] row-major.
struct IvectorExtractor {
  DiagGmm ubm;
  TvMatrix tv;

  IVector extract(const FeatureMatrix& x) const;
};

void save_ivector_extractor(const std::filesystem::path& path, const IvectorExtractor& model);
IvectorExtractor load_ivector_extractor(const std::filesystem::path& path);

}  // namespace setl
