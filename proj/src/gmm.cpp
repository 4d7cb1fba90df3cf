#include "setl/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "setl/error.hpp"

namespace setl {

namespace {

// Fixed chunking keeps reductions independent of the thread count.
constexpr std::size_t kChunkFrames = 2048;

struct FrameRef {
  const double* data;
};

std::vector<FrameRef> pool_frames(std::span<const FeatureMatrix> features, std::size_t dim) {
  std::vector<FrameRef> frames;
  for (const auto& f : features) {
    if (f.dim() != dim) fail(ErrorKind::dimension_mismatch, "train_ubm: inconsistent feature dims");
    for (std::size_t t = 0; t < f.num_frames(); ++t) frames.push_back({f.frames.row(t).data()});
  }
  return frames;
}

// Per-component log normalizers: log w_c - 0.5 * sum_d log(2 pi v_cd).
std::vector<double> log_consts(const DiagGmm& gmm) {
  std::vector<double> out(gmm.num_components());
  for (std::size_t c = 0; c < out.size(); ++c) {
    double s = std::log(gmm.weights[c]);
    for (double v : gmm.variances.row(c)) s -= 0.5 * std::log(2.0 * std::numbers::pi * v);
    out[c] = s;
  }
  return out;
}

double frame_posteriors(const DiagGmm& gmm, const std::vector<double>& consts, const double* x,
                        std::span<double> post) {
  const std::size_t dim = gmm.dim();
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < gmm.num_components(); ++c) {
    const auto m = gmm.means.row(c);
    const auto v = gmm.variances.row(c);
    double q = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = x[d] - m[d];
      q += diff * diff / v[d];
    }
    post[c] = consts[c] - 0.5 * q;
    best = std::max(best, post[c]);
  }
  double sum = 0.0;
  for (double& p : post) {
    p = std::exp(p - best);
    sum += p;
  }
  for (double& p : post) p /= sum;
  return best + std::log(sum);
}

struct EmAccumulator {
  std::vector<double> n;
  Matrix first;   // centered on the current means
  Matrix second;  // centered on the current means
  double log_likelihood = 0.0;

  EmAccumulator(std::size_t c, std::size_t d) : n(c, 0.0), first(c, d), second(c, d) {}
};

}  // namespace

void DiagGmm::validate() const {
  const std::size_t c = weights.size();
  if (c == 0) fail(ErrorKind::invalid_argument, "gmm has no components");
  if (means.rows() != c || variances.rows() != c || variances.cols() != means.cols()) {
    fail(ErrorKind::dimension_mismatch, "gmm parameter shapes disagree");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) fail(ErrorKind::numeric, "gmm weight not positive");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-10) fail(ErrorKind::numeric, "gmm weights do not sum to 1");
  for (double v : variances.values()) {
    if (!(v > 0.0) || !std::isfinite(v)) fail(ErrorKind::numeric, "gmm variance not positive");
  }
}

double DiagGmm::log_likelihood(std::span<const double> x, std::span<double> posteriors) const {
  if (x.size() != dim()) fail(ErrorKind::dimension_mismatch, "gmm: frame dim mismatch");
  std::vector<double> scratch;
  if (posteriors.empty()) {
    scratch.resize(num_components());
    posteriors = scratch;
  }
  return frame_posteriors(*this, log_consts(*this), x.data(), posteriors);
}

DiagGmm train_ubm(std::span<const FeatureMatrix> features, const UbmOptions& opts,
                  std::vector<double>* log_likelihoods) {
  if (opts.components < 1) fail(ErrorKind::invalid_argument, "train_ubm: need at least one component");
  if (features.empty()) fail(ErrorKind::invalid_argument, "train_ubm: no features");
  const std::size_t dim = features.front().dim();
  const auto frames = pool_frames(features, dim);
  const auto comps = static_cast<std::size_t>(opts.components);
  if (frames.size() < 10 * comps) {
    fail(ErrorKind::invalid_argument, "train_ubm: need at least 10 frames per component, have " +
                                          std::to_string(frames.size()));
  }
  const double total_frames = static_cast<double>(frames.size());

  // Pooled statistics, for initial variances and the floor.
  std::vector<double> mean(dim, 0.0), var(dim, 0.0);
  for (const auto& f : frames) {
    for (std::size_t d = 0; d < dim; ++d) mean[d] += f.data[d];
  }
  for (double& m : mean) m /= total_frames;
  for (const auto& f : frames) {
    for (std::size_t d = 0; d < dim; ++d) var[d] += (f.data[d] - mean[d]) * (f.data[d] - mean[d]);
  }
  std::vector<double> floor(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    var[d] /= total_frames;
    floor[d] = std::max(opts.variance_floor_fraction * var[d], std::numeric_limits<double>::min());
    var[d] = std::max(var[d], floor[d]);
  }

  // k-means++ seeding of the means.
  std::mt19937_64 rng(opts.seed);
  DiagGmm gmm;
  gmm.weights.assign(comps, 1.0 / static_cast<double>(comps));
  gmm.means.resize(comps, dim);
  gmm.variances.resize(comps, dim);
  std::vector<double> nearest(frames.size(), std::numeric_limits<double>::infinity());
  std::size_t pick = std::uniform_int_distribution<std::size_t>(0, frames.size() - 1)(rng);
  for (std::size_t c = 0; c < comps; ++c) {
    std::copy_n(frames[pick].data, dim, gmm.means.row(c).begin());
    std::copy(var.begin(), var.end(), gmm.variances.row(c).begin());
    double total = 0.0;
    for (std::size_t i = 0; i < frames.size(); ++i) {
      double d2 = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = (frames[i].data[d] - gmm.means(c, d));
        d2 += diff * diff / var[d];
      }
      nearest[i] = std::min(nearest[i], d2);
      total += nearest[i];
    }
    if (c + 1 == comps) break;
    if (total > 0.0) {
      double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      pick = frames.size() - 1;
      for (std::size_t i = 0; i < frames.size(); ++i) {
        target -= nearest[i];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = std::uniform_int_distribution<std::size_t>(0, frames.size() - 1)(rng);
    }
  }

  if (log_likelihoods) log_likelihoods->clear();
  const std::size_t num_chunks = (frames.size() + kChunkFrames - 1) / kChunkFrames;
  for (int iter = 0; iter <= opts.iterations; ++iter) {
    const auto consts = log_consts(gmm);
    std::vector<EmAccumulator> partial(num_chunks, EmAccumulator(comps, dim));
#pragma omp parallel for schedule(static)
    for (long chunk = 0; chunk < static_cast<long>(num_chunks); ++chunk) {
      auto& acc = partial[chunk];
      std::vector<double> post(comps);
      const std::size_t end = std::min(frames.size(), (chunk + 1) * kChunkFrames);
      for (std::size_t i = chunk * kChunkFrames; i < end; ++i) {
        const double* x = frames[i].data;
        acc.log_likelihood += frame_posteriors(gmm, consts, x, post);
        for (std::size_t c = 0; c < comps; ++c) {
          const double g = post[c];
          if (g < 1e-300) continue;
          acc.n[c] += g;
          auto f1 = acc.first.row(c);
          auto f2 = acc.second.row(c);
          const auto m = gmm.means.row(c);
          for (std::size_t d = 0; d < dim; ++d) {
            const double diff = x[d] - m[d];
            f1[d] += g * diff;
            f2[d] += g * diff * diff;
          }
        }
      }
    }
    EmAccumulator total(comps, dim);
    for (const auto& p : partial) {
      total.log_likelihood += p.log_likelihood;
      for (std::size_t c = 0; c < comps; ++c) total.n[c] += p.n[c];
      for (std::size_t i = 0; i < total.first.size(); ++i) {
        total.first.values()[i] += p.first.values()[i];
        total.second.values()[i] += p.second.values()[i];
      }
    }
    if (log_likelihoods) log_likelihoods->push_back(total.log_likelihood);
    if (iter == opts.iterations) break;

    double weight_sum = 0.0;
    for (std::size_t c = 0; c < comps; ++c) {
      const double n = total.n[c];
      gmm.weights[c] = std::max(n / total_frames, 1e-10);
      weight_sum += gmm.weights[c];
      if (n < 1e-8) continue;  // starved component keeps its parameters
      for (std::size_t d = 0; d < dim; ++d) {
        const double shift = total.first(c, d) / n;
        const double v = total.second(c, d) / n - shift * shift;
        gmm.means(c, d) += shift;
        gmm.variances(c, d) = std::max(v, floor[d]);
      }
    }
    for (double& w : gmm.weights) w /= weight_sum;
  }
  return gmm;
}

BwStats& BwStats::operator+=(const BwStats& other) {
  if (n.size() != other.n.size() || f.cols() != other.f.cols()) {
    fail(ErrorKind::dimension_mismatch, "cannot pool statistics of different shapes");
  }
  for (std::size_t c = 0; c < n.size(); ++c) n[c] += other.n[c];
  for (std::size_t i = 0; i < f.size(); ++i) f.values()[i] += other.f.values()[i];
  return *this;
}

BwStats accumulate_stats(const DiagGmm& gmm, const FeatureMatrix& x) {
  if (x.dim() != gmm.dim()) {
    fail(ErrorKind::dimension_mismatch, "accumulate_stats: feature dim " + std::to_string(x.dim()) +
                                            " does not match gmm dim " + std::to_string(gmm.dim()));
  }
  const std::size_t comps = gmm.num_components();
  const std::size_t dim = gmm.dim();
  const auto consts = log_consts(gmm);
  BwStats stats{std::vector<double>(comps, 0.0), Matrix(comps, dim)};
  std::vector<double> post(comps);
  for (std::size_t t = 0; t < x.num_frames(); ++t) {
    const double* frame = x.frames.row(t).data();
    frame_posteriors(gmm, consts, frame, post);
    for (std::size_t c = 0; c < comps; ++c) {
      const double g = post[c];
      stats.n[c] += g;
      auto f = stats.f.row(c);
      const auto m = gmm.means.row(c);
      for (std::size_t d = 0; d < dim; ++d) f[d] += g * (frame[d] - m[d]);
    }
  }
  return stats;
}

}  // namespace setl
