#include "setl/ivector.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <random>

#include "setl/binary_io.hpp"
#include "setl/error.hpp"

namespace setl {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void check_shapes(const DiagGmm& gmm, const TvMatrix& tv) {
  if (tv.t.rows() != gmm.num_components() * gmm.dim() || tv.t.cols() == 0) {
    fail(ErrorKind::dimension_mismatch, "total-variability matrix shape does not match the UBM");
  }
}

void check_stats(const DiagGmm& gmm, const BwStats& s) {
  if (s.n.size() != gmm.num_components() || s.f.rows() != gmm.num_components() || s.f.cols() != gmm.dim()) {
    fail(ErrorKind::dimension_mismatch, "statistics shape does not match the UBM");
  }
  for (double v : s.n) {
    if (!std::isfinite(v) || v < 0.0) fail(ErrorKind::numeric, "statistics contain a non-finite occupancy");
  }
  for (double v : s.f.values()) {
    if (!std::isfinite(v)) fail(ErrorKind::numeric, "statistics contain a non-finite entry");
  }
}

// Per-component terms reused by every utterance: T_c' S_c^-1 and T_c' S_c^-1 T_c.
struct Precomputed {
  std::vector<MatrixXd> tt_inv_var;  // R x D
  std::vector<MatrixXd> quad;        // R x R
};

Precomputed precompute(const DiagGmm& gmm, const TvMatrix& tv) {
  const auto comps = gmm.num_components();
  const auto dim = static_cast<Eigen::Index>(gmm.dim());
  const auto rank = static_cast<Eigen::Index>(tv.ivector_dim());
  const RowMajorMap t(tv.t.data(), static_cast<Eigen::Index>(tv.t.rows()), rank);
  Precomputed pre;
  pre.tt_inv_var.resize(comps);
  pre.quad.resize(comps);
  for (std::size_t c = 0; c < comps; ++c) {
    const MatrixXd tc = t.middleRows(static_cast<Eigen::Index>(c) * dim, dim);
    VectorXd inv_var(dim);
    for (Eigen::Index d = 0; d < dim; ++d) inv_var[d] = 1.0 / gmm.variances(c, d);
    pre.tt_inv_var[c] = tc.transpose() * inv_var.asDiagonal();
    pre.quad[c] = pre.tt_inv_var[c] * tc;
  }
  return pre;
}

struct Posterior {
  VectorXd mean;
  MatrixXd cov;
  double objective = 0.0;
};

Posterior posterior(const Precomputed& pre, const BwStats& s, Eigen::Index rank, bool want_cov) {
  MatrixXd precision = MatrixXd::Identity(rank, rank);
  VectorXd linear = VectorXd::Zero(rank);
  const auto dim = static_cast<Eigen::Index>(s.f.cols());
  for (std::size_t c = 0; c < s.n.size(); ++c) {
    if (s.n[c] != 0.0) precision.noalias() += s.n[c] * pre.quad[c];
    const Eigen::Map<const VectorXd> fc(s.f.row(c).data(), dim);
    linear.noalias() += pre.tt_inv_var[c] * fc;
  }
  const Eigen::LLT<MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) fail(ErrorKind::numeric, "i-vector precision matrix not positive definite");
  Posterior p;
  p.mean = llt.solve(linear);
  if (want_cov) p.cov = llt.solve(MatrixXd::Identity(rank, rank));
  const MatrixXd& l = llt.matrixLLT();
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < rank; ++i) log_det += 2.0 * std::log(l(i, i));
  p.objective = 0.5 * (linear.dot(p.mean) - log_det);
  return p;
}

}  // namespace

TvMatrix init_total_variability(const DiagGmm& gmm, int ivector_dim, std::uint64_t seed) {
  if (ivector_dim < 1) fail(ErrorKind::invalid_argument, "i-vector dimension must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  TvMatrix tv{Matrix(gmm.num_components() * gmm.dim(), static_cast<std::size_t>(ivector_dim))};
  for (double& v : tv.t.values()) v = 0.1 * normal(rng);
  return tv;
}

TvMatrix train_total_variability(std::span<const BwStats> stats, const DiagGmm& gmm, const TvOptions& opts,
                                 std::vector<double>* objective) {
  return train_total_variability(stats, gmm, init_total_variability(gmm, opts.ivector_dim, opts.seed),
                                 opts.iterations, objective);
}

TvMatrix train_total_variability(std::span<const BwStats> stats, const DiagGmm& gmm, TvMatrix tv, int iterations,
                                 std::vector<double>* objective) {
  check_shapes(gmm, tv);
  const auto rank = static_cast<Eigen::Index>(tv.ivector_dim());
  const auto comps = gmm.num_components();
  const auto dim = static_cast<Eigen::Index>(gmm.dim());
  if (stats.size() < tv.ivector_dim()) {
    fail(ErrorKind::invalid_argument, "train_total_variability: need at least " + std::to_string(rank) +
                                          " utterances, have " + std::to_string(stats.size()));
  }
  for (const auto& s : stats) check_stats(gmm, s);
  bool all_zero = true;
  for (double v : tv.t.values()) all_zero = all_zero && v == 0.0;
  if (all_zero) {
    fail(ErrorKind::numeric, "total-variability matrix is all zeros: singular accumulator (EM fixed point)");
  }

  if (objective) objective->clear();
  for (int iter = 0; iter <= iterations; ++iter) {
    const Precomputed pre = precompute(gmm, tv);
    const bool last = iter == iterations;
    std::vector<Posterior> post(stats.size());
#pragma omp parallel for schedule(dynamic, 4)
    for (long u = 0; u < static_cast<long>(stats.size()); ++u) post[u] = posterior(pre, stats[u], rank, !last);

    double total_objective = 0.0;
    for (const auto& p : post) total_objective += p.objective;
    if (objective) objective->push_back(total_objective);
    if (last) break;

    // Ordered reduction over utterances.
    std::vector<MatrixXd> a(comps, MatrixXd::Zero(rank, rank));
    MatrixXd c_acc = MatrixXd::Zero(static_cast<Eigen::Index>(comps) * dim, rank);
    for (std::size_t u = 0; u < stats.size(); ++u) {
      const MatrixXd second = post[u].cov + post[u].mean * post[u].mean.transpose();
      for (std::size_t c = 0; c < comps; ++c) {
        if (stats[u].n[c] != 0.0) a[c].noalias() += stats[u].n[c] * second;
        const Eigen::Map<const VectorXd> fc(stats[u].f.row(c).data(), dim);
        c_acc.middleRows(static_cast<Eigen::Index>(c) * dim, dim).noalias() += fc * post[u].mean.transpose();
      }
    }
    if (c_acc.cwiseAbs().maxCoeff() == 0.0) {
      fail(ErrorKind::numeric, "total-variability M-step: first-order accumulator is zero (degenerate data)");
    }
    for (std::size_t c = 0; c < comps; ++c) {
      const Eigen::LLT<MatrixXd> llt(a[c]);
      if (llt.info() != Eigen::Success) {
        fail(ErrorKind::numeric, "total-variability M-step: singular accumulator for component " +
                                     std::to_string(c));
      }
      const MatrixXd tc = llt.solve(c_acc.middleRows(static_cast<Eigen::Index>(c) * dim, dim).transpose());
      for (Eigen::Index d = 0; d < dim; ++d) {
        for (Eigen::Index r = 0; r < rank; ++r) {
          tv.t(static_cast<std::size_t>(c * dim + d), static_cast<std::size_t>(r)) = tc(r, d);
        }
      }
    }
    for (double v : tv.t.values()) {
      if (!std::isfinite(v)) fail(ErrorKind::numeric, "total-variability M-step produced non-finite values");
    }
  }
  return tv;
}

IVector extract_ivector(const DiagGmm& gmm, const TvMatrix& tv, const BwStats& stats) {
  check_shapes(gmm, tv);
  check_stats(gmm, stats);
  const auto rank = static_cast<Eigen::Index>(tv.ivector_dim());
  const Posterior p = posterior(precompute(gmm, tv), stats, rank, false);
  IVector iv;
  iv.w.assign(p.mean.data(), p.mean.data() + rank);
  return iv;
}

FeatureMatrix append_adaptation(const FeatureMatrix& x, const IVector& iv) {
  const std::size_t d = x.dim();
  const std::size_t r = iv.w.size();
  FeatureMatrix out{x.utterance_id, Matrix(x.num_frames(), d + r)};
  for (std::size_t t = 0; t < x.num_frames(); ++t) {
    auto dst = out.frames.row(t);
    const auto src = x.frames.row(t);
    std::copy(src.begin(), src.end(), dst.begin());
    std::copy(iv.w.begin(), iv.w.end(), dst.begin() + static_cast<std::ptrdiff_t>(d));
  }
  return out;
}

IVector IvectorExtractor::extract(const FeatureMatrix& x) const {
  IVector iv = extract_ivector(ubm, tv, accumulate_stats(ubm, x));
  iv.scope = x.utterance_id;
  return iv;
}

namespace {
constexpr std::string_view kIvexMagic = "IVEX1";
}

void save_ivector_extractor(const std::filesystem::path& path, const IvectorExtractor& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write i-vector model: " + path.string());
  binio::write_magic(out, kIvexMagic);
  binio::write_u32(out, static_cast<std::uint32_t>(model.ubm.num_components()));
  binio::write_u32(out, static_cast<std::uint32_t>(model.ubm.dim()));
  binio::write_u32(out, static_cast<std::uint32_t>(model.tv.ivector_dim()));
  binio::write_f64s(out, model.ubm.weights);
  binio::write_f64s(out, model.ubm.means.values());
  binio::write_f64s(out, model.ubm.variances.values());
  binio::write_f64s(out, model.tv.t.values());
  if (!out) fail(ErrorKind::io, "failed writing i-vector model: " + path.string());
}

IvectorExtractor load_ivector_extractor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open i-vector model: " + path.string());
  binio::expect_magic(in, kIvexMagic);
  const auto comps = binio::read_u32(in, "component count");
  const auto dim = binio::read_u32(in, "feature dim");
  const auto rank = binio::read_u32(in, "i-vector dim");
  if (comps == 0 || dim == 0 || rank == 0 || static_cast<std::uint64_t>(comps) * dim * rank > (1ull << 28)) {
    fail(ErrorKind::format, "implausible i-vector model dimensions");
  }
  IvectorExtractor m;
  m.ubm.weights.resize(comps);
  m.ubm.means.resize(comps, dim);
  m.ubm.variances.resize(comps, dim);
  m.tv.t.resize(static_cast<std::size_t>(comps) * dim, rank);
  binio::read_f64s(in, m.ubm.weights, "weights");
  binio::read_f64s(in, m.ubm.means.values(), "means");
  binio::read_f64s(in, m.ubm.variances.values(), "variances");
  binio::read_f64s(in, m.tv.t.values(), "total-variability matrix");
  m.ubm.validate();
  return m;
}

}  // namespace setl
