#include "setl/kernels.hpp"

#include <algorithm>

#include "setl/error.hpp"

namespace setl::kernels {

namespace {

constexpr long kFrameBlock = 4;
constexpr long kRowBlock = 16;

void check_forward(const Matrix& in, const Matrix& weights, std::span<const double> bias, Matrix& out) {
  if (in.cols() != weights.rows() || bias.size() != weights.cols()) {
    fail(ErrorKind::dimension_mismatch, "affine_forward: shape mismatch");
  }
  if (out.rows() != in.rows() || out.cols() != weights.cols()) out.resize(in.rows(), weights.cols());
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
  }
  return t;
}

}  // namespace

void affine_forward(const Matrix& in, const Matrix& weights, std::span<const double> bias, Matrix& out) {
  check_forward(in, weights, bias, out);
  const long frames = static_cast<long>(in.rows());
  const std::size_t n_in = in.cols();
  const std::size_t n_out = weights.cols();
#pragma omp parallel for schedule(static)
  for (long n0 = 0; n0 < frames; n0 += kFrameBlock) {
    const long n1 = std::min(frames, n0 + kFrameBlock);
    for (long n = n0; n < n1; ++n) std::copy(bias.begin(), bias.end(), out.row(n).begin());
    if (n1 - n0 == kFrameBlock) {
      double* o0 = out.row(n0).data();
      double* o1 = out.row(n0 + 1).data();
      double* o2 = out.row(n0 + 2).data();
      double* o3 = out.row(n0 + 3).data();
      const double* x0 = in.row(n0).data();
      const double* x1 = in.row(n0 + 1).data();
      const double* x2 = in.row(n0 + 2).data();
      const double* x3 = in.row(n0 + 3).data();
      for (std::size_t i = 0; i < n_in; ++i) {
        const double* w = weights.row(i).data();
        const double a0 = x0[i], a1 = x1[i], a2 = x2[i], a3 = x3[i];
        for (std::size_t o = 0; o < n_out; ++o) {
          o0[o] += a0 * w[o];
          o1[o] += a1 * w[o];
          o2[o] += a2 * w[o];
          o3[o] += a3 * w[o];
        }
      }
    } else {
      for (long n = n0; n < n1; ++n) {
        double* dst = out.row(n).data();
        const double* x = in.row(n).data();
        for (std::size_t i = 0; i < n_in; ++i) {
          const double* w = weights.row(i).data();
          const double a = x[i];
          for (std::size_t o = 0; o < n_out; ++o) dst[o] += a * w[o];
        }
      }
    }
  }
}

void affine_forward_reference(const Matrix& in, const Matrix& weights, std::span<const double> bias, Matrix& out) {
  check_forward(in, weights, bias, out);
  for (std::size_t n = 0; n < in.rows(); ++n) {
    for (std::size_t o = 0; o < weights.cols(); ++o) {
      double acc = bias[o];
      for (std::size_t i = 0; i < in.cols(); ++i) acc += in(n, i) * weights(i, o);
      out(n, o) = acc;
    }
  }
}

void affine_backward_input(const Matrix& grad_out, const Matrix& weights, Matrix& grad_in) {
  if (grad_out.cols() != weights.cols()) fail(ErrorKind::dimension_mismatch, "affine_backward_input: shape mismatch");
  grad_in.resize(grad_out.rows(), weights.rows());
  // With the transpose the inner loop is a contiguous axpy over inputs.
  const Matrix wt = transpose(weights);
  const long frames = static_cast<long>(grad_out.rows());
  const std::size_t n_in = weights.rows();
  const std::size_t n_out = weights.cols();
#pragma omp parallel for schedule(static)
  for (long n = 0; n < frames; ++n) {
    double* dst = grad_in.row(n).data();
    const double* g = grad_out.row(n).data();
    for (std::size_t o = 0; o < n_out; ++o) {
      const double a = g[o];
      if (a == 0.0) continue;
      const double* w = wt.row(o).data();
      for (std::size_t i = 0; i < n_in; ++i) dst[i] += a * w[i];
    }
  }
}

void affine_backward_input_reference(const Matrix& grad_out, const Matrix& weights, Matrix& grad_in) {
  if (grad_out.cols() != weights.cols()) fail(ErrorKind::dimension_mismatch, "affine_backward_input: shape mismatch");
  grad_in.resize(grad_out.rows(), weights.rows());
  for (std::size_t n = 0; n < grad_out.rows(); ++n) {
    for (std::size_t i = 0; i < weights.rows(); ++i) {
      double acc = 0.0;
      for (std::size_t o = 0; o < weights.cols(); ++o) {
        if (grad_out(n, o) == 0.0) continue;
        acc += grad_out(n, o) * weights(i, o);
      }
      grad_in(n, i) = acc;
    }
  }
}

void affine_backward_params(const Matrix& in, const Matrix& grad_out, Matrix& grad_w, std::span<double> grad_b) {
  if (in.rows() != grad_out.rows() || grad_w.rows() != in.cols() || grad_w.cols() != grad_out.cols() ||
      grad_b.size() != grad_out.cols()) {
    fail(ErrorKind::dimension_mismatch, "affine_backward_params: shape mismatch");
  }
  const long n_in = static_cast<long>(in.cols());
  const std::size_t n_out = grad_out.cols();
  const std::size_t frames = in.rows();
#pragma omp parallel for schedule(static)
  for (long i0 = 0; i0 < n_in; i0 += kRowBlock) {
    const long i1 = std::min(n_in, i0 + kRowBlock);
    for (std::size_t n = 0; n < frames; ++n) {
      const double* g = grad_out.row(n).data();
      const double* x = in.row(n).data();
      for (long i = i0; i < i1; ++i) {
        const double a = x[i];
        if (a == 0.0) continue;
        double* dst = grad_w.row(i).data();
        for (std::size_t o = 0; o < n_out; ++o) dst[o] += a * g[o];
      }
    }
  }
  for (std::size_t n = 0; n < frames; ++n) {
    const double* g = grad_out.row(n).data();
    for (std::size_t o = 0; o < n_out; ++o) grad_b[o] += g[o];
  }
}

void affine_backward_params_reference(const Matrix& in, const Matrix& grad_out, Matrix& grad_w,
                                      std::span<double> grad_b) {
  if (in.rows() != grad_out.rows() || grad_w.rows() != in.cols() || grad_w.cols() != grad_out.cols() ||
      grad_b.size() != grad_out.cols()) {
    fail(ErrorKind::dimension_mismatch, "affine_backward_params: shape mismatch");
  }
  for (std::size_t i = 0; i < in.cols(); ++i) {
    for (std::size_t o = 0; o < grad_out.cols(); ++o) {
      double acc = grad_w(i, o);
      for (std::size_t n = 0; n < in.rows(); ++n) {
        if (in(n, i) == 0.0) continue;
        acc += in(n, i) * grad_out(n, o);
      }
      grad_w(i, o) = acc;
    }
  }
  for (std::size_t o = 0; o < grad_out.cols(); ++o) {
    double acc = grad_b[o];
    for (std::size_t n = 0; n < grad_out.rows(); ++n) acc += grad_out(n, o);
    grad_b[o] = acc;
  }
}

}  // namespace setl::kernels
