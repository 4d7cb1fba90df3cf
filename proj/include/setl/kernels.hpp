#pragma once

#include <span>

#include "setl/matrix.hpp"

// Dense affine kernels used by every network layer. Each has an
// OpenMP-parallel version and a plain serial reference. Both accumulate
// every output element in the same order (ascending input index for the
// forward/input-gradient kernels, ascending frame index for the parameter
// gradient), so results are bit-identical for any thread count.
namespace setl::kernels {

// out[n][o] = bias[o] + sum_i in[n][i] * weights[i][o]; weights is In x Out.
void affine_forward(const Matrix& in, const Matrix& weights, std::span<const double> bias, Matrix& out);
void affine_forward_reference(const Matrix& in, const Matrix& weights, std::span<const double> bias, Matrix& out);

// grad_in[n][i] = sum_o grad_out[n][o] * weights[i][o]
void affine_backward_input(const Matrix& grad_out, const Matrix& weights, Matrix& grad_in);
void affine_backward_input_reference(const Matrix& grad_out, const Matrix& weights, Matrix& grad_in);

// grad_w[i][o] += sum_n in[n][i] * grad_out[n][o];  grad_b[o] += sum_n grad_out[n][o]
void affine_backward_params(const Matrix& in, const Matrix& grad_out, Matrix& grad_w, std::span<double> grad_b);
void affine_backward_params_reference(const Matrix& in, const Matrix& grad_out, Matrix& grad_w,
                                      std::span<double> grad_b);

}  // namespace setl::kernels
