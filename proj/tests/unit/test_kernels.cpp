#include <doctest.h>

#include <omp.h>

#include <random>

#include "setl/error.hpp"
#include "setl/kernels.hpp"
#include "support.hpp"

using namespace setl;

namespace {

Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  return testing::random_features(rng, r, c).frames;
}

}  // namespace

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
  std::mt19937_64 rng(31);
  const int saved = omp_get_max_threads();
  for (int threads : {1, 2, 4}) {
    omp_set_num_threads(threads);
    for (auto [n, in, out] : {std::tuple{1, 1, 1}, std::tuple{37, 19, 23}, std::tuple{128, 64, 70}}) {
      const Matrix x = random_matrix(rng, n, in), w = random_matrix(rng, in, out), go = random_matrix(rng, n, out);
      std::vector<double> bias(out);
      for (double& b : bias) b = std::normal_distribution<double>()(rng);

      Matrix y, y_ref;
      kernels::affine_forward(x, w, bias, y);
      kernels::affine_forward_reference(x, w, bias, y_ref);
      CHECK(y == y_ref);

      Matrix gi, gi_ref;
      kernels::affine_backward_input(go, w, gi);
      kernels::affine_backward_input_reference(go, w, gi_ref);
      CHECK(gi == gi_ref);

      Matrix gw(in, out, 0.5), gw_ref(in, out, 0.5);
      std::vector<double> gb(out, 1.0), gb_ref(out, 1.0);
      kernels::affine_backward_params(x, go, gw, gb);
      kernels::affine_backward_params_reference(x, go, gw_ref, gb_ref);
      CHECK(gw == gw_ref);
      CHECK(gb == gb_ref);
    }
  }
  omp_set_num_threads(saved);
}

TEST_CASE("reference kernels against hand-written sums") {
  std::mt19937_64 rng(32);
  const Matrix x = random_matrix(rng, 4, 3), w = random_matrix(rng, 3, 2), go = random_matrix(rng, 4, 2);
  const std::vector<double> bias = {0.25, -1.0};
  Matrix y;
  kernels::affine_forward_reference(x, w, bias, y);
  Matrix gi;
  kernels::affine_backward_input_reference(go, w, gi);
  Matrix gw(3, 2);
  std::vector<double> gb(2, 0.0);
  kernels::affine_backward_params_reference(x, go, gw, gb);
  for (int n = 0; n < 4; ++n) {
    for (int o = 0; o < 2; ++o) {
      double s = bias[o];
      for (int i = 0; i < 3; ++i) s += x(n, i) * w(i, o);
      CHECK(y(n, o) == doctest::Approx(s).epsilon(1e-14));
    }
    for (int i = 0; i < 3; ++i) {
      double s = 0.0;
      for (int o = 0; o < 2; ++o) s += go(n, o) * w(i, o);
      CHECK(gi(n, i) == doctest::Approx(s).epsilon(1e-14));
    }
  }
  for (int i = 0; i < 3; ++i) {
    for (int o = 0; o < 2; ++o) {
      double s = 0.0;
      for (int n = 0; n < 4; ++n) s += x(n, i) * go(n, o);
      CHECK(gw(i, o) == doctest::Approx(s).epsilon(1e-14));
    }
  }
  for (int o = 0; o < 2; ++o) {
    double s = 0.0;
    for (int n = 0; n < 4; ++n) s += go(n, o);
    CHECK(gb[o] == doctest::Approx(s).epsilon(1e-14));
  }
}

TEST_CASE("shape mismatches throw") {
  std::mt19937_64 rng(33);
  const Matrix x = random_matrix(rng, 4, 3), w = random_matrix(rng, 2, 2);
  Matrix y;
  const std::vector<double> bias(2, 0.0);
  CHECK_THROWS_AS(kernels::affine_forward(x, w, bias, y), Error);
  Matrix gw(3, 3);
  std::vector<double> gb(3);
  CHECK_THROWS_AS(kernels::affine_backward_params(x, random_matrix(rng, 4, 2), gw, gb), Error);
}
