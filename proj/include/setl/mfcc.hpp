#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "setl/matrix.hpp"
#include "setl/wav.hpp"

namespace setl {

struct MfccConfig {
  double frame_length_ms = 25.0;
  double frame_shift_ms = 10.0;
  int num_mel_filters = 40;
  int num_ceps = 40;
  double pre_emphasis = 0.97;
  int fft_size = 512;
  double low_freq_hz = 20.0;
  double high_freq_hz = 0.0;  // <= 0 means Nyquist - 400 Hz
  bool use_energy_as_c0 = false;
  double log_floor = 1e-10;

  int frame_samples(int sample_rate_hz) const;
  int shift_samples(int sample_rate_hz) const;
  double resolved_high_freq(int sample_rate_hz) const;

  // Throws Error(invalid_argument) when an invariant is violated.
  void validate(int sample_rate_hz) const;

  bool operator==(const MfccConfig&) const = default;
};

// Per-utterance time-major feature matrix: one row per frame.
struct FeatureMatrix {
  std::string utterance_id;
  Matrix frames;

  std::size_t num_frames() const noexcept { return frames.rows(); }
  std::size_t dim() const noexcept { return frames.cols(); }
};

// Throws unless T >= 1 and all entries are finite.
void validate_features(const FeatureMatrix& x);

struct MelFilterbank {
  // num_mel_filters rows over fft_size/2 + 1 bins.
  Matrix weights;
  // First and last nonzero bin per filter, for sparse application.
  std::vector<int> first_bin;
  std::vector<int> last_bin;

  std::size_t num_filters() const noexcept { return weights.rows(); }
  std::size_t num_bins() const noexcept { return weights.cols(); }
  int peak_bin(std::size_t filter) const;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

MelFilterbank build_mel_filterbank(const MfccConfig& cfg, int sample_rate_hz);

// Orthonormal DCT-II truncated to the first k coefficients.
std::vector<double> dct_ii(std::span<const double> x, std::size_t k);
// Inverse of the full orthonormal DCT-II (a DCT-III); missing trailing
// coefficients are treated as zero. `n` is the output length.
std::vector<double> inverse_dct_ii(std::span<const double> coeffs, std::size_t n);

std::size_t num_frames(std::size_t num_samples, const MfccConfig& cfg, int sample_rate_hz);

// Log mel filterbank energies (floored) per frame, before the DCT.
FeatureMatrix compute_log_mel(const Waveform& w, const MfccConfig& cfg);

// Static MFCCs. No cepstral mean normalization is applied.
FeatureMatrix compute_mfcc(const Waveform& w, const MfccConfig& cfg);

}  // namespace setl
