#include "setl/mfcc.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>

#include "setl/error.hpp"

namespace setl {

int MfccConfig::frame_samples(int sample_rate_hz) const {
  return static_cast<int>(std::lround(sample_rate_hz * frame_length_ms / 1000.0));
}

int MfccConfig::shift_samples(int sample_rate_hz) const {
  return static_cast<int>(std::lround(sample_rate_hz * frame_shift_ms / 1000.0));
}

double MfccConfig::resolved_high_freq(int sample_rate_hz) const {
  return high_freq_hz > 0.0 ? high_freq_hz : sample_rate_hz / 2.0 - 400.0;
}

void MfccConfig::validate(int sample_rate_hz) const {
  const auto bad = [](const std::string& m) { fail(ErrorKind::invalid_argument, "mfcc config: " + m); };
  if (sample_rate_hz <= 0) bad("sample rate must be positive");
  if (frame_length_ms <= 0.0 || frame_shift_ms <= 0.0) bad("frame length and shift must be positive");
  if (num_mel_filters < 1) bad("num_mel_filters must be >= 1");
  if (num_ceps < 1 || num_ceps > num_mel_filters) bad("num_ceps must be in [1, num_mel_filters]");
  if (!(pre_emphasis >= 0.0 && pre_emphasis < 1.0)) bad("pre_emphasis must be in [0, 1)");
  if (fft_size < 2 || (fft_size & (fft_size - 1)) != 0) bad("fft_size must be a power of two");
  const int frame = frame_samples(sample_rate_hz);
  if (frame < 2 || shift_samples(sample_rate_hz) < 1) bad("frame too short for sample rate");
  if (fft_size < frame) bad("fft_size must be >= frame samples");
  const double high = resolved_high_freq(sample_rate_hz);
  if (!(low_freq_hz >= 0.0 && low_freq_hz < high && high <= sample_rate_hz / 2.0)) {
    bad("require 0 <= low_freq_hz < high_freq_hz <= sample_rate/2");
  }
  if (!(log_floor > 0.0)) bad("log_floor must be positive");
}

void validate_features(const FeatureMatrix& x) {
  if (x.num_frames() < 1 || x.dim() < 1) {
    fail(ErrorKind::invalid_argument, "feature matrix '" + x.utterance_id + "' is empty");
  }
  for (double v : x.frames.values()) {
    if (!std::isfinite(v)) {
      fail(ErrorKind::numeric, "feature matrix '" + x.utterance_id + "' has a non-finite entry");
    }
  }
}

double hz_to_mel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::exp(mel / 1127.0) - 1.0); }

int MelFilterbank::peak_bin(std::size_t filter) const {
  const auto r = weights.row(filter);
  return static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
}

MelFilterbank build_mel_filterbank(const MfccConfig& cfg, int sample_rate_hz) {
  cfg.validate(sample_rate_hz);
  const int num_bins = cfg.fft_size / 2 + 1;
  const int num_filters = cfg.num_mel_filters;
  const double mel_low = hz_to_mel(cfg.low_freq_hz);
  const double mel_high = hz_to_mel(cfg.resolved_high_freq(sample_rate_hz));
  const double step = (mel_high - mel_low) / (num_filters + 1);
  const double bin_hz = static_cast<double>(sample_rate_hz) / cfg.fft_size;

  MelFilterbank fb;
  fb.weights.resize(num_filters, num_bins);
  fb.first_bin.assign(num_filters, -1);
  fb.last_bin.assign(num_filters, -1);
  for (int m = 0; m < num_filters; ++m) {
    const double left = mel_low + m * step;
    const double center = left + step;
    const double right = center + step;
    for (int k = 0; k < num_bins; ++k) {
      const double mel = hz_to_mel(k * bin_hz);
      if (mel <= left || mel >= right) continue;
      const double w = mel <= center ? (mel - left) / (center - left) : (right - mel) / (right - center);
      fb.weights(m, k) = w;
      if (fb.first_bin[m] < 0) fb.first_bin[m] = k;
      fb.last_bin[m] = k;
    }
    if (fb.first_bin[m] < 0) {
      fail(ErrorKind::invalid_argument,
           "mel filter " + std::to_string(m) + " covers no FFT bins; reduce num_mel_filters or raise fft_size");
    }
  }
  return fb;
}

std::vector<double> dct_ii(std::span<const double> x, std::size_t k) {
  const std::size_t n = x.size();
  if (k > n) fail(ErrorKind::invalid_argument, "dct_ii: k exceeds input length");
  std::vector<double> out(k, 0.0);
  const double s0 = std::sqrt(1.0 / static_cast<double>(n));
  const double sk = std::sqrt(2.0 / static_cast<double>(n));
  for (std::size_t j = 0; j < k; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += x[i] * std::cos(std::numbers::pi * static_cast<double>(j) * (2.0 * i + 1.0) / (2.0 * n));
    }
    out[j] = (j == 0 ? s0 : sk) * acc;
  }
  return out;
}

std::vector<double> inverse_dct_ii(std::span<const double> coeffs, std::size_t n) {
  if (coeffs.size() > n) fail(ErrorKind::invalid_argument, "inverse_dct_ii: more coefficients than outputs");
  std::vector<double> out(n, 0.0);
  const double s0 = std::sqrt(1.0 / static_cast<double>(n));
  const double sk = std::sqrt(2.0 / static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < coeffs.size(); ++j) {
      acc += (j == 0 ? s0 : sk) * coeffs[j] *
             std::cos(std::numbers::pi * static_cast<double>(j) * (2.0 * i + 1.0) / (2.0 * n));
    }
    out[i] = acc;
  }
  return out;
}

std::size_t num_frames(std::size_t num_samples, const MfccConfig& cfg, int sample_rate_hz) {
  const auto frame = static_cast<std::size_t>(cfg.frame_samples(sample_rate_hz));
  const auto shift = static_cast<std::size_t>(cfg.shift_samples(sample_rate_hz));
  if (num_samples < frame) return 0;
  return 1 + (num_samples - frame) / shift;
}

namespace {

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

// Plan creation in FFTW is not thread-safe; execution with new-array
// interfaces is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    std::unique_ptr<double, FftwFree> in(fftw_alloc_real(n));
    std::unique_ptr<fftw_complex, FftwFree> out(fftw_alloc_complex(n / 2 + 1));
    std::lock_guard lock(fftw_planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(n, in.get(), out.get(), FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  // `in` and `out` must come from fftw_alloc_*.
  void execute(double* in, fftw_complex* out) const { fftw_execute_dft_r2c(plan_, in, out); }
  int size() const { return n_; }

 private:
  int n_;
  fftw_plan plan_;
};

struct FrameWorkspace {
  std::unique_ptr<double, FftwFree> in;
  std::unique_ptr<fftw_complex, FftwFree> out;
  std::vector<double> power;

  explicit FrameWorkspace(int fft_size)
      : in(fftw_alloc_real(fft_size)), out(fftw_alloc_complex(fft_size / 2 + 1)), power(fft_size / 2 + 1) {}
};

std::vector<double> hamming_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (n - 1));
  return w;
}

// Log mel energies of one frame; returns the floored log raw frame energy.
double log_mel_frame(std::span<const double> samples, const MfccConfig& cfg, const std::vector<double>& window,
                     const MelFilterbank& fb, const RealFft& fft, FrameWorkspace& ws, std::span<double> out) {
  const int n = static_cast<int>(samples.size());
  double* buf = ws.in.get();
  double raw_energy = 0.0;
  for (int i = 0; i < n; ++i) raw_energy += samples[i] * samples[i];
  for (int i = n - 1; i > 0; --i) buf[i] = samples[i] - cfg.pre_emphasis * samples[i - 1];
  buf[0] = samples[0] - cfg.pre_emphasis * samples[0];
  for (int i = 0; i < n; ++i) buf[i] *= window[i];
  std::fill(buf + n, buf + fft.size(), 0.0);
  fft.execute(buf, ws.out.get());
  for (std::size_t k = 0; k < ws.power.size(); ++k) {
    const double re = ws.out.get()[k][0];
    const double im = ws.out.get()[k][1];
    ws.power[k] = re * re + im * im;
  }
  for (std::size_t m = 0; m < fb.num_filters(); ++m) {
    double e = 0.0;
    const auto w = fb.weights.row(m);
    for (int k = fb.first_bin[m]; k <= fb.last_bin[m]; ++k) e += w[k] * ws.power[k];
    out[m] = std::log(std::max(e, cfg.log_floor));
  }
  return std::log(std::max(raw_energy, cfg.log_floor));
}

void check_waveform(const Waveform& w, const MfccConfig& cfg) {
  cfg.validate(w.sample_rate_hz);
  for (double s : w.samples) {
    if (!std::isfinite(s)) fail(ErrorKind::numeric, "waveform contains a non-finite sample");
  }
  if (num_frames(w.samples.size(), cfg, w.sample_rate_hz) == 0) {
    fail(ErrorKind::invalid_argument, "waveform shorter than one frame");
  }
}

// Shared driver: fills log mel energies (and raw log energies) for all frames.
Matrix log_mel_frames(const Waveform& w, const MfccConfig& cfg, std::vector<double>* log_energy) {
  check_waveform(w, cfg);
  const int frame = cfg.frame_samples(w.sample_rate_hz);
  const int shift = cfg.shift_samples(w.sample_rate_hz);
  const auto t_count = num_frames(w.samples.size(), cfg, w.sample_rate_hz);
  const MelFilterbank fb = build_mel_filterbank(cfg, w.sample_rate_hz);
  const auto window = hamming_window(frame);
  const RealFft fft(cfg.fft_size);

  Matrix out(t_count, fb.num_filters());
  if (log_energy) log_energy->assign(t_count, 0.0);
  const auto frames = static_cast<long>(t_count);
#pragma omp parallel
  {
    FrameWorkspace ws(cfg.fft_size);
#pragma omp for schedule(static)
    for (long t = 0; t < frames; ++t) {
      const std::span<const double> samples(w.samples.data() + t * shift, static_cast<std::size_t>(frame));
      const double e = log_mel_frame(samples, cfg, window, fb, fft, ws, out.row(t));
      if (log_energy) (*log_energy)[t] = e;
    }
  }
  return out;
}

}  // namespace

FeatureMatrix compute_log_mel(const Waveform& w, const MfccConfig& cfg) {
  return FeatureMatrix{"", log_mel_frames(w, cfg, nullptr)};
}

FeatureMatrix compute_mfcc(const Waveform& w, const MfccConfig& cfg) {
  std::vector<double> log_energy;
  const Matrix mel = log_mel_frames(w, cfg, cfg.use_energy_as_c0 ? &log_energy : nullptr);
  const auto nf = static_cast<std::size_t>(cfg.num_mel_filters);
  const auto nc = static_cast<std::size_t>(cfg.num_ceps);

  // DCT basis shared across frames; same per-element arithmetic as dct_ii.
  Matrix basis(nc, nf);
  for (std::size_t j = 0; j < nc; ++j) {
    const double scale = std::sqrt((j == 0 ? 1.0 : 2.0) / static_cast<double>(nf));
    for (std::size_t i = 0; i < nf; ++i) {
      basis(j, i) = scale * std::cos(std::numbers::pi * static_cast<double>(j) * (2.0 * i + 1.0) / (2.0 * nf));
    }
  }
  FeatureMatrix out{"", Matrix(mel.rows(), nc)};
  for (std::size_t t = 0; t < mel.rows(); ++t) {
    const auto in = mel.row(t);
    auto dst = out.frames.row(t);
    for (std::size_t j = 0; j < nc; ++j) {
      double acc = 0.0;
      const auto b = basis.row(j);
      for (std::size_t i = 0; i < nf; ++i) acc += b[i] * in[i];
      dst[j] = acc;
    }
    if (cfg.use_energy_as_c0) dst[0] = log_energy[t];
  }
  return out;
}

}  // namespace setl
