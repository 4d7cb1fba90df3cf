#include "setl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "setl/error.hpp"

namespace setl {

void SynthSpec::validate() const {
  const auto bad = [](const std::string& m) { fail(ErrorKind::invalid_argument, "synth spec: " + m); };
  if (num_sessions < 1 || speakers_per_session < 1) bad("need at least one session and speaker");
  if (utterances_per_class < 1) bad("utterances_per_class must be >= 1");
  if (pretrain_utterances < 1 || pretrain_speakers < 1) bad("pretraining corpus must be non-empty");
  if (num_phones < 2 || num_phones > static_cast<int>(phone_prototypes().size())) {
    bad("num_phones must be in [2, " + std::to_string(phone_prototypes().size()) + "]");
  }
  if (!(min_duration_s >= 0.5 && max_duration_s >= min_duration_s)) bad("durations must satisfy 0.5 <= min <= max");
  if (!(noise_level >= 0.0)) bad("noise_level must be >= 0");
  if (sample_rate_hz < 8000) bad("sample rate must be >= 8000");
}

const std::array<EmotionPrototype, 4>& emotion_prototypes() {
  // ang, exc, neu, sad
  static const std::array<EmotionPrototype, 4> protos = {{
      {255.0, 0.00, 0.10, 0.30, 6.0, 0.50, 0.55},
      {185.0, 0.35, 0.05, 0.20, 3.5, 0.35, 0.70},
      {130.0, 0.00, 0.02, 0.10, 0.0, 0.00, 0.80},
      {95.0, -0.25, 0.02, 0.05, 1.5, 0.25, 0.92},
  }};
  return protos;
}

const std::vector<PhonePrototype>& phone_prototypes() {
  static const std::vector<PhonePrototype> protos = {
      {270, 2290, 3010, false}, {660, 1720, 2410, false}, {730, 1090, 2440, false}, {570, 840, 2410, false},
      {300, 870, 2240, false},  {490, 1350, 1690, false}, {530, 1840, 2480, false}, {2500, 4500, 6000, true},
  };
  return protos;
}

namespace {

// Two-pole resonator with unity gain at DC.
struct Resonator {
  double y1 = 0.0, y2 = 0.0;

  double step(double x, double freq, double bw, int sr) {
    const double r = std::exp(-std::numbers::pi * bw / sr);
    const double b = 2.0 * r * std::cos(2.0 * std::numbers::pi * freq / sr);
    const double c = -r * r;
    const double a = 1.0 - b - c;
    const double y = a * x + b * y1 + c * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

const PhoneSegment& segment_at(const std::vector<PhoneSegment>& segs, std::size_t n) {
  for (const auto& s : segs) {
    if (n < s.end_sample) return s;
  }
  return segs.back();
}

}  // namespace

Waveform synthesize(const VoiceRecipe& recipe, std::uint64_t seed) {
  const int sr = recipe.sample_rate_hz;
  const auto total = static_cast<std::size_t>(std::lround(recipe.duration_s * sr));
  if (total == 0 || recipe.segments.empty()) fail(ErrorKind::invalid_argument, "synthesize: empty recipe");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  // Slow f0 wander: random knots every 100 ms, linearly interpolated.
  const std::size_t knot_step = static_cast<std::size_t>(sr / 10);
  std::vector<double> knots(total / knot_step + 2);
  for (double& k : knots) k = unit(rng);

  const auto& phones = phone_prototypes();
  const double tilt = std::clamp(recipe.tilt + recipe.speaker.tilt_offset, 0.0, 0.98);
  const double smooth = std::exp(-1.0 / (0.010 * sr));  // 10 ms formant glide
  Resonator res[3];
  double f[3] = {-1.0, 0.0, 0.0};
  double phase = 0.0, src_state = 0.0;
  std::vector<double> out(total);
  for (std::size_t n = 0; n < total; ++n) {
    const double pos = static_cast<double>(n) / static_cast<double>(total);
    const std::size_t ki = n / knot_step;
    const double kf = static_cast<double>(n % knot_step) / static_cast<double>(knot_step);
    const double wander = knots[ki] * (1.0 - kf) + knots[ki + 1] * kf;
    const double f0 = recipe.f0_hz * recipe.speaker.f0_scale * (1.0 + recipe.f0_slope * (pos - 0.5)) *
                      (1.0 + recipe.f0_jitter * wander);

    const auto& proto = phones.at(static_cast<std::size_t>(segment_at(recipe.segments, n).phone));
    double excitation;
    if (proto.noise_excited) {
      excitation = 0.3 * gauss(rng);
    } else {
      phase += f0 / sr;
      excitation = 0.0;
      if (phase >= 1.0) {
        phase -= 1.0;
        excitation = 1.0;
      }
    }
    src_state = excitation + tilt * src_state;

    const double targets[3] = {proto.f1, proto.f2, proto.f3};
    double y = src_state;
    for (int i = 0; i < 3; ++i) {
      const double target = std::min(targets[i] * recipe.speaker.formant_scale, 0.45 * sr);
      f[i] = f[0] < 0.0 && i == 0 ? target : smooth * f[i] + (1.0 - smooth) * target;
      if (n == 0) f[i] = target;
      y = res[i].step(y, f[i], 60.0 + 30.0 * i, sr);
    }
    out[n] = y;
  }

  double sum_sq = 0.0;
  for (double v : out) sum_sq += v * v;
  const double rms = std::sqrt(sum_sq / static_cast<double>(total));
  const double gain = rms > 0.0 ? recipe.amplitude * recipe.speaker.loudness / rms : 0.0;
  const double ramp = 0.02 * sr;
  Waveform w;
  w.sample_rate_hz = sr;
  w.samples.resize(total);
  for (std::size_t n = 0; n < total; ++n) {
    const double t = static_cast<double>(n) / sr;
    const double edge = std::min({1.0, static_cast<double>(n) / ramp, static_cast<double>(total - 1 - n) / ramp});
    const double mod = (1.0 + recipe.mod_depth * std::sin(2.0 * std::numbers::pi * recipe.mod_rate_hz * t)) /
                       (1.0 + recipe.mod_depth);
    const double s = gain * out[n] * edge * mod + recipe.noise_level * gauss(rng);
    w.samples[n] = std::clamp(s, -1.0, 32767.0 / 32768.0);
  }
  return w;
}

namespace {

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  std::uint64_t out[1];
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  out[0] = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
  return out[0];
}

SpeakerTraits draw_speaker(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SpeakerTraits s;
  s.f0_scale = 0.94 + 0.12 * u(rng);
  s.formant_scale = 0.94 + 0.12 * u(rng);
  s.loudness = 0.8 + 0.45 * u(rng);
  s.tilt_offset = -0.03 + 0.06 * u(rng);
  return s;
}

// 2-5 segments of random phones, each at least 150 ms.
std::vector<PhoneSegment> draw_segments(std::mt19937_64& rng, std::size_t total, int sr, int num_phones) {
  const auto min_len = static_cast<std::size_t>(0.15 * sr);
  const int max_segments = static_cast<int>(std::clamp<std::size_t>(total / min_len, 1, 5));
  const int count = std::uniform_int_distribution<int>(std::min(2, max_segments), max_segments)(rng);
  std::vector<std::size_t> cuts;
  const std::size_t slack = total - static_cast<std::size_t>(count) * min_len;
  for (int i = 0; i < count - 1; ++i) cuts.push_back(std::uniform_int_distribution<std::size_t>(0, slack)(rng));
  std::sort(cuts.begin(), cuts.end());
  std::vector<PhoneSegment> segs;
  std::size_t begin = 0;
  int prev = -1;
  for (int i = 0; i < count; ++i) {
    const std::size_t end = i + 1 == count ? total : cuts[i] + static_cast<std::size_t>(i + 1) * min_len;
    int phone = std::uniform_int_distribution<int>(0, num_phones - 1)(rng);
    if (phone == prev) phone = (phone + 1) % num_phones;
    segs.push_back({phone, begin, end});
    prev = phone;
    begin = end;
  }
  return segs;
}

std::string zero_pad(int v, int width) {
  std::string s = std::to_string(v);
  return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

}  // namespace

SynthCorpus generate_corpus(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "emotion" / "wav", ec);
  fs::create_directories(out_dir / "pretrain" / "wav", ec);
  if (ec) fail(ErrorKind::io, "cannot create corpus directories under " + out_dir.string() + ": " + ec.message());

  const int sr = spec.sample_rate_hz;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SynthCorpus corpus;

  // Emotion corpus.
  corpus.emotion.base_dir = out_dir / "emotion";
  const auto& protos = emotion_prototypes();
  for (int s = 0; s < spec.num_sessions; ++s) {
    const std::string session = "Ses" + zero_pad(s + 1, 2);
    std::vector<SpeakerTraits> speakers;
    std::mt19937_64 spk_rng(mix_seed(spec.seed, 1, static_cast<std::uint64_t>(s)));
    for (int k = 0; k < spec.speakers_per_session; ++k) speakers.push_back(draw_speaker(spk_rng));
    for (int c = 0; c < static_cast<int>(protos.size()); ++c) {
      for (int i = 0; i < spec.utterances_per_class; ++i) {
        const int k = i % spec.speakers_per_session;
        const std::string speaker = session + "_S" + std::to_string(k + 1);
        const std::string utt = speaker + "_" + std::string(kEmotionLabels[c]) + "_" + zero_pad(i, 3);
        const auto useed = mix_seed(spec.seed, 2, static_cast<std::uint64_t>((s * 4 + c) * 100000 + i));
        std::mt19937_64 rng(useed);
        const auto& p = protos[c];
        VoiceRecipe r;
        r.sample_rate_hz = sr;
        r.duration_s = spec.min_duration_s + (spec.max_duration_s - spec.min_duration_s) * unit(rng);
        r.segments = draw_segments(rng, static_cast<std::size_t>(std::lround(r.duration_s * sr)), sr,
                                   std::min(spec.num_phones, 7));
        r.f0_hz = p.f0_hz * (0.95 + 0.1 * unit(rng));
        r.f0_slope = p.f0_slope;
        r.f0_jitter = p.f0_jitter;
        r.amplitude = p.amplitude * (0.85 + 0.3 * unit(rng));
        r.mod_rate_hz = p.mod_rate_hz * (0.9 + 0.2 * unit(rng));
        r.mod_depth = p.mod_depth;
        r.tilt = p.tilt;
        r.speaker = speakers[static_cast<std::size_t>(k)];
        r.noise_level = spec.noise_level;
        const std::string rel = "wav/" + utt + ".wav";
        write_wav(corpus.emotion.base_dir / rel, synthesize(r, useed ^ 0x9E3779B97F4A7C15ull));
        corpus.emotion.rows.push_back({utt, rel, session, speaker, c});
      }
    }
  }
  write_manifest(corpus.emotion.base_dir / "manifest.csv", corpus.emotion);

  // Pretraining corpus: phone sequences under randomized prosody.
  corpus.pretrain.base_dir = out_dir / "pretrain";
  std::vector<SpeakerTraits> speakers;
  std::mt19937_64 spk_rng(mix_seed(spec.seed, 3, 0));
  for (int k = 0; k < spec.pretrain_speakers; ++k) speakers.push_back(draw_speaker(spk_rng));
  for (int i = 0; i < spec.pretrain_utterances; ++i) {
    const int k = i % spec.pretrain_speakers;
    const std::string speaker = "P" + zero_pad(k + 1, 3);
    const std::string utt = speaker + "_" + zero_pad(i, 5);
    const auto useed = mix_seed(spec.seed, 4, static_cast<std::uint64_t>(i));
    std::mt19937_64 rng(useed);
    VoiceRecipe r;
    r.sample_rate_hz = sr;
    r.duration_s = spec.min_duration_s + (spec.max_duration_s - spec.min_duration_s) * unit(rng);
    r.segments = draw_segments(rng, static_cast<std::size_t>(std::lround(r.duration_s * sr)), sr, spec.num_phones);
    r.f0_hz = 85.0 + 165.0 * unit(rng);
    r.f0_slope = -0.3 + 0.6 * unit(rng);
    r.f0_jitter = 0.08 * unit(rng);
    r.amplitude = 0.05 + 0.3 * unit(rng);
    r.mod_rate_hz = 6.0 * unit(rng);
    r.mod_depth = 0.4 * unit(rng);
    r.tilt = 0.55 + 0.37 * unit(rng);
    r.speaker = speakers[static_cast<std::size_t>(k)];
    r.noise_level = spec.noise_level;
    const std::string rel = "wav/" + utt + ".wav";
    write_wav(corpus.pretrain.base_dir / rel, synthesize(r, useed ^ 0x9E3779B97F4A7C15ull));
    corpus.pretrain.rows.push_back({utt, rel, speaker, r.segments});
  }
  write_pretrain_manifest(corpus.pretrain.base_dir / "manifest.csv", corpus.pretrain);
  return corpus;
}

}  // namespace setl
