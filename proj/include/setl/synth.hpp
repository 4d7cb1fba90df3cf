#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "setl/manifest.hpp"
#include "setl/wav.hpp"

namespace setl {

// Seeded synthetic stand-in for an emotional speech corpus and an
// ASR-style pretraining corpus, built with a small formant synthesizer.
struct SynthSpec {
  int num_sessions = 5;
  int speakers_per_session = 2;
  int utterances_per_class = 10;  // per session
  int pretrain_utterances = 200;
  int pretrain_speakers = 20;
  int num_phones = 8;
  double min_duration_s = 1.0;
  double max_duration_s = 3.0;
  double noise_level = 0.003;
  int sample_rate_hz = 16000;
  std::uint64_t seed = 0;

  void validate() const;
};

// Prosodic and spectral recipe of one emotion class.
struct EmotionPrototype {
  double f0_hz;
  double f0_slope;      // relative f0 change from start to end of the utterance
  double f0_jitter;     // relative depth of slow random f0 wander
  double amplitude;     // target RMS before speaker scaling
  double mod_rate_hz;   // amplitude modulation rate
  double mod_depth;
  double tilt;          // one-pole source lowpass coefficient; higher is darker
};

// Formant-like tone mixture of one proxy phone.
struct PhonePrototype {
  double f1, f2, f3;
  bool noise_excited;
};

const std::array<EmotionPrototype, 4>& emotion_prototypes();
const std::vector<PhonePrototype>& phone_prototypes();

struct SpeakerTraits {
  double f0_scale = 1.0;
  double formant_scale = 1.0;
  double loudness = 1.0;
  double tilt_offset = 0.0;
};

struct VoiceRecipe {
  double duration_s = 1.0;
  std::vector<PhoneSegment> segments;
  double f0_hz = 120.0;
  double f0_slope = 0.0;
  double f0_jitter = 0.0;
  double amplitude = 0.1;
  double mod_rate_hz = 0.0;
  double mod_depth = 0.0;
  double tilt = 0.8;
  SpeakerTraits speaker;
  double noise_level = 0.0;
  int sample_rate_hz = 16000;
};

Waveform synthesize(const VoiceRecipe& recipe, std::uint64_t seed);

struct SynthCorpus {
  Manifest emotion;           // out_dir/emotion/manifest.csv
  PretrainManifest pretrain;  // out_dir/pretrain/manifest.csv
};

// Writes both corpora (WAV files + manifests) under out_dir.
SynthCorpus generate_corpus(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace setl
