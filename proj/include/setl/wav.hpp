#pragma once

#include <filesystem>
#include <vector>

namespace setl {

struct Waveform {
  std::vector<double> samples;  // normalized to [-1, 1]
  int sample_rate_hz = 16000;
};

// Reads a RIFF/WAVE file holding mono 16-bit PCM. Samples are scaled by 1/32768.
Waveform read_wav(const std::filesystem::path& path);

// Writes mono 16-bit PCM; samples are clipped to [-1, 1) before quantization.
void write_wav(const std::filesystem::path& path, const Waveform& wave);

}  // namespace setl
