#include "setl/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

#include "setl/binary_io.hpp"
#include "setl/error.hpp"

namespace setl {

namespace {

std::string read_tag(std::istream& in) {
  std::string tag(4, '\0');
  in.read(tag.data(), 4);
  if (in.gcount() != 4) return {};
  return tag;
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open wav file: " + path.string());

  const std::string where = " (" + path.string() + ")";
  if (read_tag(in) != "RIFF") fail(ErrorKind::format, "not a RIFF file" + where);
  binio::read_u32(in, "RIFF size");
  if (read_tag(in) != "WAVE") fail(ErrorKind::format, "RIFF container is not WAVE" + where);

  bool have_fmt = false;
  int channels = 0, bits = 0;
  Waveform wave;
  for (;;) {
    const std::string tag = read_tag(in);
    if (tag.empty()) fail(ErrorKind::format, "no data chunk" + where);
    const std::uint32_t size = binio::read_u32(in, "chunk size");
    if (tag == "fmt ") {
      if (size < 16) fail(ErrorKind::format, "fmt chunk too short" + where);
      const std::uint32_t tag_and_channels = binio::read_u32(in, "fmt");
      const int format_tag = static_cast<int>(tag_and_channels & 0xFFFF);
      channels = static_cast<int>(tag_and_channels >> 16);
      wave.sample_rate_hz = static_cast<int>(binio::read_u32(in, "sample rate"));
      binio::read_u32(in, "byte rate");
      const std::uint32_t align_and_bits = binio::read_u32(in, "block align");
      bits = static_cast<int>(align_and_bits >> 16);
      if (format_tag != 1) {
        fail(ErrorKind::format, "unsupported wav encoding (format tag " + std::to_string(format_tag) +
                                    "), expected PCM" + where);
      }
      in.seekg(size - 16 + (size & 1), std::ios::cur);
      have_fmt = true;
    } else if (tag == "data") {
      if (!have_fmt) fail(ErrorKind::format, "data chunk before fmt chunk" + where);
      if (channels != 1) {
        fail(ErrorKind::format, "expected mono audio, got " + std::to_string(channels) + " channels" + where);
      }
      if (bits != 16) {
        fail(ErrorKind::format, "expected 16-bit PCM, got " + std::to_string(bits) + " bits" + where);
      }
      if (wave.sample_rate_hz <= 0) fail(ErrorKind::format, "non-positive sample rate" + where);
      const std::size_t count = size / 2;
      std::vector<char> raw(count * 2);
      in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
      if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
        fail(ErrorKind::format, "truncated data chunk" + where);
      }
      wave.samples.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        const auto lo = static_cast<std::uint16_t>(static_cast<unsigned char>(raw[2 * i]));
        const auto hi = static_cast<std::uint16_t>(static_cast<unsigned char>(raw[2 * i + 1]));
        const auto v = static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
        wave.samples[i] = static_cast<double>(v) / 32768.0;
      }
      if (wave.samples.empty()) fail(ErrorKind::format, "empty data chunk" + where);
      return wave;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
      if (!in) fail(ErrorKind::format, "truncated chunk '" + tag + "'" + where);
    }
  }
}

void write_wav(const std::filesystem::path& path, const Waveform& wave) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write wav file: " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
  const auto rate = static_cast<std::uint32_t>(wave.sample_rate_hz);
  out.write("RIFF", 4);
  binio::write_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  binio::write_u32(out, 16);
  binio::write_u32(out, 1u | (1u << 16));  // PCM, mono
  binio::write_u32(out, rate);
  binio::write_u32(out, rate * 2);
  binio::write_u32(out, 2u | (16u << 16));  // block align, bits per sample
  out.write("data", 4);
  binio::write_u32(out, data_bytes);
  std::vector<char> raw(wave.samples.size() * 2);
  for (std::size_t i = 0; i < wave.samples.size(); ++i) {
    const double clipped = std::clamp(wave.samples[i], -1.0, 32767.0 / 32768.0);
    const auto v = static_cast<std::int16_t>(std::lround(clipped * 32768.0));
    const auto u = static_cast<std::uint16_t>(v);
    raw[2 * i] = static_cast<char>(u & 0xFF);
    raw[2 * i + 1] = static_cast<char>(u >> 8);
  }
  out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!out) fail(ErrorKind::io, "failed writing wav file: " + path.string());
}

}  // namespace setl
