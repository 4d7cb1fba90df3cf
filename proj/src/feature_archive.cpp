#include "setl/feature_archive.hpp"

#include <fstream>

#include "setl/binary_io.hpp"
#include "setl/error.hpp"

namespace setl {

namespace {
constexpr std::string_view kMagic = "FEAT1";
}

void write_feature_archive(const std::filesystem::path& path, const std::vector<FeatureMatrix>& feats) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write feature archive: " + path.string());
  binio::write_magic(out, kMagic);
  for (const auto& f : feats) {
    binio::write_string(out, f.utterance_id);
    binio::write_u32(out, static_cast<std::uint32_t>(f.num_frames()));
    binio::write_u32(out, static_cast<std::uint32_t>(f.dim()));
    binio::write_f64s(out, f.frames.values());
  }
  if (!out) fail(ErrorKind::io, "failed writing feature archive: " + path.string());
}

std::vector<FeatureMatrix> read_feature_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open feature archive: " + path.string());
  binio::expect_magic(in, kMagic);
  std::vector<FeatureMatrix> feats;
  while (in.peek() != std::char_traits<char>::eof()) {
    FeatureMatrix f;
    f.utterance_id = binio::read_string(in, "utterance id");
    const auto rows = binio::read_u32(in, "frame count");
    const auto cols = binio::read_u32(in, "feature dim");
    if (static_cast<std::uint64_t>(rows) * cols > (1ull << 32)) {
      fail(ErrorKind::format, "implausible matrix size in feature archive");
    }
    f.frames.resize(rows, cols);
    binio::read_f64s(in, f.frames.values(), "feature values");
    feats.push_back(std::move(f));
  }
  return feats;
}

}  // namespace setl
