#pragma once

#include <filesystem>
#include <vector>

#include "setl/mfcc.hpp"

namespace setl {

// FEAT1 archive: the bytes "FEAT1", then per utterance
//   u32 id_len, id bytes, u32 T, u32 D, T*D f64 (row-major), all little-endian.
// Utterances follow one another until end of file.
void write_feature_archive(const std::filesystem::path& path, const std::vector<FeatureMatrix>& feats);
std::vector<FeatureMatrix> read_feature_archive(const std::filesystem::path& path);

}  // namespace setl
