#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "setl/mfcc.hpp"
#include "setl/tdnn.hpp"

namespace setl {

// Describes the features a network was trained on.
struct FeatureFingerprint {
  int sample_rate_hz = 16000;
  MfccConfig mfcc;
  int ivector_dim = 0;

  int input_dim() const { return mfcc.num_ceps + ivector_dim; }
  bool operator==(const FeatureFingerprint&) const = default;
};

// Throws Error(fingerprint_mismatch) naming the first differing field.
void check_fingerprint(const FeatureFingerprint& expected, const FeatureFingerprint& actual);

struct Provenance {
  std::string task;
  int epochs = 0;
  std::uint64_t seed = 0;

  bool operator==(const Provenance&) const = default;
};

struct Checkpoint {
  Network net;
  FeatureFingerprint fingerprint;
  Provenance provenance;

  bool operator==(const Checkpoint&) const = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// TDNNCK2 layout (little-endian, every block length-prefixed):
//   "TDNNCK2", u32 version,
//   u32 len + fingerprint block, u32 len + provenance block,
//   u32 len + spec block, u32 len + input-transform block,
//   u64 count + f64 parameters (per layer: weights row-major, then bias).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace setl
