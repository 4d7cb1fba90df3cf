#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace setl {

// Fixed class inventory and index order.
inline constexpr std::array<std::string_view, 4> kEmotionLabels = {"ang", "exc", "neu", "sad"};

int emotion_index(std::string_view label);

struct ManifestRow {
  std::string utt_id;
  std::string path;
  std::string session;
  std::string speaker;
  int label = 0;
};

// CSV with header utt_id,path,session,speaker,label. Relative audio paths
// resolve against the manifest's directory.
struct Manifest {
  std::vector<ManifestRow> rows;
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const ManifestRow& row) const;
  std::vector<std::string> sessions() const;  // distinct, sorted
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& m);

struct PhoneSegment {
  int phone = 0;
  std::size_t begin_sample = 0;
  std::size_t end_sample = 0;  // exclusive
};

struct PretrainRow {
  std::string utt_id;
  std::string path;
  std::string speaker;
  std::vector<PhoneSegment> segments;
};

// CSV with header utt_id,path,speaker,segments where segments is
// "phone:begin-end;..." in samples.
struct PretrainManifest {
  std::vector<PretrainRow> rows;
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const PretrainRow& row) const;
  int num_phones() const;
};

PretrainManifest read_pretrain_manifest(const std::filesystem::path& path);
void write_pretrain_manifest(const std::filesystem::path& path, const PretrainManifest& m);

// Label of each analysis frame: the segment containing the frame's center
// sample (nearest segment when it falls in a gap).
std::vector<int> frame_labels(const std::vector<PhoneSegment>& segments, std::size_t num_frames,
                              int frame_samples, int shift_samples);

}  // namespace setl
