#include "setl/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "setl/error.hpp"

namespace setl {

int emotion_index(std::string_view label) {
  for (std::size_t i = 0; i < kEmotionLabels.size(); ++i) {
    if (kEmotionLabels[i] == label) return static_cast<int>(i);
  }
  fail(ErrorKind::format, "unknown emotion label '" + std::string(label) + "' (expected ang, exc, neu or sad)");
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path, const std::string& header) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open manifest: " + path.string());
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != header) {
    fail(ErrorKind::format, "manifest " + path.string() + " must start with header '" + header + "'");
  }
  const std::size_t columns = split(header, ',').size();
  std::vector<std::vector<std::string>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto fields = split(line, ',');
    if (fields.size() != columns) {
      fail(ErrorKind::format, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                  std::to_string(columns) + " columns");
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

void check_unique(const std::vector<std::string>& ids, const std::filesystem::path& path) {
  std::set<std::string> seen;
  for (const auto& id : ids) {
    if (id.empty()) fail(ErrorKind::format, "empty utterance id in " + path.string());
    if (!seen.insert(id).second) fail(ErrorKind::format, "duplicate utterance id '" + id + "' in " + path.string());
  }
}

}  // namespace

std::filesystem::path Manifest::resolve(const ManifestRow& row) const {
  const std::filesystem::path p(row.path);
  return p.is_absolute() ? p : base_dir / p;
}

std::vector<std::string> Manifest::sessions() const {
  std::set<std::string> s;
  for (const auto& r : rows) s.insert(r.session);
  return {s.begin(), s.end()};
}

Manifest read_manifest(const std::filesystem::path& path) {
  Manifest m;
  m.base_dir = path.parent_path();
  std::vector<std::string> ids;
  for (auto& f : read_csv(path, "utt_id,path,session,speaker,label")) {
    m.rows.push_back({f[0], f[1], f[2], f[3], emotion_index(f[4])});
    ids.push_back(f[0]);
  }
  check_unique(ids, path);
  return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write manifest: " + path.string());
  out << "utt_id,path,session,speaker,label\n";
  for (const auto& r : m.rows) {
    out << r.utt_id << ',' << r.path << ',' << r.session << ',' << r.speaker << ','
        << kEmotionLabels.at(static_cast<std::size_t>(r.label)) << '\n';
  }
}

std::filesystem::path PretrainManifest::resolve(const PretrainRow& row) const {
  const std::filesystem::path p(row.path);
  return p.is_absolute() ? p : base_dir / p;
}

int PretrainManifest::num_phones() const {
  int n = 0;
  for (const auto& r : rows) {
    for (const auto& s : r.segments) n = std::max(n, s.phone + 1);
  }
  return n;
}

PretrainManifest read_pretrain_manifest(const std::filesystem::path& path) {
  PretrainManifest m;
  m.base_dir = path.parent_path();
  std::vector<std::string> ids;
  for (auto& f : read_csv(path, "utt_id,path,speaker,segments")) {
    PretrainRow row{f[0], f[1], f[2], {}};
    for (const auto& seg : split(f[3], ';')) {
      if (seg.empty()) continue;
      PhoneSegment s;
      char colon = 0, dash = 0;
      std::istringstream ss(seg);
      if (!(ss >> s.phone >> colon >> s.begin_sample >> dash >> s.end_sample) || colon != ':' || dash != '-' ||
          s.phone < 0 || s.end_sample <= s.begin_sample) {
        fail(ErrorKind::format, "bad segment '" + seg + "' in " + path.string());
      }
      row.segments.push_back(s);
    }
    if (row.segments.empty()) fail(ErrorKind::format, "utterance '" + row.utt_id + "' has no segments");
    ids.push_back(row.utt_id);
    m.rows.push_back(std::move(row));
  }
  check_unique(ids, path);
  return m;
}

void write_pretrain_manifest(const std::filesystem::path& path, const PretrainManifest& m) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write manifest: " + path.string());
  out << "utt_id,path,speaker,segments\n";
  for (const auto& r : m.rows) {
    out << r.utt_id << ',' << r.path << ',' << r.speaker << ',';
    for (std::size_t i = 0; i < r.segments.size(); ++i) {
      const auto& s = r.segments[i];
      out << (i ? ";" : "") << s.phone << ':' << s.begin_sample << '-' << s.end_sample;
    }
    out << '\n';
  }
}

std::vector<int> frame_labels(const std::vector<PhoneSegment>& segments, std::size_t num_frames, int frame_samples,
                              int shift_samples) {
  if (segments.empty()) fail(ErrorKind::invalid_argument, "frame_labels: no segments");
  std::vector<int> labels(num_frames);
  for (std::size_t t = 0; t < num_frames; ++t) {
    const double center = static_cast<double>(t) * shift_samples + frame_samples / 2.0;
    double best_dist = 1e300;
    for (const auto& s : segments) {
      double dist = 0.0;
      if (center < static_cast<double>(s.begin_sample)) dist = static_cast<double>(s.begin_sample) - center;
      else if (center >= static_cast<double>(s.end_sample)) dist = center - static_cast<double>(s.end_sample) + 1.0;
      if (dist < best_dist) {
        best_dist = dist;
        labels[t] = s.phone;
      }
    }
  }
  return labels;
}

}  // namespace setl
