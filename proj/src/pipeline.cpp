#include "setl/pipeline.hpp"

#include <map>

#include "setl/error.hpp"
#include "setl/wav.hpp"

namespace setl {

std::string to_string(AdaptScope s) { return s == AdaptScope::speaker ? "speaker" : "utterance"; }

AdaptScope parse_adapt_scope(std::string_view s) {
  if (s == "utterance") return AdaptScope::utterance;
  if (s == "speaker") return AdaptScope::speaker;
  fail(ErrorKind::config, "adaptation scope must be 'utterance' or 'speaker', got '" + std::string(s) + "'");
}

void AdaptConfig::validate() const {
  if (components < 1) fail(ErrorKind::config, "adapt.components must be >= 1");
  if (ivector_dim < 0) fail(ErrorKind::config, "adapt.ivector_dim must be >= 0");
  if (ubm_iterations < 0 || tv_iterations < 0) fail(ErrorKind::config, "adapt iterations must be >= 0");
}

namespace {

FeatureMatrix featurize(const std::filesystem::path& path, const std::string& id, const MfccConfig& cfg,
                        int sample_rate_hz) {
  const Waveform w = read_wav(path);
  if (w.sample_rate_hz != sample_rate_hz) {
    fail(ErrorKind::dimension_mismatch, path.string() + ": sample rate " + std::to_string(w.sample_rate_hz) +
                                            " Hz, pipeline expects " + std::to_string(sample_rate_hz) + " Hz");
  }
  FeatureMatrix f = compute_mfcc(w, cfg);
  f.utterance_id = id;
  return f;
}

}  // namespace

std::vector<FeatureMatrix> extract_features(const Manifest& m, const MfccConfig& cfg, int sample_rate_hz) {
  cfg.validate(sample_rate_hz);
  std::vector<FeatureMatrix> out;
  out.reserve(m.rows.size());
  for (const auto& row : m.rows) out.push_back(featurize(m.resolve(row), row.utt_id, cfg, sample_rate_hz));
  return out;
}

std::vector<FeatureMatrix> extract_features(const PretrainManifest& m, const MfccConfig& cfg, int sample_rate_hz) {
  cfg.validate(sample_rate_hz);
  std::vector<FeatureMatrix> out;
  out.reserve(m.rows.size());
  for (const auto& row : m.rows) out.push_back(featurize(m.resolve(row), row.utt_id, cfg, sample_rate_hz));
  return out;
}

IvectorExtractor train_adaptation(std::span<const FeatureMatrix> feats, const AdaptConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (cfg.ivector_dim == 0) fail(ErrorKind::config, "adapt.ivector_dim is 0; nothing to train");
  UbmOptions uo;
  uo.components = cfg.components;
  uo.iterations = cfg.ubm_iterations;
  uo.seed = seed;
  IvectorExtractor model;
  model.ubm = train_ubm(feats, uo);
  std::vector<BwStats> stats;
  stats.reserve(feats.size());
  for (const auto& f : feats) stats.push_back(accumulate_stats(model.ubm, f));
  TvOptions to;
  to.ivector_dim = cfg.ivector_dim;
  to.iterations = cfg.tv_iterations;
  to.seed = seed + 1;
  model.tv = train_total_variability(stats, model.ubm, to);
  return model;
}

std::vector<FeatureMatrix> apply_adaptation(std::span<const FeatureMatrix> feats, std::span<const std::string> speakers,
                                            const IvectorExtractor& model, AdaptScope scope) {
  std::vector<FeatureMatrix> out;
  out.reserve(feats.size());
  if (scope == AdaptScope::utterance) {
    for (const auto& f : feats) out.push_back(append_adaptation(f, model.extract(f)));
    return out;
  }
  if (speakers.size() != feats.size()) {
    fail(ErrorKind::dimension_mismatch, "speaker-scope adaptation needs one speaker id per utterance");
  }
  std::map<std::string, BwStats> pooled;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    BwStats s = accumulate_stats(model.ubm, feats[i]);
    auto [it, inserted] = pooled.try_emplace(speakers[i], s);
    if (!inserted) it->second += s;
  }
  std::map<std::string, IVector> ivs;
  for (const auto& [spk, s] : pooled) {
    IVector iv = extract_ivector(model.ubm, model.tv, s);
    iv.scope = spk;
    ivs.emplace(spk, std::move(iv));
  }
  for (std::size_t i = 0; i < feats.size(); ++i) out.push_back(append_adaptation(feats[i], ivs.at(speakers[i])));
  return out;
}

std::vector<std::string> speakers_of(const Manifest& m) {
  std::vector<std::string> s;
  for (const auto& r : m.rows) s.push_back(r.speaker);
  return s;
}

std::vector<std::string> speakers_of(const PretrainManifest& m) {
  std::vector<std::string> s;
  for (const auto& r : m.rows) s.push_back(r.speaker);
  return s;
}

std::vector<LabeledFrames> pretrain_examples(const PretrainManifest& m, std::vector<FeatureMatrix> feats,
                                             const MfccConfig& cfg, int sample_rate_hz) {
  if (feats.size() != m.rows.size()) fail(ErrorKind::dimension_mismatch, "pretrain features/manifest size mismatch");
  std::vector<LabeledFrames> out;
  out.reserve(feats.size());
  for (std::size_t i = 0; i < feats.size(); ++i) {
    LabeledFrames lf;
    lf.labels = frame_labels(m.rows[i].segments, feats[i].num_frames(), cfg.frame_samples(sample_rate_hz),
                             cfg.shift_samples(sample_rate_hz));
    lf.features = std::move(feats[i]);
    out.push_back(std::move(lf));
  }
  return out;
}

std::vector<LabeledUtterance> emotion_examples(const Manifest& m, std::vector<FeatureMatrix> feats) {
  if (feats.size() != m.rows.size()) fail(ErrorKind::dimension_mismatch, "emotion features/manifest size mismatch");
  std::vector<LabeledUtterance> out;
  out.reserve(feats.size());
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const auto& r = m.rows[i];
    out.push_back({std::move(feats[i]), r.label, r.session, r.speaker});
  }
  return out;
}

std::vector<LabeledFrames> to_frames(std::span<const LabeledUtterance> utts) {
  std::vector<LabeledFrames> out;
  out.reserve(utts.size());
  for (const auto& u : utts) out.push_back(label_all_frames(u.features, u.label));
  return out;
}

}  // namespace setl
