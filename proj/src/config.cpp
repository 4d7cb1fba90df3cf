#include "setl/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "setl/error.hpp"

namespace setl {

using json = nlohmann::json;

std::filesystem::path PathsConfig::emotion_manifest_path() const {
  return manifest.empty() ? std::filesystem::path(data_dir) / "emotion" / "manifest.csv" : std::filesystem::path(manifest);
}
std::filesystem::path PathsConfig::pretrain_manifest_path() const {
  return pretrain_manifest.empty() ? std::filesystem::path(data_dir) / "pretrain" / "manifest.csv" : std::filesystem::path(pretrain_manifest);
}
std::filesystem::path PathsConfig::features_dir() const { return std::filesystem::path(work_dir) / "features"; }
std::filesystem::path PathsConfig::ivector_model_path() const {
  return std::filesystem::path(work_dir) / "adapt" / "ivector.ivex";
}
std::filesystem::path PathsConfig::pretrain_dir() const { return std::filesystem::path(work_dir) / "pretrain"; }
std::filesystem::path PathsConfig::pretrained_checkpoint_path() const { return pretrain_dir() / "pretrained.ckpt"; }
std::filesystem::path PathsConfig::finetune_dir() const { return std::filesystem::path(work_dir) / "finetune"; }
std::filesystem::path PathsConfig::finetuned_checkpoint_path() const { return finetune_dir() / "finetuned.ckpt"; }

FeatureFingerprint RunConfig::fingerprint() const {
  FeatureFingerprint fp;
  fp.sample_rate_hz = sample_rate_hz;
  fp.mfcc = mfcc;
  fp.ivector_dim = adapt.ivector_dim;
  return fp;
}

SpecOptions RunConfig::spec_options(int head_dim) const {
  SpecOptions o;
  o.width_factor = network.width_factor;
  o.base_width = network.base_width;
  o.input_dim = input_dim();
  o.head_dim = head_dim;
  o.strides = network.strides;
  return o;
}

TrainConfig RunConfig::pretrain_config() const {
  TrainConfig c = pretrain;
  c.seed = pretrain_seed();
  return c;
}

TrainConfig RunConfig::finetune_config() const {
  TrainConfig c = finetune;
  c.seed = finetune_seed();
  return c;
}

void RunConfig::validate() const {
  const auto wrap = [](const char* section, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      fail(ErrorKind::config, std::string(section) + ": " + e.what());
    }
  };
  if (threads < 0) fail(ErrorKind::config, "threads must be >= 0");
  wrap("mfcc", [&] { mfcc.validate(sample_rate_hz); });
  wrap("adapt", [&] { adapt.validate(); });
  wrap("network", [&] {
    if (network.head_hidden < 1) fail(ErrorKind::config, "head_hidden must be >= 1");
    (void)paper_default_spec(spec_options(2));
  });
  wrap("pretrain", [&] { pretrain.validate(); });
  wrap("finetune", [&] { finetune.validate(); });
  wrap("synth", [&] { synth.validate(); });
  if (evaluation.taps.empty()) fail(ErrorKind::config, "evaluation.taps must not be empty");
  wrap("evaluation", [&] {
    const NetworkSpec spec = paper_default_spec(spec_options(2));
    (void)resolve_tap(spec, network.tap);
    for (const auto& t : evaluation.taps) (void)resolve_tap(spec, t);
  });
}

namespace {

// Reads the keys of one JSON object into a struct and rejects anything left over.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(ErrorKind::config, where() + " must be a JSON object");
  }

  template <class T>
  Section& field(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return *this;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      fail(ErrorKind::config, where() + "." + key + ": " + e.what());
    }
    return *this;
  }

  template <class Fn>
  Section& object(const char* key, Fn&& fn) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return *this;
    Section sub(*it, path_.empty() ? key : path_ + "." + key);
    fn(sub);
    sub.finish();
    return *this;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) fail(ErrorKind::config, "unknown key '" + (path_.empty() ? k : path_ + "." + k) + "'");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_train(Section& s, TrainConfig& t) {
  s.field("learning_rate", t.learning_rate)
      .field("momentum", t.momentum)
      .field("epochs", t.epochs)
      .field("batch_frames", t.batch_frames)
      .field("lr_decay", t.lr_decay)
      .field("shuffle", t.shuffle)
      .field("chunk_frames", t.chunk_frames)
      .field("output_frame_stride", t.output_frame_stride)
      .field("class_balance", t.class_balance);
}

json write_train(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate}, {"momentum", t.momentum},
          {"epochs", t.epochs},               {"batch_frames", t.batch_frames},
          {"lr_decay", t.lr_decay},           {"shuffle", t.shuffle},
          {"chunk_frames", t.chunk_frames},   {"output_frame_stride", t.output_frame_stride},
          {"class_balance", t.class_balance}};
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  std::string scope = to_string(c.adapt.scope);
  Section root(j, "");
  root.field("seed", c.seed).field("threads", c.threads).field("sample_rate_hz", c.sample_rate_hz);
  root.object("mfcc", [&](Section& s) {
    s.field("frame_length_ms", c.mfcc.frame_length_ms)
        .field("frame_shift_ms", c.mfcc.frame_shift_ms)
        .field("num_mel_filters", c.mfcc.num_mel_filters)
        .field("num_ceps", c.mfcc.num_ceps)
        .field("pre_emphasis", c.mfcc.pre_emphasis)
        .field("fft_size", c.mfcc.fft_size)
        .field("low_freq_hz", c.mfcc.low_freq_hz)
        .field("high_freq_hz", c.mfcc.high_freq_hz)
        .field("use_energy_as_c0", c.mfcc.use_energy_as_c0)
        .field("log_floor", c.mfcc.log_floor);
  });
  root.object("adapt", [&](Section& s) {
    s.field("components", c.adapt.components)
        .field("ivector_dim", c.adapt.ivector_dim)
        .field("ubm_iterations", c.adapt.ubm_iterations)
        .field("tv_iterations", c.adapt.tv_iterations)
        .field("scope", scope);
  });
  root.object("network", [&](Section& s) {
    s.field("width_factor", c.network.width_factor)
        .field("base_width", c.network.base_width)
        .field("strides", c.network.strides)
        .field("head_hidden", c.network.head_hidden)
        .field("tap", c.network.tap)
        .field("freeze_pretrained", c.network.freeze_pretrained);
  });
  root.object("pretrain", [&](Section& s) { read_train(s, c.pretrain); });
  root.object("finetune", [&](Section& s) { read_train(s, c.finetune); });
  root.object("synth", [&](Section& s) {
    s.field("num_sessions", c.synth.num_sessions)
        .field("speakers_per_session", c.synth.speakers_per_session)
        .field("utterances_per_class", c.synth.utterances_per_class)
        .field("pretrain_utterances", c.synth.pretrain_utterances)
        .field("pretrain_speakers", c.synth.pretrain_speakers)
        .field("num_phones", c.synth.num_phones)
        .field("min_duration_s", c.synth.min_duration_s)
        .field("max_duration_s", c.synth.max_duration_s)
        .field("noise_level", c.synth.noise_level);
  });
  root.object("evaluation", [&](Section& s) {
    s.field("taps", c.evaluation.taps).field("test_session", c.evaluation.test_session);
  });
  root.object("paths", [&](Section& s) {
    s.field("data_dir", c.paths.data_dir)
        .field("manifest", c.paths.manifest)
        .field("pretrain_manifest", c.paths.pretrain_manifest)
        .field("work_dir", c.paths.work_dir)
        .field("output_dir", c.paths.output_dir);
  });
  root.finish();
  c.adapt.scope = parse_adapt_scope(scope);
  c.synth.sample_rate_hz = c.sample_rate_hz;
  c.synth.seed = c.synth_seed();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["sample_rate_hz"] = c.sample_rate_hz;
  j["mfcc"] = {{"frame_length_ms", c.mfcc.frame_length_ms}, {"frame_shift_ms", c.mfcc.frame_shift_ms},
               {"num_mel_filters", c.mfcc.num_mel_filters}, {"num_ceps", c.mfcc.num_ceps},
               {"pre_emphasis", c.mfcc.pre_emphasis},       {"fft_size", c.mfcc.fft_size},
               {"low_freq_hz", c.mfcc.low_freq_hz},         {"high_freq_hz", c.mfcc.high_freq_hz},
               {"use_energy_as_c0", c.mfcc.use_energy_as_c0}, {"log_floor", c.mfcc.log_floor}};
  j["adapt"] = {{"components", c.adapt.components},
                {"ivector_dim", c.adapt.ivector_dim},
                {"ubm_iterations", c.adapt.ubm_iterations},
                {"tv_iterations", c.adapt.tv_iterations},
                {"scope", to_string(c.adapt.scope)}};
  j["network"] = {{"width_factor", c.network.width_factor}, {"base_width", c.network.base_width},
                  {"strides", c.network.strides},           {"head_hidden", c.network.head_hidden},
                  {"tap", c.network.tap},                   {"freeze_pretrained", c.network.freeze_pretrained}};
  j["pretrain"] = write_train(c.pretrain);
  j["finetune"] = write_train(c.finetune);
  j["synth"] = {{"num_sessions", c.synth.num_sessions},
                {"speakers_per_session", c.synth.speakers_per_session},
                {"utterances_per_class", c.synth.utterances_per_class},
                {"pretrain_utterances", c.synth.pretrain_utterances},
                {"pretrain_speakers", c.synth.pretrain_speakers},
                {"num_phones", c.synth.num_phones},
                {"min_duration_s", c.synth.min_duration_s},
                {"max_duration_s", c.synth.max_duration_s},
                {"noise_level", c.synth.noise_level}};
  j["evaluation"] = {{"taps", c.evaluation.taps}, {"test_session", c.evaluation.test_session}};
  j["paths"] = {{"data_dir", c.paths.data_dir},
                {"manifest", c.paths.manifest},
                {"pretrain_manifest", c.paths.pretrain_manifest},
                {"work_dir", c.paths.work_dir},
                {"output_dir", c.paths.output_dir}};
  return j.dump(2) + "\n";
}

void apply_environment(RunConfig& cfg) {
  const char* env = std::getenv("TDNN_TRANSFER_SEED");
  if (env == nullptr) return;
  const std::string text(env);
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (text.empty() || used != text.size() || text.front() == '-') {
    fail(ErrorKind::config, "TDNN_TRANSFER_SEED must be a non-negative integer, got '" + text + "'");
  }
  cfg.seed = v;
  cfg.synth.seed = cfg.synth_seed();
}

void write_config_echo(const std::filesystem::path& dir, const RunConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::ofstream out(dir / "config.json", std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + (dir / "config.json").string());
  out << dump_run_config(cfg);
  if (!out) fail(ErrorKind::io, "write failed: " + (dir / "config.json").string());
}

}  // namespace setl
