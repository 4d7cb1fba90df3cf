#include "setl/cli.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "setl/config.hpp"
#include "setl/cross_validation.hpp"
#include "setl/feature_archive.hpp"
#include "setl/pipeline.hpp"
#include "setl/synth.hpp"
#include "setl/transfer.hpp"

namespace setl {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 3;
    case ErrorKind::io: return 4;
    case ErrorKind::format: return 5;
    case ErrorKind::numeric: return 6;
    case ErrorKind::dimension_mismatch:
    case ErrorKind::fingerprint_mismatch: return 7;
    case ErrorKind::invalid_argument: return 8;
  }
  return kExitInternal;
}

namespace {

namespace fs = std::filesystem;

std::string quoted(const std::string& s) {
  std::ostringstream o;
  o << std::quoted(s);
  return o.str();
}

void error_line(std::ostream& err, std::string_view kind, int code, const std::string& message) {
  err << "error: kind=" << kind << " code=" << code << " message=" << quoted(message) << '\n';
}

void require_file(const fs::path& p, const std::string& hint) {
  if (!fs::exists(p)) fail(ErrorKind::io, "missing input " + p.string() + (hint.empty() ? "" : " (" + hint + ")"));
}

fs::path emotion_archive(const RunConfig& c, bool adapted) {
  return c.paths.features_dir() / (adapted ? "emotion.adapted.feat" : "emotion.feat");
}
fs::path pretrain_archive(const RunConfig& c, bool adapted) {
  return c.paths.features_dir() / (adapted ? "pretrain.adapted.feat" : "pretrain.feat");
}

// Reorders archive entries to follow the manifest rows.
std::vector<FeatureMatrix> align(std::vector<FeatureMatrix> feats, const std::vector<std::string>& ids,
                                 const fs::path& archive) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < feats.size(); ++i) index.emplace(feats[i].utterance_id, i);
  std::vector<FeatureMatrix> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = index.find(id);
    if (it == index.end()) {
      fail(ErrorKind::dimension_mismatch, archive.string() + " has no features for utterance '" + id +
                                              "'; rerun features extract and adapt apply");
    }
    out.push_back(std::move(feats[it->second]));
  }
  return out;
}

std::vector<LabeledUtterance> load_emotion(const RunConfig& c, Manifest* manifest_out = nullptr) {
  const Manifest m = read_manifest(c.paths.emotion_manifest_path());
  const fs::path archive = emotion_archive(c, true);
  require_file(archive, "run 'adapt apply' first");
  std::vector<std::string> ids;
  for (const auto& r : m.rows) ids.push_back(r.utt_id);
  auto utts = emotion_examples(m, align(read_feature_archive(archive), ids, archive));
  for (const auto& u : utts) {
    if (u.features.dim() != static_cast<std::size_t>(c.input_dim())) {
      fail(ErrorKind::dimension_mismatch, "adapted features have dim " + std::to_string(u.features.dim()) +
                                              ", config expects " + std::to_string(c.input_dim()));
    }
  }
  if (manifest_out) *manifest_out = m;
  return utts;
}

Checkpoint load_checked(const fs::path& path, const RunConfig& c, const std::string& hint) {
  require_file(path, hint);
  Checkpoint ck = load_checkpoint(path);
  check_fingerprint(c.fingerprint(), ck.fingerprint);
  return ck;
}

CvConfig cv_config(const RunConfig& c, const std::string& tap) {
  CvConfig cv;
  cv.tap = tap;
  cv.num_classes = static_cast<int>(kEmotionLabels.size());
  cv.head_hidden = c.network.head_hidden;
  cv.freeze_pretrained = c.network.freeze_pretrained;
  cv.finetune = c.finetune_config();
  return cv;
}

std::string test_session(const RunConfig& c, const Manifest& m) {
  const auto sessions = m.sessions();
  if (sessions.empty()) fail(ErrorKind::invalid_argument, "manifest has no sessions");
  if (c.evaluation.test_session.empty()) return sessions.back();
  if (std::find(sessions.begin(), sessions.end(), c.evaluation.test_session) == sessions.end()) {
    fail(ErrorKind::config, "evaluation.test_session '" + c.evaluation.test_session + "' is not in the manifest");
  }
  return c.evaluation.test_session;
}

void print_report(std::ostream& out, const EvalReport& r) {
  out << std::fixed << std::setprecision(4);
  for (const auto& f : r.folds) out << "fold " << f.test_session << " ua=" << f.ua << " wa=" << f.wa << '\n';
  out << "mean ua=" << r.mean_ua << " wa=" << r.mean_wa << '\n';
}

// ---- commands -------------------------------------------------------------

void cmd_datagen(const RunConfig& c, std::ostream& out) {
  const SynthCorpus corpus = generate_corpus(c.synth, c.paths.data_dir);
  write_config_echo(c.paths.data_dir, c);
  out << "datagen: " << corpus.emotion.rows.size() << " emotion utterances, " << corpus.pretrain.rows.size()
      << " pretraining utterances under " << c.paths.data_dir << '\n';
}

void cmd_features_extract(const RunConfig& c, std::ostream& out) {
  const Manifest m = read_manifest(c.paths.emotion_manifest_path());
  const auto feats = extract_features(m, c.mfcc, c.sample_rate_hz);
  const fs::path dir = c.paths.features_dir();
  fs::create_directories(dir);
  write_feature_archive(emotion_archive(c, false), feats);
  out << "features: " << feats.size() << " emotion utterances -> " << emotion_archive(c, false).string() << '\n';
  const fs::path pm = c.paths.pretrain_manifest_path();
  if (fs::exists(pm)) {
    const auto pf = extract_features(read_pretrain_manifest(pm), c.mfcc, c.sample_rate_hz);
    write_feature_archive(pretrain_archive(c, false), pf);
    out << "features: " << pf.size() << " pretraining utterances -> " << pretrain_archive(c, false).string() << '\n';
  } else if (!c.paths.pretrain_manifest.empty()) {
    fail(ErrorKind::io, "missing input " + pm.string());
  }
  write_config_echo(dir, c);
}

// The adaptation model is trained on the pretraining corpus when one exists.
void cmd_adapt_train(const RunConfig& c, std::ostream& out) {
  if (c.adapt.ivector_dim == 0) {
    out << "adapt: ivector_dim is 0, adaptation disabled\n";
    return;
  }
  fs::path archive = pretrain_archive(c, false);
  if (!fs::exists(archive)) archive = emotion_archive(c, false);
  require_file(archive, "run 'features extract' first");
  const auto feats = read_feature_archive(archive);
  const IvectorExtractor model = train_adaptation(feats, c.adapt, c.adapt_seed());
  const fs::path path = c.paths.ivector_model_path();
  fs::create_directories(path.parent_path());
  save_ivector_extractor(path, model);
  write_config_echo(path.parent_path(), c);
  out << "adapt: C=" << c.adapt.components << " R=" << c.adapt.ivector_dim << " trained on " << feats.size()
      << " utterances -> " << path.string() << '\n';
}

void cmd_adapt_apply(const RunConfig& c, std::ostream& out) {
  std::optional<IvectorExtractor> model;
  if (c.adapt.ivector_dim > 0) {
    require_file(c.paths.ivector_model_path(), "run 'adapt train' first");
    model = load_ivector_extractor(c.paths.ivector_model_path());
    if (model->tv.ivector_dim() != static_cast<std::size_t>(c.adapt.ivector_dim) ||
        model->ubm.dim() != static_cast<std::size_t>(c.mfcc.num_ceps)) {
      fail(ErrorKind::fingerprint_mismatch, "i-vector model dims do not match the config");
    }
  }
  const auto apply = [&](const fs::path& in, const fs::path& dst, const std::vector<std::string>& ids,
                         const std::vector<std::string>& speakers) {
    require_file(in, "run 'features extract' first");
    auto feats = align(read_feature_archive(in), ids, in);
    if (model) feats = apply_adaptation(feats, speakers, *model, c.adapt.scope);
    write_feature_archive(dst, feats);
    out << "adapt: " << feats.size() << " utterances -> " << dst.string() << '\n';
  };
  const Manifest m = read_manifest(c.paths.emotion_manifest_path());
  std::vector<std::string> ids;
  for (const auto& r : m.rows) ids.push_back(r.utt_id);
  apply(emotion_archive(c, false), emotion_archive(c, true), ids, speakers_of(m));
  if (fs::exists(pretrain_archive(c, false))) {
    const PretrainManifest pm = read_pretrain_manifest(c.paths.pretrain_manifest_path());
    std::vector<std::string> pids;
    for (const auto& r : pm.rows) pids.push_back(r.utt_id);
    apply(pretrain_archive(c, false), pretrain_archive(c, true), pids, speakers_of(pm));
  }
  write_config_echo(c.paths.features_dir(), c);
}

void cmd_pretrain(const RunConfig& c, std::ostream& out) {
  const PretrainManifest pm = read_pretrain_manifest(c.paths.pretrain_manifest_path());
  const fs::path archive = pretrain_archive(c, true);
  require_file(archive, "run 'adapt apply' first");
  std::vector<std::string> ids;
  for (const auto& r : pm.rows) ids.push_back(r.utt_id);
  auto examples = pretrain_examples(pm, align(read_feature_archive(archive), ids, archive), c.mfcc, c.sample_rate_hz);
  const NetworkSpec spec = paper_default_spec(c.spec_options(pm.num_phones()));
  TrainReport report;
  const Checkpoint ck = pretrain(examples, spec, c.pretrain_config(), c.fingerprint(), &report);
  const fs::path dir = c.paths.pretrain_dir();
  fs::create_directories(dir);
  save_checkpoint(c.paths.pretrained_checkpoint_path(), ck);
  write_train_report(dir / "train_report.csv", report);
  write_config_echo(dir, c);
  out << "pretrain: " << ck.net.num_parameters() << " parameters, " << report.epochs.size() << " epochs";
  if (!report.epochs.empty()) out << ", final loss " << report.epochs.back().loss;
  out << " -> " << c.paths.pretrained_checkpoint_path().string() << '\n';
}

void cmd_finetune(const RunConfig& c, std::ostream& out) {
  Manifest m;
  const auto utts = load_emotion(c, &m);
  const std::string held_out = test_session(c, m);
  std::vector<LabeledUtterance> train;
  for (const auto& u : utts) {
    if (u.session != held_out) train.push_back(u);
  }
  const Checkpoint pre = load_checked(c.paths.pretrained_checkpoint_path(), c, "run 'pretrain' first");
  HeadOptions ho;
  ho.hidden_dim = c.network.head_hidden;
  ho.seed = c.finetune_seed();
  Checkpoint ck;
  ck.net = attach_head(pre, c.network.tap, static_cast<int>(kEmotionLabels.size()), ho);
  ck.fingerprint = pre.fingerprint;
  const FreezePolicy policy = c.network.freeze_pretrained ? FreezePolicy::freeze_pretrained(ck.net) : FreezePolicy{};
  const TrainReport report = finetune(ck.net, to_frames(train), policy, c.finetune_config());
  ck.provenance = {"emotion-finetune", static_cast<int>(report.epochs.size()), c.finetune_seed()};
  const fs::path dir = c.paths.finetune_dir();
  fs::create_directories(dir);
  save_checkpoint(c.paths.finetuned_checkpoint_path(), ck);
  write_train_report(dir / "train_report.csv", report);
  write_config_echo(dir, c);
  out << "finetune: tap=" << c.network.tap << " held out " << held_out << ", trained on " << train.size()
      << " utterances -> " << c.paths.finetuned_checkpoint_path().string() << '\n';
}

void cmd_evaluate(const RunConfig& c, std::ostream& out) {
  Manifest m;
  const auto utts = load_emotion(c, &m);
  const std::string held_out = test_session(c, m);
  std::vector<LabeledUtterance> test;
  for (const auto& u : utts) {
    if (u.session == held_out) test.push_back(u);
  }
  const Checkpoint ck = load_checked(c.paths.finetuned_checkpoint_path(), c, "run 'finetune' first");
  EvalReport r;
  r.folds.push_back(evaluate_network(ck.net, test, static_cast<int>(kEmotionLabels.size())));
  r.folds.back().test_session = held_out;
  r.mean_ua = r.folds.back().ua;
  r.mean_wa = r.folds.back().wa;
  r.mean_confusion = r.folds.back().confusion.normalized();
  for (std::size_t k = 0; k < r.mean_confusion.rows(); ++k) r.class_recalls.push_back(r.mean_confusion(k, k));
  r.config_echo = dump_run_config(c);
  write_eval_report(c.paths.output_dir, r);
  print_report(out, r);
}

void cmd_cross_validate(const RunConfig& c, std::ostream& out) {
  Manifest m;
  const auto utts = load_emotion(c, &m);
  const Checkpoint pre = load_checked(c.paths.pretrained_checkpoint_path(), c, "run 'pretrain' first");
  EvalReport r = cross_validate(utts, make_folds(m), pre, cv_config(c, c.network.tap));
  r.config_echo = dump_run_config(c);
  write_eval_report(c.paths.output_dir, r);
  print_report(out, r);
}

void cmd_compare_taps(const RunConfig& c, std::ostream& out) {
  Manifest m;
  const auto utts = load_emotion(c, &m);
  const Checkpoint pre = load_checked(c.paths.pretrained_checkpoint_path(), c, "run 'pretrain' first");
  const std::string held_out = test_session(c, m);
  const auto rows = compare_taps(utts, held_out, pre, c.evaluation.taps, cv_config(c, c.network.tap));
  fs::create_directories(c.paths.output_dir);
  write_tap_comparison(fs::path(c.paths.output_dir) / "tap_comparison.csv", rows);
  write_config_echo(c.paths.output_dir, c);
  out << "tap comparison on " << held_out << '\n' << std::fixed << std::setprecision(4);
  for (const auto& r : rows) out << r.tap << " ua=" << r.ua << " wa=" << r.wa << '\n';
}

struct GradcheckArgs {
  double width_factor = 1.0 / 128.0;
  int frames = 10;
  double step = 1e-3;
  double tolerance = 1e-5;
};

void cmd_gradcheck(const RunConfig& c, const GradcheckArgs& a, std::ostream& out) {
  if (a.frames < 1) fail(ErrorKind::invalid_argument, "--frames must be >= 1");
  RunConfig rc = c;
  rc.network.width_factor = a.width_factor;
  const int classes = static_cast<int>(kEmotionLabels.size());
  const Network net = Network::initialize(paper_default_spec(rc.spec_options(classes)), c.seed);
  std::mt19937_64 rng(c.seed + 17);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, classes - 1);
  LabeledFrames sample;
  sample.features.utterance_id = "gradcheck";
  sample.features.frames = Matrix(static_cast<std::size_t>(a.frames), static_cast<std::size_t>(rc.input_dim()));
  for (double& v : sample.features.frames.values()) v = gauss(rng);
  for (int t = 0; t < a.frames; ++t) sample.labels.push_back(label(rng));
  const auto start = std::chrono::steady_clock::now();
  const GradCheckResult r = gradient_check(net, sample, a.step);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out << "gradcheck: parameters=" << r.parameters_checked << " frames=" << a.frames
      << " max_relative_error=" << std::scientific << std::setprecision(3) << r.max_relative_error
      << " worst_layer=" << net.spec.layers[r.worst_layer].name << " reduced_steps=" << r.reduced_steps
      << " kinks_skipped=" << r.kinks_skipped << std::fixed << std::setprecision(2)
      << " seconds=" << seconds << '\n';
  if (!(r.max_relative_error < a.tolerance)) {
    std::ostringstream msg;
    msg << "max relative error " << std::scientific << r.max_relative_error << " exceeds tolerance " << a.tolerance;
    fail(ErrorKind::numeric, msg.str());
  }
}

void cmd_report(const RunConfig& c, const std::string& dir_flag, std::ostream& out) {
  const fs::path dir = dir_flag.empty() ? fs::path(c.paths.output_dir) : fs::path(dir_flag);
  bool any = false;
  for (const char* name : {"eval_report.csv", "tap_comparison.csv", "confusion.txt"}) {
    const fs::path p = dir / name;
    if (!fs::exists(p)) continue;
    std::ifstream in(p);
    if (!in) fail(ErrorKind::io, "cannot read " + p.string());
    out << "== " << p.string() << '\n' << in.rdbuf();
    any = true;
  }
  if (!any) fail(ErrorKind::io, "no evaluation outputs in " + dir.string());
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Transfer learning from ASR-style pretraining to speech emotion recognition", "setl"};
  app.require_subcommand(1, 1);
  std::string config_path;
  int threads = -1;
  app.add_option("--config", config_path, "RunConfig JSON file (defaults apply when omitted)");
  app.add_option("--threads", threads, "Cap on worker threads")->check(CLI::NonNegativeNumber);

  auto* datagen = app.add_subcommand("datagen", "Generate the seeded synthetic corpora");
  auto* features = app.add_subcommand("features", "Feature extraction");
  features->require_subcommand(1, 1);
  auto* features_extract = features->add_subcommand("extract", "MFCCs for every manifest row");
  auto* adapt = app.add_subcommand("adapt", "i-vector speaker adaptation");
  adapt->require_subcommand(1, 1);
  auto* adapt_train = adapt->add_subcommand("train", "Train the UBM and total-variability model");
  auto* adapt_apply = adapt->add_subcommand("apply", "Append i-vectors to every frame");
  auto* pretrain_cmd = app.add_subcommand("pretrain", "Pretrain the TDNN on the phone proxy task");
  auto* finetune_cmd = app.add_subcommand("finetune", "Attach an emotion head and fine-tune");
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score the fine-tuned model on the held-out session");
  auto* cv_cmd = app.add_subcommand("cross-validate", "Leave-one-session-out cross validation");
  auto* taps_cmd = app.add_subcommand("compare-taps", "Compare bottleneck taps on one held-out session");
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of backpropagation");
  GradcheckArgs ga;
  gradcheck->add_option("--width-factor", ga.width_factor, "Hidden width scale")->check(CLI::PositiveNumber);
  gradcheck->add_option("--frames", ga.frames, "Number of random frames");
  gradcheck->add_option("--step", ga.step, "Finite-difference step");
  gradcheck->add_option("--tolerance", ga.tolerance, "Maximum accepted relative error");
  auto* report = app.add_subcommand("report", "Print evaluation outputs");
  std::string report_dir;
  report->add_option("--dir", report_dir, "Directory holding evaluation outputs");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << app.help();
    error_line(err, "usage", kExitUsage, e.what());
    return kExitUsage;
  }

  try {
    RunConfig cfg = config_path.empty() ? parse_run_config("{}") : load_run_config(config_path);
    apply_environment(cfg);
    if (threads >= 0) cfg.threads = threads;
    if (cfg.threads > 0) omp_set_num_threads(cfg.threads);

    if (datagen->parsed()) cmd_datagen(cfg, out);
    else if (features_extract->parsed()) cmd_features_extract(cfg, out);
    else if (adapt_train->parsed()) cmd_adapt_train(cfg, out);
    else if (adapt_apply->parsed()) cmd_adapt_apply(cfg, out);
    else if (pretrain_cmd->parsed()) cmd_pretrain(cfg, out);
    else if (finetune_cmd->parsed()) cmd_finetune(cfg, out);
    else if (evaluate_cmd->parsed()) cmd_evaluate(cfg, out);
    else if (cv_cmd->parsed()) cmd_cross_validate(cfg, out);
    else if (taps_cmd->parsed()) cmd_compare_taps(cfg, out);
    else if (gradcheck->parsed()) cmd_gradcheck(cfg, ga, out);
    else if (report->parsed()) cmd_report(cfg, report_dir, out);
    return kExitOk;
  } catch (const Error& e) {
    const int code = exit_code(e.kind());
    error_line(err, to_string(e.kind()), code, e.what());
    return code;
  } catch (const fs::filesystem_error& e) {
    error_line(err, "io", exit_code(ErrorKind::io), e.what());
    return exit_code(ErrorKind::io);
  } catch (const std::exception& e) {
    error_line(err, "internal", kExitInternal, e.what());
    return kExitInternal;
  }
}

}  // namespace setl
