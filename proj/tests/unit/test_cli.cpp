#include <doctest.h>

#include <cstdlib>
#include <set>
#include <sstream>

#include "setl/cli.hpp"
#include "setl/config.hpp"
#include "setl/cross_validation.hpp"
#include "setl/error.hpp"
#include "setl/feature_archive.hpp"
#include "support.hpp"

using namespace setl;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

// A tiny but complete pipeline configuration rooted in `dir`.
std::string tiny_config(const testing::TempDir& dir, int seed = 3) {
  const std::string root = dir.path().string();
  return R"({
  "seed": )" + std::to_string(seed) + R"(,
  "adapt": {"components": 4, "ivector_dim": 3, "ubm_iterations": 3, "tv_iterations": 2},
  "network": {"width_factor": 0.0078125, "head_hidden": 8},
  "pretrain": {"epochs": 1, "output_frame_stride": 3},
  "finetune": {"epochs": 1, "output_frame_stride": 3},
  "synth": {"num_sessions": 2, "speakers_per_session": 1, "utterances_per_class": 1,
            "pretrain_utterances": 4, "pretrain_speakers": 2, "max_duration_s": 1.2},
  "paths": {"data_dir": ")" + root + R"(/data", "work_dir": ")" + root + R"(/work",
            "output_dir": ")" + root + R"(/out"}
})";
}

}  // namespace

TEST_CASE("config parsing") {
  SUBCASE("defaults") {
    const RunConfig c = parse_run_config("{}");
    CHECK(c.mfcc.num_ceps == 40);
    CHECK(c.adapt.ivector_dim == 100);
    CHECK(c.input_dim() == 140);
    CHECK(c.network.tap == "tdnn12");
    CHECK(c.pretrain_seed() == c.seed + 2);
    CHECK(c.evaluation.taps.size() == 3);
  }
  SUBCASE("round trip through the dump") {
    RunConfig c = parse_run_config(R"({"seed": 9, "network": {"width_factor": 0.25}, "finetune": {"epochs": 3}})");
    CHECK(c.seed == 9);
    CHECK(c.network.width_factor == 0.25);
    CHECK(c.finetune.epochs == 3);
    const std::string dumped = dump_run_config(c);
    CHECK(dump_run_config(parse_run_config(dumped)) == dumped);
  }
  SUBCASE("strictness") {
    const auto kind = [](const std::string& text) {
      try {
        parse_run_config(text);
      } catch (const Error& e) {
        return e.kind();
      }
      return ErrorKind::invalid_argument;
    };
    CHECK(kind(R"({"sede": 1})") == ErrorKind::config);
    CHECK(kind(R"({"mfcc": {"num_cepz": 13}})") == ErrorKind::config);
    CHECK(kind(R"({"seed": "one"})") == ErrorKind::config);
    CHECK(kind(R"({"mfcc": {"num_ceps": 41}})") == ErrorKind::config);
    CHECK(kind(R"({"network": {"tap": "tdnn99"}})") == ErrorKind::config);
    CHECK(kind("{not json") == ErrorKind::config);
  }
  SUBCASE("environment seed override") {
    RunConfig c;
    ::setenv("TDNN_TRANSFER_SEED", "77", 1);
    apply_environment(c);
    ::unsetenv("TDNN_TRANSFER_SEED");
    CHECK(c.seed == 77);
  }
}

TEST_CASE("exit codes are distinct per error kind") {
  std::set<int> codes = {kExitOk, kExitInternal, kExitUsage};
  for (auto k : {ErrorKind::invalid_argument, ErrorKind::dimension_mismatch, ErrorKind::io, ErrorKind::format,
                 ErrorKind::numeric, ErrorKind::config}) {
    CHECK(codes.insert(exit_code(k)).second);
  }
}

TEST_CASE("usage errors") {
  const Run unknown = cli({"gradcheck", "--no-such-flag"});
  CHECK(unknown.code == 2);
  CHECK(unknown.err.find("Usage") != std::string::npos);
  CHECK(cli({}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
}

TEST_CASE("machine-readable failures") {
  testing::TempDir dir;
  testing::dump(dir / "bad.json", R"({"nope": 1})");
  const Run bad = cli({"--config", (dir / "bad.json").string(), "datagen"});
  CHECK(bad.code == exit_code(ErrorKind::config));
  CHECK(bad.err.rfind("error: kind=config code=" + std::to_string(bad.code) + " message=\"", 0) == 0);
  const Run missing = cli({"--config", (dir / "none.json").string(), "datagen"});
  CHECK(missing.code == exit_code(ErrorKind::io));
  testing::dump(dir / "run.json", tiny_config(dir));
  const Run no_data = cli({"--config", (dir / "run.json").string(), "features", "extract"});
  CHECK(no_data.code == exit_code(ErrorKind::io));
}

TEST_CASE("gradcheck subcommand") {
  const Run r = cli({"gradcheck", "--width-factor", "0.0078125"});
  CHECK(r.code == 0);
  CHECK(r.out.find("max_relative_error=") != std::string::npos);
  CHECK(cli({"gradcheck", "--step", "0"}).code == exit_code(ErrorKind::invalid_argument));
}

TEST_CASE("pipeline through the command line") {
  testing::TempDir dir;
  testing::dump(dir / "run.json", tiny_config(dir));
  const std::string cfg = (dir / "run.json").string();
  for (std::vector<std::string> cmd : {std::vector<std::string>{"datagen"},
                                       {"features", "extract"},
                                       {"adapt", "train"},
                                       {"adapt", "apply"},
                                       {"pretrain"},
                                       {"finetune"},
                                       {"evaluate"},
                                       {"cross-validate"},
                                       {"compare-taps"}}) {
    cmd.insert(cmd.begin(), {"--config", cfg});
    const Run r = cli(cmd);
    REQUIRE_MESSAGE(r.code == 0, cmd.back() << ": " << r.err);
  }
  const auto adapted = read_feature_archive(dir / "work/features/emotion.adapted.feat");
  REQUIRE(adapted.size() == 8);
  CHECK(adapted.front().dim() == 43);
  for (const char* sub : {"work/features", "work/adapt", "work/pretrain", "work/finetune", "out"}) {
    CHECK_MESSAGE(std::filesystem::exists(dir.path() / sub / "config.json"), sub);
  }
  const RunConfig echoed = load_run_config(dir / "out/config.json");
  CHECK(echoed.seed == 3);
  CHECK(echoed.adapt.components == 4);
  const std::string csv = testing::slurp(dir / "out/eval_report.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);  // header, two folds, mean
  const std::string taps = testing::slurp(dir / "out/tap_comparison.csv");
  CHECK(std::count(taps.begin(), taps.end(), '\n') == 4);
  const Run report = cli({"report", "--dir", (dir / "out").string()});
  CHECK(report.code == 0);
  CHECK(report.out.find("eval_report.csv") != std::string::npos);

  SUBCASE("re-running a stage reproduces its outputs byte for byte") {
    const std::string before = testing::slurp(dir / "out/eval_report.csv");
    const std::string manifest = testing::slurp(dir / "data/emotion/manifest.csv");
    const std::string ckpt = testing::slurp(dir / "work/pretrain/pretrained.ckpt");
    REQUIRE(cli({"--config", cfg, "datagen"}).code == 0);
    REQUIRE(cli({"--config", cfg, "pretrain"}).code == 0);
    REQUIRE(cli({"--config", cfg, "cross-validate"}).code == 0);
    CHECK(testing::slurp(dir / "data/emotion/manifest.csv") == manifest);
    CHECK(testing::slurp(dir / "work/pretrain/pretrained.ckpt") == ckpt);
    CHECK(testing::slurp(dir / "out/eval_report.csv") == before);
  }
  SUBCASE("a checkpoint from a different feature setup is refused") {
    testing::dump(dir / "other.json", tiny_config(dir));
    std::string text = testing::slurp(dir / "other.json");
    text.replace(text.find("\"ivector_dim\": 3"), 16, "\"ivector_dim\": 5");
    testing::dump(dir / "other.json", text);
    const Run r = cli({"--config", (dir / "other.json").string(), "cross-validate"});
    CHECK(r.code != 0);
  }
}
