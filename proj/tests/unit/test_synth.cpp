#include <doctest.h>

#include <map>
#include <set>

#include "setl/error.hpp"
#include "setl/manifest.hpp"
#include "setl/synth.hpp"
#include "setl/wav.hpp"
#include "support.hpp"

using namespace setl;

TEST_CASE("prototypes are pairwise distinct") {
  const auto& e = emotion_prototypes();
  for (std::size_t a = 0; a < e.size(); ++a) {
    for (std::size_t b = a + 1; b < e.size(); ++b) {
      const bool same = e[a].f0_hz == e[b].f0_hz && e[a].amplitude == e[b].amplitude &&
                        e[a].mod_rate_hz == e[b].mod_rate_hz && e[a].tilt == e[b].tilt;
      CHECK_FALSE(same);
    }
  }
  const auto& p = phone_prototypes();
  CHECK(p.size() >= 8);
  std::set<std::tuple<double, double, double, bool>> seen;
  for (const auto& ph : p) CHECK(seen.insert({ph.f1, ph.f2, ph.f3, ph.noise_excited}).second);
}

TEST_CASE("synthesis is seeded") {
  VoiceRecipe r;
  r.duration_s = 0.5;
  r.segments = {{0, 0, 4000}, {3, 4000, 8000}};
  r.noise_level = 0.01;
  const Waveform a = synthesize(r, 3), b = synthesize(r, 3), c = synthesize(r, 4);
  CHECK(a.samples == b.samples);
  CHECK_FALSE(a.samples == c.samples);
  CHECK(a.samples.size() == 8000);
  for (double s : a.samples) CHECK(std::abs(s) <= 1.0);
  r.segments.clear();
  CHECK_THROWS_AS(synthesize(r, 1), Error);
}

TEST_CASE("corpus layout, counts and determinism") {
  SynthSpec spec;
  spec.utterances_per_class = 10;
  spec.pretrain_utterances = 12;
  spec.pretrain_speakers = 3;
  spec.seed = 42;
  testing::TempDir a, b;
  const SynthCorpus ca = generate_corpus(spec, a.path());
  generate_corpus(spec, b.path());

  REQUIRE(ca.emotion.rows.size() == 200);
  CHECK(ca.pretrain.rows.size() == 12);
  CHECK(ca.emotion.sessions().size() == 5);
  std::map<int, int> per_class;
  std::set<std::string> speakers;
  for (const auto& row : ca.emotion.rows) {
    ++per_class[row.label];
    speakers.insert(row.speaker);
    CHECK(row.speaker.rfind(row.session, 0) == 0);
  }
  for (int c = 0; c < 4; ++c) CHECK(per_class[c] == 50);
  CHECK(speakers.size() == 10);

  CHECK(testing::slurp(a / "emotion/manifest.csv") == testing::slurp(b / "emotion/manifest.csv"));
  CHECK(testing::slurp(a / "pretrain/manifest.csv") == testing::slurp(b / "pretrain/manifest.csv"));
  const Manifest m = read_manifest(a / "emotion/manifest.csv");
  for (std::size_t i = 0; i < m.rows.size(); i += 37) {
    const auto pa = m.resolve(m.rows[i]);
    const auto pb = b.path() / std::filesystem::relative(pa, a.path());
    CHECK(testing::slurp(pa) == testing::slurp(pb));
    const Waveform w = read_wav(pa);
    CHECK(w.sample_rate_hz == 16000);
    CHECK(w.samples.size() >= 16000);
    CHECK(w.samples.size() <= 48000);
  }

  const PretrainManifest pm = read_pretrain_manifest(a / "pretrain/manifest.csv");
  for (const auto& row : pm.rows) {
    CHECK(row.segments.size() >= 2);
    CHECK(row.segments.size() <= 5);
    CHECK(row.segments.front().begin_sample == 0);
    for (std::size_t k = 0; k < row.segments.size(); ++k) {
      const auto& s = row.segments[k];
      CHECK(s.phone >= 0);
      CHECK(s.phone < spec.num_phones);
      CHECK(s.end_sample - s.begin_sample >= 2400);
      if (k > 0) CHECK(s.begin_sample == row.segments[k - 1].end_sample);
    }
    CHECK(row.segments.back().end_sample == read_wav(pm.resolve(row)).samples.size());
  }
}

TEST_CASE("a different seed gives a different corpus") {
  SynthSpec spec;
  spec.num_sessions = 2;
  spec.utterances_per_class = 1;
  spec.pretrain_utterances = 2;
  spec.pretrain_speakers = 1;
  testing::TempDir a, b;
  spec.seed = 1;
  const auto ca = generate_corpus(spec, a.path());
  spec.seed = 2;
  generate_corpus(spec, b.path());
  CHECK(testing::slurp(a.path() / "emotion" / ca.emotion.rows[0].path) !=
        testing::slurp(b.path() / "emotion" / ca.emotion.rows[0].path));
}

TEST_CASE("spec validation") {
  SynthSpec spec;
  CHECK_NOTHROW(spec.validate());
  spec.num_phones = 1;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = {};
  spec.min_duration_s = 3.0;
  spec.max_duration_s = 1.0;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = {};
  spec.utterances_per_class = 0;
  CHECK_THROWS_AS(spec.validate(), Error);
}
