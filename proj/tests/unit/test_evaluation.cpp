#include "triaan/evaluation.hpp"
#include "triaan/oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <sstream>

using namespace triaan;

TEST_CASE("edit distance hand cases") {
  CHECK(edit_distance(std::string("abc"), std::string("abc")) == 0);
  CHECK(edit_distance(std::string("abc"), std::string("axc")) == 1);
  CHECK(edit_distance(std::string(), std::string("abc")) == 3);
  CHECK(edit_distance(std::string("kitten"), std::string("sitting")) == 3);
  CHECK(edit_distance(std::vector<std::string>{"a", "b"}, std::vector<std::string>{"b"}) == 1);
}

TEST_CASE("edit distance matches the table oracle") {
  Rng rng(1);
  for (int i = 0; i < 300; ++i) {
    std::string a(rng.below(12), 'a'), b(rng.below(12), 'a');
    for (char& c : a) c = static_cast<char>('a' + rng.below(3));
    for (char& c : b) c = static_cast<char>('a' + rng.below(3));
    CHECK(edit_distance(a, b) == oracle::levenshtein(a, b));
  }
}

TEST_CASE("transcript normalization") {
  CHECK(normalize_transcript("  Hello,   world! ") == "HELLO WORLD");
  CHECK(Transcript("it's ok").words() == std::vector<std::string>{"ITS", "OK"});
  CHECK(Transcript("a b").characters() == "AB");
}

TEST_CASE("WER and CER hand cases") {
  CHECK(wer(Transcript("the cat"), Transcript("the cat")) == 0.0);
  CHECK(wer(Transcript("the cat"), Transcript("the bat")) == doctest::Approx(0.5));
  CHECK(cer(Transcript("the cat"), Transcript("the bat")) == doctest::Approx(1.0 / 6.0));
  CHECK(wer(Transcript("a"), Transcript("a b c")) == doctest::Approx(2.0));
  CHECK_THROWS_AS(wer(Transcript(""), Transcript("x")), ValidationError);
}

TEST_CASE("cosine similarity") {
  const Vec u = Vec::Unit(2, 0), v = Vec::Ones(2);
  CHECK(cosine_similarity(u, u) == doctest::Approx(1.0));
  CHECK(cosine_similarity(u, Vec::Unit(2, 1)) == doctest::Approx(0.0));
  CHECK(cosine_similarity(u, v) == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK_THROWS_AS(cosine_similarity(u, Vec::Zero(2)), ValidationError);
}

TEST_CASE("EER edge cases") {
  const EerResult sep = eer_threshold({{0.8, 0.9}, {0.1, 0.2}});
  CHECK(sep.eer == 0.0);
  CHECK(sep.threshold > 0.2);
  CHECK(sep.threshold <= 0.8);
  CHECK(eer_threshold({{0.3, 0.5, 0.7}, {0.3, 0.5, 0.7}}).eer == doctest::Approx(0.5));
  CHECK_THROWS_AS(eer_threshold({{}, {0.1}}), ValidationError);
}

TEST_CASE("EER matches the exhaustive oracle") {
  Rng rng(2);
  for (int t = 0; t < 30; ++t) {
    ScorePair sp;
    for (int i = 0; i < 40; ++i) sp.genuine.push_back(std::clamp(0.5 + 0.25 * rng.normal(), -1.0, 1.0));
    for (int i = 0; i < 60; ++i) sp.impostor.push_back(std::clamp(0.1 + 0.25 * rng.normal(), -1.0, 1.0));
    const EerResult r = eer_threshold(sp);
    const oracle::Eer o = oracle::eer_exhaustive(sp.genuine, sp.impostor);
    CHECK(r.threshold == o.threshold);
    CHECK(r.eer == o.eer);
  }
}

TEST_CASE("SV acceptance rate") {
  CHECK(sv_accept_rate({0.2, 0.6, 0.9}, 0.5) == doctest::Approx(2.0 / 3.0));
  CHECK(sv_accept_rate({0.7, 0.8}, 0.5) == 1.0);
  CHECK(sv_accept_rate({0.1, 0.2}, 0.5) == 0.0);
  CHECK_THROWS(sv_accept_rate({}, 0.5));
}

TEST_CASE("trials split same and cross speaker pairs") {
  const std::vector<std::pair<std::string, Vec>> e = {
      {"a", Vec::Unit(2, 0)}, {"a", Vec::Unit(2, 0)}, {"b", Vec::Unit(2, 1)}};
  const ScorePair sp = build_trials(e);
  CHECK(sp.genuine.size() == 1);
  CHECK(sp.impostor.size() == 2);
  CHECK(sp.genuine[0] == doctest::Approx(1.0));
}

TEST_CASE("mel-stat embedder and adapter factories") {
  Rng rng(3);
  const Vec e = MelStatEmbedder::embed_mel(rng.normal_matrix(80, 30));
  CHECK(e.size() == 160);
  CHECK(make_embedding_adapter("mel_stats")->name() == "mel_stats");
  CHECK(make_embedding_adapter("command:echo 1 2 {wav}")->name() == "command");
  CHECK_THROWS_AS(make_embedding_adapter("ecapa"), ConfigError);
  CHECK_THROWS_AS(make_transcript_adapter("none"), ConfigError);
}

TEST_CASE("command embedder reads numbers from stdout") {
  RawAudio a;
  a.samples.assign(1600, 0.1);
  const Vec v = make_embedding_adapter("command:echo 1 2.5 -3 #{wav}")->embed(a);
  REQUIRE(v.size() == 3);
  CHECK(v(1) == 2.5);
}

TEST_CASE("report summary and tsv") {
  EvaluationReport r;
  r.embedder = "mel_stats";
  r.rows = {{"s2s", "x", "y", 0.5, 0.2, 0.9, true},
            {"s2s", "x2", "y2", 0.0, 0.0, 0.1, false},
            {"u2u", "p", "q", std::nullopt, std::nullopt, 0.8, true}};
  const auto s = r.summary();
  REQUIRE(s.size() == 3);
  CHECK(s[0].scenario == "S2S");
  CHECK(s[0].sv == doctest::Approx(50.0));
  CHECK(*s[0].wer == doctest::Approx(25.0));
  CHECK(!s[1].wer.has_value());
  CHECK(s[2].scenario == "Avg");
  std::ostringstream os;
  write_pairs_tsv(os, r);
  CHECK(os.str().find("scenario\t") == 0);
  CHECK(format_summary_table(r).find("S2S") != std::string::npos);
}
