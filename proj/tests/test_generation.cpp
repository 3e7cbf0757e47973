#include <gtest/gtest.h>

#include <filesystem>

#include "steerlm/steering/generation.hpp"
#include "steerlm/steering/weighted_decoding.hpp"
#include "support.hpp"

namespace steerlm {
namespace {

using testing::ToyWorld;

GenerationRequest request(Method m, const std::vector<std::string>& history, std::uint64_t seed) {
  GenerationRequest r;
  r.method = m;
  r.history = history;
  r.attribute = "sentiment:positive";
  r.gen.seed = seed;
  return r;
}

TEST(Generation, MethodNames) {
  for (Method m : {Method::kDG, Method::kWD, Method::kPP, Method::kAD, Method::kHM}) {
    EXPECT_EQ(parse_method(method_name(m)), m);
  }
  EXPECT_THROW(parse_method("XX"), std::invalid_argument);
}

TEST(Generation, GenConfigValidation) {
  GenConfig c;
  EXPECT_NO_THROW(c.validate(100));
  c.top_k = 101;
  EXPECT_THROW(c.validate(100), std::invalid_argument);
  c = {};
  c.temperature = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.min_length = 30;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.candidates = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Generation, DeterministicAndWellFormed) {
  ToyWorld w;
  const auto prefixes = w.prefixes(10);
  for (std::size_t i = 0; i < prefixes.size(); ++i) {
    const auto req = request(Method::kDG, prefixes[i], i);
    const GenerationRecord a = generate(w.models(), req);
    const GenerationRecord b = generate(w.models(), req);
    EXPECT_EQ(a.response, b.response);
    EXPECT_EQ(a.timings.size(), a.response.size());
    EXPECT_GE(a.response.size(), 1u);
    EXPECT_LE(a.response.size(), 20u);
    EXPECT_EQ(a.context.back(), Vocab::kSep);
    for (int t : a.response) EXPECT_GE(t, Vocab::kNumReserved);
    EXPECT_EQ(a.response_text, w.vocab.decode(a.response));
  }
}

TEST(Generation, PlainPPLMIsDeterministic) {
  ToyWorld w;
  for (const auto& h : w.prefixes(4)) {
    auto req = request(Method::kPP, h, 3);
    req.pplm.iterations = 3;
    EXPECT_EQ(generate(w.models(), req).response, generate(w.models(), req).response);
  }
}

TEST(Generation, ZeroIterationPPLMEqualsUnsteered) {
  ToyWorld w;
  int i = 0;
  for (const auto& h : w.prefixes(30)) {
    auto dg = request(Method::kDG, h, 100 + i);
    auto pp = request(Method::kPP, h, 100 + i);
    pp.pplm.iterations = 0;
    pp.pplm.gm_scale = 0.3;  // irrelevant when nothing is perturbed
    const GenerationRecord a = generate(w.models(), dg), b = generate(w.models(), pp);
    EXPECT_EQ(a.response, b.response);
    EXPECT_EQ(a.response_text, b.response_text);
    ++i;
  }
}

TEST(Generation, ZeroWeightWDEqualsUnsteered) {
  ToyWorld w;
  const TokenScores scores = build_token_scores(w.vocab, w.corpus.labeled[0]);
  SteeringModels m = w.models();
  m.token_scores = &scores;
  int i = 0;
  for (const auto& h : w.prefixes(30)) {
    auto wd = request(Method::kWD, h, 7 + i);
    wd.wd.weight = 0;
    EXPECT_EQ(generate(m, wd).response, generate(m, request(Method::kDG, h, 7 + i)).response);
    ++i;
  }
}

TEST(Generation, ZeroInitAdaptersEqualUnsteered) {
  ToyWorld w;
  const AdapterStack stack = AdapterStack::init(w.cfg, AdapterConfig{}, 5);
  SteeringModels m = w.models();
  m.adapters = &stack;
  int i = 0;
  for (const auto& h : w.prefixes(30)) {
    EXPECT_EQ(generate(m, request(Method::kAD, h, i)).response, generate(m, request(Method::kDG, h, i)).response);
    ++i;
  }
}

TEST(Generation, WeightedDecodingShiftsVocabulary) {
  ToyWorld w;
  const TokenScores scores = build_token_scores(w.vocab, w.corpus.labeled[0]);
  SteeringModels m = w.models();
  m.token_scores = &scores;
  const auto& pos = w.corpus.partitions[0][0];
  auto count_pos = [&](double weight) {
    int hits = 0;
    int i = 0;
    for (const auto& h : w.prefixes(20)) {
      auto req = request(Method::kWD, h, i++);
      req.wd.weight = weight;
      for (int t : generate(m, req).response) {
        hits += std::find(pos.begin(), pos.end(), w.vocab.token(t)) != pos.end();
      }
    }
    return hits;
  };
  EXPECT_GT(count_pos(5.0), count_pos(0.0) + 20);
}

TEST(Generation, WeightedDecodingLeavesModelUntouched) {
  ToyWorld w;
  const TokenScores scores = build_token_scores(w.vocab, w.corpus.labeled[0]);
  SteeringModels m = w.models();
  m.token_scores = &scores;
  const auto before = w.lm->params().checksum();
  auto req = request(Method::kWD, w.prefixes(1)[0], 1);
  req.wd.weight = 3;
  generate(m, req);
  EXPECT_EQ(w.lm->params().checksum(), before);
}

TEST(Generation, RecordJsonRoundTrip) {
  ToyWorld w;
  auto req = request(Method::kPP, w.prefixes(1)[0], 9);
  req.pplm.iterations = 2;
  req.gen.candidates = 3;
  const GenerationRecord r = generate(w.models(), req);
  EXPECT_EQ(GenerationRecord::from_json(r.to_json()).to_json(), r.to_json());
  const auto path = std::filesystem::temp_directory_path() / "steerlm_records.jsonl";
  save_records(path.string(), {r, r});
  const auto back = load_records(path.string());
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].response, r.response);
  EXPECT_EQ(back[1].attribute_loss, r.attribute_loss);
  std::filesystem::remove(path);
}

TEST(Generation, RecordRejectsMismatchedTimings) {
  GenerationRecord r;
  r.response = {5, 6};
  r.timings = {0.1};
  EXPECT_THROW(GenerationRecord::from_json(r.to_json()), std::invalid_argument);
}

TEST(Generation, RerankPicksLowestLoss) {
  EXPECT_EQ(rerank(std::vector<double>{0.9, 0.2, 0.5}), 1);
  EXPECT_EQ(rerank(std::vector<double>{0.4}), 0);
  EXPECT_EQ(rerank(std::vector<double>{0.3, 0.1, 0.1, 0.2}), 1);
  EXPECT_THROW(rerank(std::vector<double>{}), std::invalid_argument);
}

TEST(Generation, CandidatesAreReranked) {
  ToyWorld w;
  auto req = request(Method::kDG, w.prefixes(1)[0], 4);
  req.gen.candidates = 10;
  const GenerationRecord r = generate(w.models(), req);
  ASSERT_EQ(r.candidate_losses.size(), 10u);
  EXPECT_EQ(r.candidates_considered, 10);
  EXPECT_EQ(r.attribute_loss, *std::min_element(r.candidate_losses.begin(), r.candidate_losses.end()));
  EXPECT_EQ(r.selected, rerank(r.candidate_losses));
  EXPECT_EQ(r.attribute_loss, score_response(*w.lm, w.disc, r.context, r.response, w.disc.attribute("positive")));
  // The first candidate is what a single-sample run would produce.
  req.gen.candidates = 1;
  EXPECT_EQ(generate(w.models(), req).response_text, r.candidate_texts[0]);
}

TEST(Generation, LongHistoryIsTruncatedNotOverflowed) {
  ToyWorld w;
  std::vector<std::string> history;
  for (const auto& d : w.corpus.dialogues) {
    history.insert(history.end(), d.turns.begin(), d.turns.end());
    if (history.size() > 12) break;
  }
  auto req = request(Method::kPP, history, 2);
  req.pplm.iterations = 1;
  const GenerationRecord r = generate(w.models(), req);
  EXPECT_TRUE(r.truncated);
  EXPECT_LE(1 + static_cast<int>(r.context.size()) + req.gen.max_length, w.cfg.window);
}

TEST(Generation, MissingArtifactsAreReported) {
  ToyWorld w;
  const auto h = w.prefixes(1)[0];
  try {
    generate(w.models(), request(Method::kAD, h, 0));
    ADD_FAILURE();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("sentiment:positive"), std::string::npos);
  }
  EXPECT_THROW(generate(w.models(), request(Method::kWD, h, 0)), std::invalid_argument);
  EXPECT_THROW(generate(w.models(), request(Method::kHM, h, 0)), std::invalid_argument);
  auto bad = request(Method::kPP, h, 0);
  bad.attribute = "sentiment:sarcastic";
  EXPECT_THROW(generate(w.models(), bad), std::out_of_range);
}

TEST(Generation, MinLengthForcesLongResponses) {
  ToyWorld w;
  auto req = request(Method::kDG, w.prefixes(1)[0], 0);
  req.gen.max_length = 12;
  req.gen.min_length = 12;
  EXPECT_EQ(generate(w.models(), req).response.size(), 12u);
}

}  // namespace
}  // namespace steerlm
