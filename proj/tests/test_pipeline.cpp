#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "steerlm/model/params.hpp"
#include "steerlm/pipeline/toy_pipeline.hpp"

// Trained end-to-end setup, shared through a cache in the build tree so only
// the first run pays for training.
#ifndef STEERLM_TEST_CACHE
#define STEERLM_TEST_CACHE ""
#endif

namespace steerlm {
namespace {

const ToyPipeline& pipeline() {
  static const ToyPipeline p = build_toy_pipeline(ToyPipelineConfig{}, STEERLM_TEST_CACHE);
  return p;
}

std::string lm_checksum() { return checksum_hex(pipeline().lm->params().checksum()); }

TEST(Pipeline, DiscriminatorReachesHighHeldOutF1) {
  const ToyPipeline& p = pipeline();
  DiscriminatorReport rep;
  train_discriminator(*p.lm, p.vocab, p.disc_train, p.disc_test, p.cfg.discriminator, &rep);
  EXPECT_GE(rep.test_f1, 0.95);
  EXPECT_EQ(rep.test_f1, p.discriminator_report.test_f1);
  EXPECT_EQ(rep.lm_checksum, lm_checksum());
}

TEST(Pipeline, ShuffledLabelsStayAtChance) {
  const ToyPipeline& p = pipeline();
  LabeledDataset train = p.disc_train, test = p.disc_test;
  std::mt19937_64 rng(5);
  for (auto& e : train.examples) e.label = static_cast<int>(rng() % 2);
  for (auto& e : test.examples) e.label = static_cast<int>(rng() % 2);
  DiscriminatorReport rep;
  train_discriminator(*p.lm, p.vocab, train, test, p.cfg.discriminator, &rep);
  EXPECT_NEAR(rep.test_f1, 0.5, 0.1);
}

TEST(Pipeline, SplitsAreDisjoint) {
  const ToyPipeline& p = pipeline();
  std::set<long> ids;
  for (const auto* d : {&p.disc_train, &p.disc_test, &p.external_data}) {
    for (const auto& e : d->examples) EXPECT_TRUE(ids.insert(e.id).second) << "id " << e.id;
  }
  const std::set<std::vector<std::string>> train(p.train_prefixes.begin(), p.train_prefixes.end());
  for (const auto& h : p.heldout_prefixes) EXPECT_EQ(train.count(h), 0u);
  EXPECT_GE(p.heldout_prefixes.size(), 200u);
}

// Adapter stacks for opposite classes pull generations toward their own word
// partition: a 2x2 chi-square test over 200 generations.
TEST(Pipeline, SwappingAdaptersSwapsDominantVocabulary) {
  const ToyPipeline& p = pipeline();
  ASSERT_EQ(p.attributes.size(), 2u);
  std::vector<std::set<int>> partition(2);
  for (int c = 0; c < 2; ++c) {
    for (const auto& w : p.corpus.partitions[0][c]) partition[c].insert(p.vocab.id(w));
  }
  double counts[2][2] = {{0, 0}, {0, 0}};  // [steered class][partition hit]
  for (int c = 0; c < 2; ++c) {
    const SteeringModels m = p.models(p.attributes[c]);
    for (int i = 0; i < 100; ++i) {
      GenerationRequest r;
      r.method = Method::kAD;
      r.attribute = p.attributes[c];
      r.history = p.heldout_prefixes[i];
      r.gen.seed = 300 + i;  // one candidate: the adapters alone do the steering
      for (int t : generate(m, r).response) {
        for (int k = 0; k < 2; ++k) counts[c][k] += partition[k].count(t);
      }
    }
  }
  const double a = counts[0][0], b = counts[0][1], c = counts[1][0], d = counts[1][1];
  const double n = a + b + c + d;
  const double chi2 = n * (a * d - b * c) * (a * d - b * c) / ((a + b) * (c + d) * (a + c) * (b + d));
  const double p_value = std::erfc(std::sqrt(chi2 / 2));  // one degree of freedom
  EXPECT_LT(p_value, 0.01) << "chi2 " << chi2;
  EXPECT_GT(a / (a + b), 0.5) << a << " positive-class hits vs " << b;
  EXPECT_GT(d / (c + d), 0.5) << d << " negative-class hits vs " << c;
}

TEST(Pipeline, BaseChecksumUnchangedByEveryStage) {
  const ToyPipeline& p = pipeline();
  const std::string initial = lm_checksum();
  for (const auto& e : p.checksums) {
    EXPECT_EQ(e.before, initial) << e.stage;
    EXPECT_EQ(e.after, initial) << e.stage;
  }
  const std::string attr = p.attributes.front();
  const DistillDataset d = distill(p.models(), p.train_prefixes, attr, p.cfg.pplm, p.cfg.distill_gen, 4);
  EXPECT_EQ(lm_checksum(), initial);
  AdapterTrainReport rep;
  train_adapters(*p.lm, d, p.cfg.adapters, &rep);
  EXPECT_EQ(rep.lm_checksum, initial);
  EXPECT_EQ(lm_checksum(), initial);
}

TEST(Pipeline, CachedRebuildIsBitIdentical) {
  if (std::string(STEERLM_TEST_CACHE).empty()) GTEST_SKIP() << "no cache directory configured";
  const ToyPipeline& p = pipeline();
  const ToyPipeline q = build_toy_pipeline(p.cfg, STEERLM_TEST_CACHE);
  EXPECT_TRUE(q.from_cache);
  EXPECT_EQ(q.lm->params().checksum(), p.lm->params().checksum());
  EXPECT_EQ(q.scorer->params().checksum(), p.scorer->params().checksum());
  EXPECT_EQ(q.discriminator.checksum(), p.discriminator.checksum());
  for (const auto& [attr, stack] : p.adapters) EXPECT_EQ(q.adapters.at(attr).checksum(), stack.checksum());
  EXPECT_EQ(q.heldout_prefixes, p.heldout_prefixes);
}

}  // namespace
}  // namespace steerlm
