#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "steerlm/text/dialogue.hpp"
#include "steerlm/text/jsonl.hpp"
#include "steerlm/text/synthetic.hpp"
#include "steerlm/text/vocab.hpp"

namespace steerlm {
namespace {

std::string temp_file(const std::string& name, const std::string& content) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream(p) << content;
  return p.string();
}

TEST(Vocab, ReservedIdsAreFixed) {
  const Vocab v = Vocab::build({"hi there", "hi"});
  EXPECT_EQ(v.id("<pad>"), 0);
  EXPECT_EQ(v.id("<bos>"), 1);
  EXPECT_EQ(v.id("<eos>"), 2);
  EXPECT_EQ(v.id("<sep>"), 3);
  EXPECT_EQ(v.id("<unk>"), 4);
  EXPECT_EQ(v.id("hi"), 5);  // most frequent first
  EXPECT_EQ(v.id("there"), 6);
  EXPECT_EQ(v.id("missing"), Vocab::kUnk);
}

TEST(Vocab, FrequencyTiesAreLexicographic) {
  const Vocab v = Vocab::build({"b a c", "c"});
  EXPECT_EQ(v.tokens()[5], "c");
  EXPECT_EQ(v.tokens()[6], "a");
  EXPECT_EQ(v.tokens()[7], "b");
}

TEST(Vocab, CapBoundsTotalSize) {
  const Vocab v = Vocab::build({"a b c d e f g h"}, 8);
  EXPECT_EQ(v.size(), 8);
  EXPECT_THROW(Vocab::build({"a"}, 3), std::invalid_argument);
}

TEST(Vocab, SaveLoadRoundTrip) {
  const Vocab v = Vocab::build({"the cat sat on the mat"});
  const auto path = (std::filesystem::temp_directory_path() / "steerlm_vocab.txt").string();
  v.save(path);
  const Vocab r = Vocab::load(path);
  EXPECT_EQ(r.tokens(), v.tokens());
  std::filesystem::remove(path);
}

TEST(Vocab, DecodeEncodeIsIdentityOnCorpus) {
  const SyntheticCorpus c = make_synthetic_attribute_corpus(preset_spec("all"));
  std::vector<std::string> texts;
  for (const auto& d : c.dialogues) texts.insert(texts.end(), d.turns.begin(), d.turns.end());
  for (const auto& ds : c.labeled) {
    for (const auto& e : ds.examples) texts.push_back(e.text);
  }
  const Vocab v = Vocab::build(texts);
  for (const auto& t : texts) ASSERT_EQ(v.decode(v.encode(t)), t);
}

TEST(EncodeHistory, SingleTurn) {
  const Vocab v = Vocab::from_tokens({"hi"});
  const auto e = encode_history(DialogueHistory::from_texts({"hi"}, v), 128);
  EXPECT_EQ(e.tokens, (std::vector<int>{v.id("hi"), Vocab::kSep}));
  EXPECT_FALSE(e.truncated);
}

TEST(EncodeHistory, TwoTurns) {
  const Vocab v = Vocab::from_tokens({"a", "b", "c"});
  const auto h = DialogueHistory::from_texts({"a b", "c"}, v);
  EXPECT_EQ(h.turns[0].speaker, Speaker::kSystem);
  EXPECT_EQ(h.turns[1].speaker, Speaker::kUser);
  const auto e = encode_history(h, 128);
  EXPECT_EQ(e.tokens, (std::vector<int>{v.id("a"), v.id("b"), Vocab::kSep, v.id("c"), Vocab::kSep}));
}

TEST(EncodeHistory, DropsOldestWholeTurns) {
  // Three turns of four tokens each once the separator is counted.
  const Vocab v = Vocab::from_tokens({"a", "b", "c", "d", "e", "f", "g", "h", "i"});
  const auto h = DialogueHistory::from_texts({"a b c", "d e f", "g h i"}, v);
  const auto e = encode_history(h, 8);
  EXPECT_TRUE(e.truncated);
  EXPECT_EQ(e.dropped_turns, 1);
  EXPECT_EQ(e.tokens, (std::vector<int>{v.id("d"), v.id("e"), v.id("f"), Vocab::kSep, v.id("g"), v.id("h"),
                                        v.id("i"), Vocab::kSep}));
}

TEST(EncodeHistory, LengthIsTurnsPlusSeparators) {
  const Vocab v = Vocab::from_tokens({"a", "b", "c"});
  for (int n = 1; n < 6; ++n) {
    std::vector<std::string> texts;
    std::size_t expect = 0;
    for (int i = 0; i < n; ++i) {
      texts.push_back(std::string(i % 3 == 0 ? "a" : "a b c"));
      expect += (i % 3 == 0 ? 1 : 3) + 1;
    }
    EXPECT_EQ(encode_history(DialogueHistory::from_texts(texts, v), 128).tokens.size(), expect);
  }
}

TEST(EncodeHistory, Errors) {
  const Vocab v = Vocab::from_tokens({"a"});
  EXPECT_THROW(encode_history(DialogueHistory::from_texts({"a a a a a"}, v), 4), std::length_error);
  EXPECT_THROW(encode_history(DialogueHistory::from_texts({"a", ""}, v), 16), std::invalid_argument);
}

TEST(Jsonl, EmptyFileIsHardFailure) {
  const auto p = temp_file("steerlm_empty.jsonl", "");
  try {
    load_dialogues(p);
    FAIL();
  } catch (const EmptyDatasetError& e) {
    EXPECT_TRUE(e.errors().empty());
  }
}

TEST(Jsonl, MalformedLinesAreReported) {
  const auto p = temp_file("steerlm_dialogues.jsonl",
                           "{\"turns\": [\"a b\", \"c\"]}\n{\"turns\": [\"x\"]}\nnot json\n{\"turns\": [\"d\"], \"id\": 9}\n");
  const auto r = load_dialogues(p);
  ASSERT_EQ(r.records.size(), 3u);
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].line, 3);
  EXPECT_EQ(r.records[2].id, 9);
}

TEST(Jsonl, LabelOutOfRangeIsInvalid) {
  const auto p = temp_file("steerlm_labeled.jsonl",
                           "{\"text\": \"good\", \"label\": 0}\n{\"text\": \"bad\", \"label\": 2}\n"
                           "{\"text\": \"meh\", \"label\": 1}\n");
  const auto r = load_labeled(p, 2);
  EXPECT_EQ(r.records.size(), 2u);
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].line, 2);
}

TEST(Jsonl, SaveLoadRoundTrip) {
  std::vector<LabeledExample> ex{{3, "a b", 1}, {4, "c", 0}};
  const auto path = (std::filesystem::temp_directory_path() / "steerlm_rt.jsonl").string();
  save_labeled(path, ex);
  const auto r = load_labeled(path, 2);
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.records[0].id, 3);
  EXPECT_EQ(r.records[0].text, "a b");
  EXPECT_EQ(r.records[1].label, 0);
}

TEST(Synthetic, SameSeedSameCorpus) {
  const auto a = make_synthetic_attribute_corpus(preset_spec("sentiment"));
  const auto b = make_synthetic_attribute_corpus(preset_spec("sentiment"));
  ASSERT_EQ(a.dialogues.size(), b.dialogues.size());
  for (std::size_t i = 0; i < a.dialogues.size(); ++i) EXPECT_EQ(a.dialogues[i].turns, b.dialogues[i].turns);
  ASSERT_EQ(a.labeled[0].examples.size(), b.labeled[0].examples.size());
  for (std::size_t i = 0; i < a.labeled[0].examples.size(); ++i) {
    EXPECT_EQ(a.labeled[0].examples[i].text, b.labeled[0].examples[i].text);
  }
  auto other = preset_spec("sentiment");
  other.seed = 99;
  EXPECT_NE(make_synthetic_attribute_corpus(other).dialogues[0].turns, a.dialogues[0].turns);
}

TEST(Synthetic, DisjointPartitions) {
  const auto c = make_synthetic_attribute_corpus(preset_spec("all"));
  std::set<std::string> seen(c.neutral_words.begin(), c.neutral_words.end());
  for (const auto& facet : c.partitions) {
    for (const auto& cls : facet) {
      for (const auto& w : cls) EXPECT_TRUE(seen.insert(w).second) << w;
    }
  }
}

TEST(Synthetic, PartitionExceedingVocabIsRejected) {
  auto spec = preset_spec("sentiment");
  spec.vocab_cap = 50;
  EXPECT_THROW(make_synthetic_attribute_corpus(spec), std::invalid_argument);
}

TEST(Synthetic, LabeledShapes) {
  const auto c = make_synthetic_attribute_corpus(preset_spec("topic"));
  ASSERT_EQ(c.labeled.size(), 1u);
  EXPECT_EQ(c.labeled[0].num_classes(), 4);
  EXPECT_EQ(c.labeled[0].examples.size(), 4u * 500u);
  std::set<std::int64_t> ids;
  for (const auto& e : c.labeled[0].examples) {
    EXPECT_LT(e.label, 4);
    EXPECT_TRUE(ids.insert(e.id).second);
  }
}

TEST(Split, LabeledSplitIsDisjointAndComplete) {
  const auto c = make_synthetic_attribute_corpus(preset_spec("sentiment"));
  const auto [a, b] = split_labeled(c.labeled[0], 0.5, 3);
  std::set<std::int64_t> ia, ib;
  for (const auto& e : a.examples) ia.insert(e.id);
  for (const auto& e : b.examples) ib.insert(e.id);
  for (auto id : ia) EXPECT_EQ(ib.count(id), 0u);
  EXPECT_EQ(ia.size() + ib.size(), c.labeled[0].examples.size());
}

TEST(Split, IndicesPartitionRange) {
  const IndexSplit s = split_indices(101, 0.8, 4);
  EXPECT_EQ(s.train.size(), 81u);
  EXPECT_EQ(s.held_out.size(), 20u);
  std::vector<int> all = s.train;
  all.insert(all.end(), s.held_out.begin(), s.held_out.end());
  std::sort(all.begin(), all.end());
  for (int i = 0; i < 101; ++i) EXPECT_EQ(all[i], i);
}

TEST(Prefixes, MovingWindowOfTwo) {
  const std::vector<Dialogue> d{{0, {"a", "b", "c", "d"}}, {1, {"x"}}};
  const auto p = moving_window_prefixes(d, 2);
  ASSERT_EQ(p.size(), 3u);
  EXPECT_EQ(p[0], (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(p[2], (std::vector<std::string>{"c", "d"}));
}

}  // namespace
}  // namespace steerlm
