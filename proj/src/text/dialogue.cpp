#include "steerlm/text/dialogue.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

namespace steerlm {

DialogueHistory DialogueHistory::from_texts(const std::vector<std::string>& texts, const Vocab& vocab) {
  DialogueHistory h;
  const int n = static_cast<int>(texts.size());
  for (int i = 0; i < n; ++i) {
    // Count back from the last turn, which is always the user's.
    const bool user = (n - 1 - i) % 2 == 0;
    h.turns.push_back({user ? Speaker::kUser : Speaker::kSystem, vocab.encode(texts[i])});
  }
  return h;
}

EncodedHistory encode_history(const DialogueHistory& history, int window) {
  if (history.turns.empty()) throw std::invalid_argument("encode_history: no turns");
  for (const auto& t : history.turns) {
    if (t.tokens.empty()) throw std::invalid_argument("encode_history: empty turn");
  }
  std::size_t first = 0;
  std::size_t total = 0;
  for (const auto& t : history.turns) total += t.tokens.size() + 1;
  EncodedHistory enc;
  while (total > static_cast<std::size_t>(window)) {
    if (first + 1 >= history.turns.size()) {
      throw std::length_error("encode_history: newest turn alone exceeds the window of " + std::to_string(window));
    }
    total -= history.turns[first].tokens.size() + 1;
    ++first;
    enc.truncated = true;
    ++enc.dropped_turns;
  }
  enc.tokens.reserve(total);
  for (std::size_t i = first; i < history.turns.size(); ++i) {
    const auto& t = history.turns[i].tokens;
    enc.tokens.insert(enc.tokens.end(), t.begin(), t.end());
    enc.tokens.push_back(Vocab::kSep);
  }
  return enc;
}

std::vector<std::vector<std::string>> moving_window_prefixes(const std::vector<Dialogue>& dialogues, int window) {
  std::vector<std::vector<std::string>> out;
  for (const auto& d : dialogues) {
    for (std::size_t end = window; end <= d.turns.size(); ++end) {
      out.emplace_back(d.turns.begin() + (end - window), d.turns.begin() + end);
    }
  }
  return out;
}

IndexSplit split_indices(int n, double train_fraction, std::uint64_t seed) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const int cut = static_cast<int>(train_fraction * n + 0.5);
  IndexSplit s;
  s.train.assign(idx.begin(), idx.begin() + cut);
  s.held_out.assign(idx.begin() + cut, idx.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.held_out.begin(), s.held_out.end());
  return s;
}

}  // namespace steerlm
