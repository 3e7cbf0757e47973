#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace steerlm {

/// Whitespace word-level vocabulary with a fixed reserved block.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kSep = 3;
  static constexpr int kUnk = 4;
  static constexpr int kNumReserved = 5;

  Vocab();

  /// Builds from corpus frequency: most frequent first, ties broken
  /// lexicographically. `cap` bounds the total size, reserved ids included.
  static Vocab build(const std::vector<std::string>& texts, int cap = 2000);
  /// Builds from an explicit token list (duplicates and reserved names rejected).
  static Vocab from_tokens(const std::vector<std::string>& tokens);

  /// One token per line; line n holds id kNumReserved + n.
  static Vocab load(const std::string& path);
  void save(const std::string& path) const;

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(std::string_view text) const;
  /// Joins tokens with single spaces. Reserved ids render as their markers.
  std::string decode(std::span<const int> ids) const;

  static std::vector<std::string> split(std::string_view text);

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace steerlm
