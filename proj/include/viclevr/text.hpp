#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace viclevr {

/// Lowercases (Latin, Latin Extended, Vietnamese, Greek, Cyrillic), pads every
/// punctuation character with single spaces, collapses whitespace runs and trims.
/// Punctuation is the ASCII set minus '_' plus "…", "“", "”". Idempotent.
std::string normalize_text(std::string_view s);

/// Lowercase mapping of a single code point; identity outside the covered scripts.
char32_t to_lower(char32_t cp);

/// True if `token` consists solely of punctuation characters.
bool is_punctuation_token(std::string_view token);

/// Ordered sequence of normalized tokens. No token is empty or contains whitespace.
class TokenSeq {
 public:
  TokenSeq() = default;
  /// Throws std::invalid_argument if a token violates the invariant.
  explicit TokenSeq(std::vector<std::string> tokens);
  TokenSeq(std::initializer_list<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  bool empty() const { return tokens_.empty(); }
  const std::string& operator[](std::size_t i) const { return tokens_[i]; }
  auto begin() const { return tokens_.begin(); }
  auto end() const { return tokens_.end(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  friend bool operator==(const TokenSeq&, const TokenSeq&) = default;

 private:
  std::vector<std::string> tokens_;
};

/// normalize_text followed by a split on single spaces.
TokenSeq tokenize(std::string_view s);

using NGram = std::vector<std::string>;

/// Multiset of contiguous n-grams. Throws std::invalid_argument for n == 0.
std::map<NGram, std::size_t> ngram_counts(const TokenSeq& t, std::size_t n);

/// Longest common subsequence length, O(|a|·|b|) time and O(min) memory.
std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b);

struct AlignedPair {
  std::size_t hypo;
  std::size_t ref;
  friend bool operator==(const AlignedPair&, const AlignedPair&) = default;
};

struct AlignmentMap {
  std::vector<AlignedPair> pairs;  // ascending hypo index
  std::size_t chunk_count = 0;
};

/// Exact-match unigram alignment with maximum cardinality and, among those,
/// the fewest crossings. Ties go to the earliest ref index for each hypo token
/// scanned left to right.
AlignmentMap align_unigrams(const TokenSeq& hypo, const TokenSeq& ref);

/// Number of crossing pairs (h1 < h2 while r1 > r2).
std::size_t count_crossings(const std::vector<AlignedPair>& pairs);

/// Maximal runs of pairs that advance by one in both sequences.
std::size_t count_chunks(const std::vector<AlignedPair>& pairs);

}  // namespace viclevr
