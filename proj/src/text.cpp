#include "viclevr/text.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace viclevr {
namespace {

struct Decoded {
  char32_t cp;
  std::size_t length;
  bool valid;
};

Decoded decode_utf8(std::string_view s, std::size_t pos) {
  const auto lead = static_cast<unsigned char>(s[pos]);
  if (lead < 0x80) return {lead, 1, true};
  std::size_t length = 0;
  char32_t cp = 0;
  if ((lead & 0xE0) == 0xC0) {
    length = 2;
    cp = lead & 0x1F;
  } else if ((lead & 0xF0) == 0xE0) {
    length = 3;
    cp = lead & 0x0F;
  } else if ((lead & 0xF8) == 0xF0) {
    length = 4;
    cp = lead & 0x07;
  } else {
    return {lead, 1, false};
  }
  if (pos + length > s.size()) return {lead, 1, false};
  for (std::size_t k = 1; k < length; ++k) {
    const auto cont = static_cast<unsigned char>(s[pos + k]);
    if ((cont & 0xC0) != 0x80) return {lead, 1, false};
    cp = (cp << 6) | (cont & 0x3F);
  }
  // Reject overlong forms and surrogates so re-encoding is lossless.
  static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
  if (cp < kMin[length] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
    return {lead, 1, false};
  }
  return {cp, length, true};
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

bool is_space(char32_t cp) {
  switch (cp) {
    case U' ': case U'\t': case U'\n': case U'\r': case U'\v': case U'\f':
    case 0x00A0: case 0x1680: case 0x2028: case 0x2029: case 0x202F:
    case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

bool is_punct(char32_t cp) {
  if (cp == U'_') return false;  // joins pre-segmented compounds
  if (cp < 0x80) {
    return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
           (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
  }
  return cp == 0x2026 || cp == 0x201C || cp == 0x201D;
}

bool even(char32_t cp) { return (cp & 1U) == 0; }

}  // namespace

char32_t to_lower(char32_t cp) {
  if (cp < 0x80) return (cp >= U'A' && cp <= U'Z') ? cp + 32 : cp;
  if (cp >= 0x00C0 && cp <= 0x00DE && cp != 0x00D7) return cp + 32;
  if (cp >= 0x0100 && cp <= 0x017F) {
    if (cp <= 0x012F || (cp >= 0x0132 && cp <= 0x0137) || (cp >= 0x014A && cp <= 0x0177)) {
      return even(cp) ? cp + 1 : cp;
    }
    if (cp == 0x0130) return U'i';
    if ((cp >= 0x0139 && cp <= 0x0148) || (cp >= 0x0179 && cp <= 0x017E)) {
      return even(cp) ? cp : cp + 1;
    }
    if (cp == 0x0178) return 0x00FF;
    return cp;
  }
  if (cp == 0x01A0 || cp == 0x01AF) return cp + 1;  // Ơ, Ư
  if (cp >= 0x0370 && cp <= 0x03FF) {
    if (cp == 0x0386) return 0x03AC;
    if (cp >= 0x0388 && cp <= 0x038A) return cp + 37;
    if (cp == 0x038C) return 0x03CC;
    if (cp == 0x038E || cp == 0x038F) return cp + 63;
    if (cp >= 0x0391 && cp <= 0x03AB && cp != 0x03A2) return cp + 32;
    return cp;
  }
  if (cp >= 0x0400 && cp <= 0x040F) return cp + 80;
  if (cp >= 0x0410 && cp <= 0x042F) return cp + 32;
  if ((cp >= 0x0460 && cp <= 0x0481) || (cp >= 0x048A && cp <= 0x04BF)) {
    return even(cp) ? cp + 1 : cp;
  }
  if ((cp >= 0x1E00 && cp <= 0x1E95) || (cp >= 0x1EA0 && cp <= 0x1EFF)) {
    return even(cp) ? cp + 1 : cp;
  }
  if (cp == 0x1E9E) return 0x00DF;
  return cp;
}

std::string normalize_text(std::string_view s) {
  std::string out;
  out.reserve(s.size() + s.size() / 4);
  bool pending_space = false;
  auto emit_separator = [&] {
    if (!out.empty()) out.push_back(' ');
    pending_space = false;
  };
  for (std::size_t pos = 0; pos < s.size();) {
    const Decoded d = decode_utf8(s, pos);
    const std::string_view raw = s.substr(pos, d.length);
    pos += d.length;
    if (!d.valid) {
      if (pending_space) emit_separator();
      out.append(raw);
      continue;
    }
    if (is_space(d.cp)) {
      pending_space = true;
      continue;
    }
    if (is_punct(d.cp)) {
      emit_separator();
      append_utf8(out, d.cp);
      pending_space = true;
      continue;
    }
    if (pending_space) emit_separator();
    append_utf8(out, to_lower(d.cp));
  }
  return out;
}

bool is_punctuation_token(std::string_view token) {
  if (token.empty()) return false;
  for (std::size_t pos = 0; pos < token.size();) {
    const Decoded d = decode_utf8(token, pos);
    if (!d.valid || !is_punct(d.cp)) return false;
    pos += d.length;
  }
  return true;
}

TokenSeq::TokenSeq(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (const auto& t : tokens_) {
    if (t.empty()) throw std::invalid_argument("TokenSeq: empty token");
    for (std::size_t pos = 0; pos < t.size();) {
      const Decoded d = decode_utf8(t, pos);
      if (d.valid && is_space(d.cp)) {
        throw std::invalid_argument("TokenSeq: token contains whitespace: '" + t + "'");
      }
      pos += d.length;
    }
  }
}

TokenSeq::TokenSeq(std::initializer_list<std::string> tokens)
    : TokenSeq(std::vector<std::string>(tokens)) {}

TokenSeq tokenize(std::string_view s) {
  const std::string normalized = normalize_text(s);
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (start < normalized.size()) {
    std::size_t end = normalized.find(' ', start);
    if (end == std::string::npos) end = normalized.size();
    tokens.emplace_back(normalized.substr(start, end - start));
    start = end + 1;
  }
  return TokenSeq(std::move(tokens));
}

std::map<NGram, std::size_t> ngram_counts(const TokenSeq& t, std::size_t n) {
  if (n == 0) throw std::invalid_argument("ngram_counts: n must be >= 1");
  std::map<NGram, std::size_t> counts;
  if (t.size() < n) return counts;
  for (std::size_t i = 0; i + n <= t.size(); ++i) {
    ++counts[NGram(t.tokens().begin() + static_cast<std::ptrdiff_t>(i),
                   t.tokens().begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
  const TokenSeq& outer = a.size() >= b.size() ? a : b;
  const TokenSeq& inner = a.size() >= b.size() ? b : a;
  std::vector<std::size_t> prev(inner.size() + 1, 0), curr(inner.size() + 1, 0);
  for (std::size_t i = 1; i <= outer.size(); ++i) {
    for (std::size_t j = 1; j <= inner.size(); ++j) {
      curr[j] = outer[i - 1] == inner[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], curr[j - 1]);
    }
    std::swap(prev, curr);
  }
  return prev[inner.size()];
}

std::size_t count_crossings(const std::vector<AlignedPair>& pairs) {
  std::size_t crossings = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (std::size_t j = i + 1; j < pairs.size(); ++j) {
      const bool hypo_order = pairs[i].hypo < pairs[j].hypo;
      const bool ref_order = pairs[i].ref < pairs[j].ref;
      if (hypo_order != ref_order) ++crossings;
    }
  }
  return crossings;
}

std::size_t count_chunks(const std::vector<AlignedPair>& pairs) {
  if (pairs.empty()) return 0;
  std::size_t chunks = 1;
  for (std::size_t i = 1; i < pairs.size(); ++i) {
    if (pairs[i].hypo != pairs[i - 1].hypo + 1 || pairs[i].ref != pairs[i - 1].ref + 1) ++chunks;
  }
  return chunks;
}

namespace {

// Depth-first branch and bound over hypo positions. Within one token type an
// optimal alignment never crosses itself (uncrossing two same-token pairs
// strictly removes a crossing), so same-token ref indices are kept increasing.
class AlignmentSearch {
 public:
  AlignmentSearch(const TokenSeq& hypo, const TokenSeq& ref) : hypo_(hypo), ref_(ref) {
    std::unordered_map<std::string, std::size_t> ids;
    auto id_of = [&](const std::string& t) {
      return ids.try_emplace(t, ids.size()).first->second;
    };
    hypo_ids_.reserve(hypo.size());
    for (const auto& t : hypo) hypo_ids_.push_back(id_of(t));
    ref_positions_.resize(ids.size());
    for (std::size_t r = 0; r < ref.size(); ++r) {
      const auto it = ids.find(ref[r]);
      if (it != ids.end()) ref_positions_[it->second].push_back(r);
    }
    const std::size_t types = ids.size();
    hypo_count_.assign(types, 0);
    for (auto id : hypo_ids_) ++hypo_count_[id];
    required_.resize(types);
    skip_budget_.resize(types);
    for (std::size_t w = 0; w < types; ++w) {
      required_[w] = std::min(hypo_count_[w], ref_positions_[w].size());
      skip_budget_[w] = hypo_count_[w] - required_[w];
    }
    matched_.assign(types, 0);
    skipped_.assign(types, 0);
    next_slot_.assign(types, 0);
    ref_used_.assign(ref.size(), false);
  }

  std::vector<AlignedPair> run() {
    search(0, 0);
    return best_;
  }

 private:
  static constexpr std::size_t kNodeBudget = 2'000'000;

  void search(std::size_t h, std::size_t crossings) {
    if (have_best_ && crossings >= best_crossings_) return;
    if (++nodes_ > kNodeBudget && have_best_) return;
    if (h == hypo_.size()) {
      best_ = current_;
      best_crossings_ = crossings;
      have_best_ = true;
      return;
    }
    const std::size_t w = hypo_ids_[h];
    const auto& slots = ref_positions_[w];
    if (matched_[w] < required_[w]) {
      const std::size_t still_needed = required_[w] - matched_[w] - 1;
      for (std::size_t slot = next_slot_[w]; slot + still_needed < slots.size(); ++slot) {
        const std::size_t r = slots[slot];
        std::size_t added = 0;
        for (std::size_t k = r + 1; k < ref_.size(); ++k) added += ref_used_[k] ? 1 : 0;
        const std::size_t saved_slot = next_slot_[w];
        ref_used_[r] = true;
        ++matched_[w];
        next_slot_[w] = slot + 1;
        current_.push_back({h, r});
        search(h + 1, crossings + added);
        current_.pop_back();
        next_slot_[w] = saved_slot;
        --matched_[w];
        ref_used_[r] = false;
      }
    }
    if (skipped_[w] < skip_budget_[w]) {
      ++skipped_[w];
      search(h + 1, crossings);
      --skipped_[w];
    }
  }

  const TokenSeq& hypo_;
  const TokenSeq& ref_;
  std::vector<std::size_t> hypo_ids_;
  std::vector<std::vector<std::size_t>> ref_positions_;
  std::vector<std::size_t> hypo_count_, required_, skip_budget_;
  std::vector<std::size_t> matched_, skipped_, next_slot_;
  std::vector<bool> ref_used_;
  std::vector<AlignedPair> current_, best_;
  std::size_t best_crossings_ = std::numeric_limits<std::size_t>::max();
  bool have_best_ = false;
  std::size_t nodes_ = 0;
};

}  // namespace

AlignmentMap align_unigrams(const TokenSeq& hypo, const TokenSeq& ref) {
  AlignmentMap map;
  map.pairs = AlignmentSearch(hypo, ref).run();
  map.chunk_count = count_chunks(map.pairs);
  return map;
}

}  // namespace viclevr
