#include "viclevr/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "viclevr/error.hpp"
#include "viclevr/text.hpp"

namespace viclevr {

using nlohmann::json;

std::string_view name(LinguisticType t) {
  switch (t) {
    case LinguisticType::what: return "what";
    case LinguisticType::how: return "how";
    case LinguisticType::yes_no: return "yes_no";
    case LinguisticType::other: return "other";
  }
  return "?";
}

std::string_view name(LengthGroup g) {
  switch (g) {
    case LengthGroup::short_: return "short";
    case LengthGroup::medium: return "medium";
    case LengthGroup::long_: return "long";
    case LengthGroup::very_long: return "very_long";
  }
  return "?";
}

std::string_view name(LlsLevel l) {
  switch (l) {
    case LlsLevel::word: return "word";
    case LlsLevel::phrase: return "phrase";
    case LlsLevel::sentence: return "sentence";
  }
  return "?";
}

std::string_view name(Dimension d) {
  switch (d) {
    case Dimension::category: return "category";
    case Dimension::linguistic_type: return "linguistic_type";
    case Dimension::length_group: return "length_group";
    case Dimension::lls_level: return "lls_level";
  }
  return "?";
}

std::string_view category_name(std::optional<Category> c) { return c ? name(*c) : "unknown"; }

// ---------------------------------------------------------------------------
// Keyword patterns

namespace {

std::vector<std::string> split_parts(std::string_view pattern) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t star = pattern.find('*', start);
    std::string part = normalize_text(pattern.substr(start, star == std::string_view::npos
                                                                ? std::string_view::npos
                                                                : star - start));
    parts.push_back(std::move(part));
    if (star == std::string_view::npos) break;
    start = star + 1;
  }
  return parts;
}

}  // namespace

bool pattern_matches(std::string_view pattern, std::string_view normalized_text) {
  bool anchor_start = false;
  bool anchor_end = false;
  // Anchors are stripped before normalization, which would pad them as punctuation.
  while (!pattern.empty() && pattern.front() == ' ') pattern.remove_prefix(1);
  while (!pattern.empty() && pattern.back() == ' ') pattern.remove_suffix(1);
  if (!pattern.empty() && pattern.front() == '^') {
    anchor_start = true;
    pattern.remove_prefix(1);
  }
  if (!pattern.empty() && pattern.back() == '$') {
    anchor_end = true;
    pattern.remove_suffix(1);
  }
  const std::vector<std::string> parts = split_parts(pattern);
  const std::string text = " " + std::string(normalized_text) + " ";
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].empty()) continue;
    const std::string needle = " " + parts[i] + " ";
    const bool first = i == 0;
    const bool last = i + 1 == parts.size();
    std::size_t at;
    if (first && anchor_start) {
      if (text.compare(0, needle.size(), needle) != 0) return false;
      at = 0;
    } else if (last && anchor_end) {
      if (text.size() < needle.size() + cursor) return false;
      at = text.size() - needle.size();
      if (text.compare(at, needle.size(), needle) != 0) return false;
    } else {
      at = text.find(needle, cursor);
      if (at == std::string::npos) return false;
    }
    // Keep the trailing space available so adjacent parts may share it.
    cursor = at + needle.size() - 1;
  }
  return true;
}

KeywordRules KeywordRules::defaults() {
  KeywordRules r;
  r.categories = {
      {"count", {"bao nhiêu"}},
      {"comparison", {"có phải * hơn", "có phải * cùng", "có phải * giống"}},
      {"material", {"chất liệu"}},
      {"shape", {"hình dạng"}},
      {"size", {"kích thước"}},
      {"color", {"màu sắc", "màu gì"}},
  };
  r.types = {
      {"yes_no", {"^ có phải", "không ? $", "không $"}},
      {"how", {"bao nhiêu", "như thế nào"}},
      {"what", {"là gì", "gì"}},
  };
  return r;
}

namespace {

std::vector<KeywordRule> parse_rules(const json& j, const char* key, bool categories,
                                     const std::vector<KeywordRule>& fallback) {
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  const std::string base = std::string("/") + key;
  if (!it->is_array()) throw SchemaError(base, "expected array");
  std::vector<KeywordRule> out;
  for (std::size_t i = 0; i < it->size(); ++i) {
    const std::string path = base + "/" + std::to_string(i);
    const json& e = (*it)[i];
    if (!e.is_object() || !e.contains("label") || !e["label"].is_string()) {
      throw SchemaError(path + "/label", "expected string label");
    }
    KeywordRule rule;
    rule.label = e["label"].get<std::string>();
    const bool known = categories ? parse_category(rule.label).has_value()
                                  : (rule.label == "what" || rule.label == "how" ||
                                     rule.label == "yes_no" || rule.label == "other");
    if (!known) throw SchemaError(path + "/label", "unknown label '" + rule.label + "'");
    if (!e.contains("patterns") || !e["patterns"].is_array()) {
      throw SchemaError(path + "/patterns", "expected array");
    }
    for (std::size_t k = 0; k < e["patterns"].size(); ++k) {
      const json& p = e["patterns"][k];
      if (!p.is_string() || normalize_text(p.get<std::string>()).empty()) {
        throw SchemaError(path + "/patterns/" + std::to_string(k), "expected non-empty string");
      }
      rule.patterns.push_back(p.get<std::string>());
    }
    out.push_back(std::move(rule));
  }
  return out;
}

json rules_to_json(const std::vector<KeywordRule>& rules) {
  json out = json::array();
  for (const auto& r : rules) out.push_back({{"label", r.label}, {"patterns", r.patterns}});
  return out;
}

LinguisticType parse_type_label(const std::string& label) {
  if (label == "what") return LinguisticType::what;
  if (label == "how") return LinguisticType::how;
  if (label == "yes_no") return LinguisticType::yes_no;
  return LinguisticType::other;
}

const KeywordRule* first_match(const std::vector<KeywordRule>& rules, const std::string& text) {
  for (const auto& rule : rules) {
    for (const auto& p : rule.patterns) {
      if (pattern_matches(p, text)) return &rule;
    }
  }
  return nullptr;
}

}  // namespace

KeywordRules KeywordRules::from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("", "rules config must be an object");
  const KeywordRules d = defaults();
  KeywordRules r;
  r.categories = parse_rules(j, "categories", true, d.categories);
  r.types = parse_rules(j, "types", false, d.types);
  return r;
}

json KeywordRules::to_json() const {
  return {{"categories", rules_to_json(categories)}, {"types", rules_to_json(types)}};
}

std::optional<Category> classify_category(std::string_view question, const KeywordRules& rules) {
  const KeywordRule* rule = first_match(rules.categories, normalize_text(question));
  return rule ? parse_category(rule->label) : std::nullopt;
}

LinguisticType classify_linguistic_type(std::string_view question, const KeywordRules& rules) {
  const KeywordRule* rule = first_match(rules.types, normalize_text(question));
  return rule ? parse_type_label(rule->label) : LinguisticType::other;
}

// ---------------------------------------------------------------------------
// Length groups

Quartiles nearest_rank_quartiles(std::vector<std::size_t> values) {
  if (values.empty()) throw std::invalid_argument("quartiles of an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  auto rank = [&](std::size_t num, std::size_t den) {
    // ceil(p·n) computed in integers, then 1-based -> 0-based.
    std::size_t r = (num * n + den - 1) / den;
    r = std::clamp<std::size_t>(r, 1, n);
    return static_cast<double>(values[r - 1]);
  };
  return {rank(1, 4), rank(2, 4), rank(3, 4)};
}

Quartiles length_quartiles(const Dataset& d) {
  std::vector<std::size_t> lengths;
  lengths.reserve(d.questions.size());
  for (const auto& q : d.questions) lengths.push_back(tokenize(q.question).size());
  return nearest_rank_quartiles(std::move(lengths));
}

LengthGroup assign_length_group(std::size_t length, const Quartiles& q) {
  const auto n = static_cast<double>(length);
  if (n <= q.q1) return LengthGroup::short_;
  if (n <= q.q2) return LengthGroup::medium;
  if (n <= q.q3) return LengthGroup::long_;
  return LengthGroup::very_long;
}

// ---------------------------------------------------------------------------
// Linguistic level and complexity

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& t : tokenize(text)) {
    if (!is_punctuation_token(t)) out.push_back(t);
  }
  return out;
}

std::vector<std::string> HeuristicDependencyProvider::default_verbs() {
  return {"là",   "có",   "nằm",  "đặt",  "đứng", "ở",    "chứa", "được",
          "làm",  "thấy", "nhìn", "trông", "giống", "gồm",  "bằng", "thuộc",
          "đang", "sẽ",   "đã",   "cầm",  "đi",   "chạy", "ăn",   "mặc"};
}

HeuristicDependencyProvider::HeuristicDependencyProvider()
    : HeuristicDependencyProvider(default_verbs()) {}

HeuristicDependencyProvider::HeuristicDependencyProvider(std::vector<std::string> verbs) {
  for (auto& v : verbs) verbs_.insert(normalize_text(v));
}

DependencyParse HeuristicDependencyProvider::parse(std::string_view text) const {
  const std::vector<std::string> words = word_tokens(text);
  DependencyParse parse;
  if (words.empty()) return parse;
  parse.dependency_count = words.size() - 1;
  parse.tree_height =
      static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(words.size())))) + 1;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (verbs_.contains(words[i])) {
      parse.root_is_verb = true;
      parse.has_subject = i > 0;
      break;
    }
  }
  return parse;
}

LlsLevel lls_level(std::string_view text, const DependencyProvider& dep) {
  if (word_tokens(text).size() == 1) return LlsLevel::word;
  const DependencyParse p = dep.parse(text);
  return p.root_is_verb && p.has_subject ? LlsLevel::sentence : LlsLevel::phrase;
}

namespace {

class SummaryAccumulator {
 public:
  void add(double v) {
    min_ = n_ == 0 ? v : std::min(min_, v);
    max_ = n_ == 0 ? v : std::max(max_, v);
    sum_ += v;
    ++n_;
  }
  Summary result() const {
    if (n_ == 0) return {};
    return {min_, sum_ / static_cast<double>(n_), max_};
  }

 private:
  double min_ = 0.0, max_ = 0.0, sum_ = 0.0;
  std::size_t n_ = 0;
};

}  // namespace

ComplexityStats complexity_stats(const Dataset& d, const DependencyProvider& dep) {
  SummaryAccumulator words, deps, heights;
  for (const auto& q : d.questions) {
    words.add(static_cast<double>(tokenize(q.question).size()));
    const DependencyParse p = dep.parse(q.question);
    deps.add(static_cast<double>(p.dependency_count));
    heights.add(static_cast<double>(p.tree_height));
  }
  return {words.result(), deps.result(), heights.result(), d.questions.size()};
}

// ---------------------------------------------------------------------------
// Profiles and breakdowns

std::vector<QuestionProfile> profile_questions(const Dataset& d, const KeywordRules& rules,
                                               const Quartiles& quartiles,
                                               const DependencyProvider& dep,
                                               const ProfileOptions& opts) {
  std::vector<QuestionProfile> out;
  out.reserve(d.questions.size());
  for (const auto& q : d.questions) {
    QuestionProfile p;
    p.question_id = q.question_id;
    p.category = opts.prefer_stored_category && q.category ? q.category
                                                           : classify_category(q.question, rules);
    p.linguistic_type = classify_linguistic_type(q.question, rules);
    p.length = tokenize(q.question).size();
    p.length_group = assign_length_group(p.length, quartiles);
    p.lls_level = lls_level(q.question, dep);
    out.push_back(p);
  }
  return out;
}

namespace {

// Position of a profile's group in the dimension's canonical order.
std::pair<std::size_t, std::string> group_key(const QuestionProfile& p, Dimension dim) {
  switch (dim) {
    case Dimension::category:
      return p.category ? std::pair{static_cast<std::size_t>(*p.category),
                                    std::string(name(*p.category))}
                        : std::pair{kCategories.size(), std::string("unknown")};
    case Dimension::linguistic_type:
      return {static_cast<std::size_t>(p.linguistic_type), std::string(name(p.linguistic_type))};
    case Dimension::length_group:
      return {static_cast<std::size_t>(p.length_group), std::string(name(p.length_group))};
    case Dimension::lls_level:
      return {static_cast<std::size_t>(p.lls_level), std::string(name(p.lls_level))};
  }
  return {0, "?"};
}

struct GroupAccumulator {
  std::string label;
  std::size_t n = 0;
  std::size_t exact = 0;
  double f1_sum = 0.0;

  BreakdownRow row() const {
    BreakdownRow r;
    r.group = label;
    r.n = n;
    if (n > 0) {
      r.accuracy = static_cast<double>(exact) / static_cast<double>(n);
      r.mean_f1 = f1_sum / static_cast<double>(n);
    }
    return r;
  }
};

}  // namespace

BreakdownTable breakdown(std::span<const AnswerScore> scores,
                         std::span<const QuestionProfile> profiles, Dimension group_by) {
  std::unordered_map<std::int64_t, const QuestionProfile*> by_id;
  for (const auto& p : profiles) by_id[p.question_id] = &p;

  std::vector<const AnswerScore*> ordered;
  ordered.reserve(scores.size());
  for (const auto& s : scores) ordered.push_back(&s);
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* a, const auto* b) { return a->question_id < b->question_id; });

  std::map<std::size_t, GroupAccumulator> groups;
  GroupAccumulator overall{"overall"};
  for (const AnswerScore* s : ordered) {
    const auto it = by_id.find(s->question_id);
    if (it == by_id.end()) {
      throw std::invalid_argument("breakdown: no profile for question_id " +
                                  std::to_string(s->question_id));
    }
    auto [rank, label] = group_key(*it->second, group_by);
    GroupAccumulator& g = groups[rank];
    g.label = std::move(label);
    for (GroupAccumulator* acc : {&g, &overall}) {
      ++acc->n;
      acc->exact += s->exact_match ? 1 : 0;
      acc->f1_sum += s->f1;
    }
  }

  BreakdownTable table;
  table.dimension = group_by;
  for (const auto& [rank, g] : groups) table.rows.push_back(g.row());
  table.overall = overall.row();
  return table;
}

std::map<std::size_t, std::size_t> length_histogram(const Dataset& d) {
  std::map<std::size_t, std::size_t> hist;
  for (const auto& q : d.questions) ++hist[tokenize(q.question).size()];
  return hist;
}

}  // namespace viclevr
