#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "viclevr/dataset.hpp"
#include "viclevr/metrics.hpp"

namespace viclevr {

enum class LinguisticType { what, how, yes_no, other };
enum class LengthGroup { short_, medium, long_, very_long };
enum class LlsLevel { word, phrase, sentence };

std::string_view name(LinguisticType t);
std::string_view name(LengthGroup g);
std::string_view name(LlsLevel l);
/// "unknown" for nullopt.
std::string_view category_name(std::optional<Category> c);

/// Keyword pattern over normalized text. Parts separated by " * " must appear
/// in order with anything in between; every part matches on token boundaries.
/// A leading "^" anchors to the start, a trailing "$" to the end.
bool pattern_matches(std::string_view pattern, std::string_view normalized_text);

struct KeywordRule {
  std::string label;
  std::vector<std::string> patterns;  // stored normalized
};

/// First matching rule wins. Labels of `categories` are Category names, labels
/// of `types` LinguisticType names.
struct KeywordRules {
  std::vector<KeywordRule> categories;
  std::vector<KeywordRule> types;

  static KeywordRules defaults();
  /// Throws SchemaError on unknown labels or empty patterns.
  static KeywordRules from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// nullopt when no rule matches.
std::optional<Category> classify_category(std::string_view question, const KeywordRules& rules);
LinguisticType classify_linguistic_type(std::string_view question, const KeywordRules& rules);

struct Quartiles {
  double q1 = 0.0;
  double q2 = 0.0;
  double q3 = 0.0;
  friend bool operator==(const Quartiles&, const Quartiles&) = default;
};

/// Nearest-rank quartiles. Throws std::invalid_argument on empty input.
Quartiles nearest_rank_quartiles(std::vector<std::size_t> values);
/// Token-length quartiles of every question in `d`.
Quartiles length_quartiles(const Dataset& d);

/// short: n <= q1, medium: q1 < n <= q2, long: q2 < n <= q3, very_long: n > q3.
LengthGroup assign_length_group(std::size_t length, const Quartiles& q);

struct DependencyParse {
  std::size_t dependency_count = 0;
  std::size_t tree_height = 0;
  bool root_is_verb = false;
  bool has_subject = false;
};

class DependencyProvider {
 public:
  virtual ~DependencyProvider() = default;
  virtual DependencyParse parse(std::string_view text) const = 0;
};

/// Lexicon-driven fallback: a chain of pseudo-dependencies between adjacent
/// words, count = words - 1 and height = ceil(log2(words)) + 1. The root is the
/// first lexicon verb; it has a subject when some word precedes it.
class HeuristicDependencyProvider final : public DependencyProvider {
 public:
  HeuristicDependencyProvider();
  explicit HeuristicDependencyProvider(std::vector<std::string> verbs);
  DependencyParse parse(std::string_view text) const override;
  static std::vector<std::string> default_verbs();

 private:
  std::unordered_set<std::string> verbs_;
};

/// Word tokens of `text`: tokenize() minus pure punctuation tokens.
std::vector<std::string> word_tokens(std::string_view text);

LlsLevel lls_level(std::string_view text, const DependencyProvider& dep);

struct Summary {
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
};

struct ComplexityStats {
  Summary words;
  Summary dependencies;
  Summary heights;
  std::size_t n = 0;
};

/// Word counts use the same token count as question length.
ComplexityStats complexity_stats(const Dataset& d, const DependencyProvider& dep);

struct QuestionProfile {
  std::int64_t question_id = 0;
  std::optional<Category> category;  // nullopt is "unknown"
  LinguisticType linguistic_type = LinguisticType::other;
  std::size_t length = 0;
  LengthGroup length_group = LengthGroup::short_;
  LlsLevel lls_level = LlsLevel::word;
};

struct ProfileOptions {
  /// Use the dataset's stored category when present instead of the keyword rules.
  bool prefer_stored_category = true;
};

std::vector<QuestionProfile> profile_questions(const Dataset& d, const KeywordRules& rules,
                                               const Quartiles& quartiles,
                                               const DependencyProvider& dep,
                                               const ProfileOptions& opts = {});

enum class Dimension { category, linguistic_type, length_group, lls_level };
std::string_view name(Dimension d);

struct BreakdownRow {
  std::string group;
  std::size_t n = 0;
  double accuracy = 0.0;
  double mean_f1 = 0.0;
};

struct BreakdownTable {
  Dimension dimension = Dimension::category;
  std::vector<BreakdownRow> rows;  // canonical group order, empty groups omitted
  BreakdownRow overall;
};

/// Per-group accuracy and mean F1. Throws std::invalid_argument if a scored
/// question has no profile.
BreakdownTable breakdown(std::span<const AnswerScore> scores,
                         std::span<const QuestionProfile> profiles, Dimension group_by);

/// Question token length -> number of questions.
std::map<std::size_t, std::size_t> length_histogram(const Dataset& d);

}  // namespace viclevr
