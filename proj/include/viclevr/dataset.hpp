#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "viclevr/scene.hpp"

namespace viclevr {

enum class Split { train, dev, test };
enum class Category { count, color, comparison, size, material, shape };

inline constexpr std::array kSplits = {Split::train, Split::dev, Split::test};
inline constexpr std::array kCategories = {Category::count, Category::color,
                                           Category::comparison, Category::size,
                                           Category::material, Category::shape};

std::string_view name(Split s);
std::string_view name(Category c);
std::optional<Split> parse_split(std::string_view s);
std::optional<Category> parse_category(std::string_view s);

struct ImageEntry {
  std::int64_t image_id = 0;
  std::string file_name;
  std::optional<Split> split;  // absent until split_dataset assigns one
  std::optional<Scene> scene;
  std::optional<RasterImage> raster;  // embedded pixels written by the generator
  friend bool operator==(const ImageEntry&, const ImageEntry&) = default;
};

struct QAPair {
  std::int64_t question_id = 0;
  std::int64_t image_id = 0;
  std::string question;
  std::string answer;
  std::optional<Category> category;
  friend bool operator==(const QAPair&, const QAPair&) = default;
};

struct Dataset {
  std::vector<ImageEntry> images;
  std::vector<QAPair> questions;
  nlohmann::json info = nlohmann::json::object();

  const ImageEntry* find_image(std::int64_t image_id) const;
  /// Split of the question's image, if assigned.
  std::optional<Split> split_of(const QAPair& q) const;
  /// Questions whose image belongs to `s`.
  std::vector<const QAPair*> questions_in(Split s) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Throws IntegrityError on duplicate ids or a question pointing at a missing image.
void check_integrity(const Dataset& d);

Dataset dataset_from_json(const nlohmann::json& j);
nlohmann::json dataset_to_json(const Dataset& d);

/// Parse + schema + integrity. Throws ParseError, SchemaError or IntegrityError.
Dataset load_dataset(const std::filesystem::path& path);
/// Deterministic serialization (sorted keys, two-space indent, trailing newline).
void save_dataset(const Dataset& d, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Annotation-protocol validation

struct ValidationConfig {
  std::vector<std::string> yes_no_answers{"có", "không"};
  std::vector<std::string> yes_no_prefixes{"có phải"};
  std::vector<std::string> yes_no_suffixes{"không ?", "phải không ?", "đúng không ?"};

  static ValidationConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct Finding {
  std::string rule_id;
  std::int64_t subject_id = 0;
  std::string message;
  friend bool operator==(const Finding&, const Finding&) = default;
};

struct ValidationReport {
  std::vector<Finding> errors;
  std::vector<Finding> warnings;
  std::vector<std::string> notices;
  std::map<std::string, std::size_t> counts;  // rule_id -> violations

  bool passed() const { return errors.empty(); }
  nlohmann::json to_json() const;
  friend bool operator==(const ValidationReport&, const ValidationReport&) = default;
};

/// Rule 1 and 2 violations are errors, rule 6 (yes/no questions) a warning,
/// rules 3-5 are reported as notices because they need human judgement.
ValidationReport validate(const Dataset& d, const ValidationConfig& cfg = {});

// ---------------------------------------------------------------------------
// Splits

struct SplitSpec {
  std::array<double, 3> ratio{0.7, 0.2, 0.1};
  std::uint64_t seed = 0;
};

/// Shuffles images with splitmix64 (Fisher-Yates) and cuts at round(r1·n) and
/// round((r1+r2)·n). Throws std::invalid_argument when the ratio is invalid or
/// some image already has a split and `reassign` is false.
Dataset split_dataset(const Dataset& d, const SplitSpec& spec, bool reassign = false);

struct SplitStats {
  std::size_t images = 0;
  std::size_t questions = 0;
  std::size_t unique_questions = 0;
  std::optional<std::size_t> overlap_with_train;  // absent for train and total
};

struct OverlapStats {
  std::map<Split, SplitStats> per_split;
  SplitStats total;
  std::size_t unassigned_questions = 0;
};

/// Question counts, distinct normalized questions, and the number of dev/test
/// questions whose normalized text also occurs in train.
OverlapStats overlap_stats(const Dataset& d);

// ---------------------------------------------------------------------------
// Predictions

struct Prediction {
  std::int64_t question_id = 0;
  std::string answer;
};

class PredictionSet {
 public:
  PredictionSet() = default;
  /// Throws IntegrityError on a duplicate question id.
  explicit PredictionSet(std::vector<Prediction> entries);

  const std::vector<Prediction>& entries() const { return entries_; }
  const std::string* find(std::int64_t question_id) const;

  /// Gold ids without a prediction, ascending. Filled by the loaders.
  std::vector<std::int64_t> missing;

 private:
  std::vector<Prediction> entries_;
  std::unordered_map<std::int64_t, std::size_t> index_;
};

/// Throws SchemaError, or IntegrityError for duplicate / unknown question ids.
PredictionSet predictions_from_json(const nlohmann::json& j, const Dataset& gold);
PredictionSet load_predictions(const std::filesystem::path& path, const Dataset& gold);
void save_predictions(const std::vector<Prediction>& preds, const std::filesystem::path& path);

/// Reads and parses a JSON file, mapping failures to ParseError.
nlohmann::json read_json_file(const std::filesystem::path& path);
/// Writes `text` to `path`, throwing Error when the file cannot be written.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace viclevr
