#include "viclevr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "viclevr/error.hpp"
#include "viclevr/rng.hpp"
#include "viclevr/text.hpp"

namespace viclevr {

using nlohmann::json;

std::string_view name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "?";
}

std::string_view name(Category c) {
  switch (c) {
    case Category::count: return "count";
    case Category::color: return "color";
    case Category::comparison: return "comparison";
    case Category::size: return "size";
    case Category::material: return "material";
    case Category::shape: return "shape";
  }
  return "?";
}

std::optional<Split> parse_split(std::string_view s) {
  for (auto v : kSplits) {
    if (name(v) == s) return v;
  }
  return std::nullopt;
}

std::optional<Category> parse_category(std::string_view s) {
  for (auto v : kCategories) {
    if (name(v) == s) return v;
  }
  return std::nullopt;
}

const ImageEntry* Dataset::find_image(std::int64_t image_id) const {
  for (const auto& img : images) {
    if (img.image_id == image_id) return &img;
  }
  return nullptr;
}

std::optional<Split> Dataset::split_of(const QAPair& q) const {
  const ImageEntry* img = find_image(q.image_id);
  return img ? img->split : std::nullopt;
}

std::vector<const QAPair*> Dataset::questions_in(Split s) const {
  std::unordered_map<std::int64_t, std::optional<Split>> split_by_image;
  for (const auto& img : images) split_by_image[img.image_id] = img.split;
  std::vector<const QAPair*> out;
  for (const auto& q : questions) {
    const auto it = split_by_image.find(q.image_id);
    if (it != split_by_image.end() && it->second == s) out.push_back(&q);
  }
  return out;
}

void check_integrity(const Dataset& d) {
  std::unordered_set<std::int64_t> image_ids;
  for (const auto& img : d.images) {
    if (!image_ids.insert(img.image_id).second) {
      throw IntegrityError("duplicate image_id " + std::to_string(img.image_id));
    }
  }
  std::unordered_set<std::int64_t> question_ids;
  for (const auto& q : d.questions) {
    if (!question_ids.insert(q.question_id).second) {
      throw IntegrityError("duplicate question_id " + std::to_string(q.question_id));
    }
    if (!image_ids.contains(q.image_id)) {
      throw IntegrityError("question_id " + std::to_string(q.question_id) +
                           " references missing image_id " + std::to_string(q.image_id));
    }
  }
}

// ---------------------------------------------------------------------------
// JSON schema

namespace {

const json& require(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) throw SchemaError(path, "expected object");
  const auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(path + "/" + key, "missing field");
  return *it;
}

std::int64_t as_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw SchemaError(path, "expected integer");
  return v.get<std::int64_t>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw SchemaError(path, "expected string");
  return v.get<std::string>();
}

const json& as_array(const json& v, const std::string& path) {
  if (!v.is_array()) throw SchemaError(path, "expected array");
  return v;
}

}  // namespace

Dataset dataset_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("", "expected top-level object");
  Dataset d;
  if (const auto it = j.find("info"); it != j.end()) {
    if (!it->is_object()) throw SchemaError("/info", "expected object");
    d.info = *it;
  }
  const json& images = as_array(require(j, "images", ""), "/images");
  d.images.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string path = "/images/" + std::to_string(i);
    const json& e = images[i];
    ImageEntry img;
    img.image_id = as_int(require(e, "image_id", path), path + "/image_id");
    img.file_name = as_string(require(e, "file_name", path), path + "/file_name");
    if (const auto it = e.find("split"); it != e.end() && !it->is_null()) {
      const std::string s = as_string(*it, path + "/split");
      img.split = parse_split(s);
      if (!img.split) throw SchemaError(path + "/split", "unknown split '" + s + "'");
    }
    if (const auto it = e.find("scene"); it != e.end() && !it->is_null()) {
      img.scene = scene_from_json(*it, path + "/scene");
      img.scene->scene_id = img.image_id;
    }
    if (const auto it = e.find("raster"); it != e.end() && !it->is_null()) {
      img.raster = raster_from_json(*it, path + "/raster");
    }
    d.images.push_back(std::move(img));
  }
  const json& questions = as_array(require(j, "questions", ""), "/questions");
  d.questions.reserve(questions.size());
  for (std::size_t i = 0; i < questions.size(); ++i) {
    const std::string path = "/questions/" + std::to_string(i);
    const json& e = questions[i];
    QAPair q;
    q.question_id = as_int(require(e, "question_id", path), path + "/question_id");
    q.image_id = as_int(require(e, "image_id", path), path + "/image_id");
    q.question = as_string(require(e, "question", path), path + "/question");
    q.answer = as_string(require(e, "answer", path), path + "/answer");
    if (const auto it = e.find("category"); it != e.end() && !it->is_null()) {
      const std::string c = as_string(*it, path + "/category");
      q.category = parse_category(c);
      if (!q.category) throw SchemaError(path + "/category", "unknown category '" + c + "'");
    }
    d.questions.push_back(std::move(q));
  }
  check_integrity(d);
  return d;
}

json dataset_to_json(const Dataset& d) {
  json images = json::array();
  for (const auto& img : d.images) {
    json e = {{"image_id", img.image_id}, {"file_name", img.file_name}};
    if (img.split) e["split"] = name(*img.split);
    if (img.scene) e["scene"] = scene_to_json(*img.scene);
    if (img.raster) e["raster"] = raster_to_json(*img.raster);
    images.push_back(std::move(e));
  }
  json questions = json::array();
  for (const auto& q : d.questions) {
    json e = {{"question_id", q.question_id},
              {"image_id", q.image_id},
              {"question", q.question},
              {"answer", q.answer}};
    if (q.category) e["category"] = name(*q.category);
    questions.push_back(std::move(e));
  }
  return {{"info", d.info}, {"images", std::move(images)}, {"questions", std::move(questions)}};
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return json::parse(buffer.str());
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  return dataset_from_json(read_json_file(path));
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  write_text_file(path, dataset_to_json(d).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Validation

namespace {

std::vector<std::string> string_list(const json& j, const char* key,
                                     const std::vector<std::string>& fallback) {
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  std::vector<std::string> out;
  const std::string path = std::string("/") + key;
  for (std::size_t i = 0; i < as_array(*it, path).size(); ++i) {
    out.push_back(normalize_text(as_string((*it)[i], path + "/" + std::to_string(i))));
  }
  return out;
}

bool starts_with_words(const std::string& text, const std::string& prefix) {
  if (prefix.empty() || text.size() < prefix.size()) return false;
  return text.compare(0, prefix.size(), prefix) == 0 &&
         (text.size() == prefix.size() || text[prefix.size()] == ' ');
}

bool ends_with_words(const std::string& text, const std::string& suffix) {
  if (suffix.empty() || text.size() < suffix.size()) return false;
  const std::size_t start = text.size() - suffix.size();
  return text.compare(start, suffix.size(), suffix) == 0 && (start == 0 || text[start - 1] == ' ');
}

}  // namespace

ValidationConfig ValidationConfig::from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("", "validation config must be an object");
  ValidationConfig cfg;
  cfg.yes_no_answers = string_list(j, "yes_no_answers", cfg.yes_no_answers);
  cfg.yes_no_prefixes = string_list(j, "yes_no_prefixes", cfg.yes_no_prefixes);
  cfg.yes_no_suffixes = string_list(j, "yes_no_suffixes", cfg.yes_no_suffixes);
  return cfg;
}

json ValidationConfig::to_json() const {
  return {{"yes_no_answers", yes_no_answers},
          {"yes_no_prefixes", yes_no_prefixes},
          {"yes_no_suffixes", yes_no_suffixes}};
}

json ValidationReport::to_json() const {
  auto findings = [](const std::vector<Finding>& fs) {
    json out = json::array();
    for (const auto& f : fs) {
      out.push_back({{"rule_id", f.rule_id}, {"subject_id", f.subject_id}, {"message", f.message}});
    }
    return out;
  };
  return {{"passed", passed()},
          {"errors", findings(errors)},
          {"warnings", findings(warnings)},
          {"notices", notices},
          {"counts", counts}};
}

ValidationReport validate(const Dataset& d, const ValidationConfig& cfg) {
  ValidationReport report;
  for (const char* rule : {"R1", "R2", "R6"}) report.counts[rule] = 0;

  std::unordered_map<std::int64_t, std::size_t> per_image;
  for (const auto& q : d.questions) ++per_image[q.image_id];
  for (const auto& img : d.images) {
    if (per_image[img.image_id] == 0) {
      report.errors.push_back({"R1", img.image_id, "image has no associated question"});
      ++report.counts["R1"];
    }
  }

  for (const auto& q : d.questions) {
    const std::string answer = normalize_text(q.answer);
    if (answer.empty()) {
      report.errors.push_back({"R2", q.question_id, "question has an empty answer"});
      ++report.counts["R2"];
    }
    const std::string question = normalize_text(q.question);
    const bool yes_no_answer = std::find(cfg.yes_no_answers.begin(), cfg.yes_no_answers.end(),
                                         answer) != cfg.yes_no_answers.end();
    const bool yes_no_form =
        std::any_of(cfg.yes_no_prefixes.begin(), cfg.yes_no_prefixes.end(),
                    [&](const std::string& p) { return starts_with_words(question, p); }) ||
        std::any_of(cfg.yes_no_suffixes.begin(), cfg.yes_no_suffixes.end(),
                    [&](const std::string& s) { return ends_with_words(question, s); });
    if (yes_no_answer || yes_no_form) {
      report.warnings.push_back(
          {"R6", q.question_id,
           yes_no_answer ? "yes/no answer '" + answer + "'" : "yes/no question form"});
      ++report.counts["R6"];
    }
  }

  report.notices = {
      "R3: content focus on depicted objects is not machine-checkable",
      "R4: absence of personal opinions is not machine-checkable",
      "R5: diversity of reasoning approaches is not machine-checkable",
  };
  return report;
}

// ---------------------------------------------------------------------------
// Splits

Dataset split_dataset(const Dataset& d, const SplitSpec& spec, bool reassign) {
  double sum = 0.0;
  for (double r : spec.ratio) {
    if (!(r >= 0.0) || !std::isfinite(r)) {
      throw std::invalid_argument("split ratio components must be finite and non-negative");
    }
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("split ratio must sum to 1");
  if (!reassign) {
    for (const auto& img : d.images) {
      if (img.split) {
        throw std::invalid_argument("image " + std::to_string(img.image_id) +
                                    " already has a split; pass reassign to override");
      }
    }
  }

  Dataset out = d;
  const std::size_t n = out.images.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  SplitMix64 rng(spec.seed);
  shuffle(order, rng);

  const auto cut1 = static_cast<std::size_t>(std::llround(spec.ratio[0] * static_cast<double>(n)));
  const auto cut2 = static_cast<std::size_t>(
      std::llround((spec.ratio[0] + spec.ratio[1]) * static_cast<double>(n)));
  for (std::size_t rank = 0; rank < n; ++rank) {
    const Split s = rank < std::min(cut1, n) ? Split::train
                    : rank < std::min(cut2, n) ? Split::dev
                                               : Split::test;
    out.images[order[rank]].split = s;
  }
  return out;
}

OverlapStats overlap_stats(const Dataset& d) {
  OverlapStats stats;
  std::unordered_map<std::int64_t, std::optional<Split>> split_by_image;
  for (const auto& img : d.images) {
    split_by_image[img.image_id] = img.split;
    if (img.split) ++stats.per_split[*img.split].images;
  }
  stats.total.images = d.images.size();

  std::map<Split, std::set<std::string>> unique;
  std::set<std::string> all_unique;
  std::vector<std::pair<Split, std::string>> normalized;
  for (const auto& q : d.questions) {
    const auto split = split_by_image[q.image_id];
    std::string text = normalize_text(q.question);
    all_unique.insert(text);
    ++stats.total.questions;
    if (!split) {
      ++stats.unassigned_questions;
      continue;
    }
    ++stats.per_split[*split].questions;
    unique[*split].insert(text);
    normalized.emplace_back(*split, std::move(text));
  }
  for (auto s : kSplits) stats.per_split[s].unique_questions = unique[s].size();
  stats.total.unique_questions = all_unique.size();

  const auto& train = unique[Split::train];
  stats.per_split[Split::dev].overlap_with_train = 0;
  stats.per_split[Split::test].overlap_with_train = 0;
  for (const auto& [split, text] : normalized) {
    if (split != Split::train && train.contains(text)) {
      ++*stats.per_split[split].overlap_with_train;
    }
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Predictions

PredictionSet::PredictionSet(std::vector<Prediction> entries) : entries_(std::move(entries)) {
  index_.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!index_.emplace(entries_[i].question_id, i).second) {
      throw IntegrityError("duplicate prediction for question_id " +
                           std::to_string(entries_[i].question_id));
    }
  }
}

const std::string* PredictionSet::find(std::int64_t question_id) const {
  const auto it = index_.find(question_id);
  return it == index_.end() ? nullptr : &entries_[it->second].answer;
}

PredictionSet predictions_from_json(const json& j, const Dataset& gold) {
  const json& arr = as_array(j, "");
  std::vector<Prediction> entries;
  entries.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string path = "/" + std::to_string(i);
    Prediction p;
    p.question_id = as_int(require(arr[i], "question_id", path), path + "/question_id");
    p.answer = as_string(require(arr[i], "answer", path), path + "/answer");
    entries.push_back(std::move(p));
  }
  PredictionSet set(std::move(entries));

  std::unordered_set<std::int64_t> gold_ids;
  for (const auto& q : gold.questions) gold_ids.insert(q.question_id);
  for (const auto& p : set.entries()) {
    if (!gold_ids.contains(p.question_id)) {
      throw IntegrityError("prediction for unknown question_id " + std::to_string(p.question_id));
    }
  }
  for (const auto& q : gold.questions) {
    if (!set.find(q.question_id)) set.missing.push_back(q.question_id);
  }
  std::sort(set.missing.begin(), set.missing.end());
  return set;
}

PredictionSet load_predictions(const std::filesystem::path& path, const Dataset& gold) {
  return predictions_from_json(read_json_file(path), gold);
}

void save_predictions(const std::vector<Prediction>& preds, const std::filesystem::path& path) {
  json arr = json::array();
  for (const auto& p : preds) arr.push_back({{"question_id", p.question_id}, {"answer", p.answer}});
  write_text_file(path, arr.dump(2) + "\n");
}

}  // namespace viclevr
