#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "viclevr/analysis.hpp"
#include "viclevr/dataset.hpp"
#include "viclevr/metrics.hpp"

namespace viclevr {

using Cell = std::variant<std::string, std::int64_t, double>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

/// Bin label -> count, rendered as a two-column table.
struct Histogram {
  std::string bin_label = "bin";
  std::vector<std::pair<std::string, std::int64_t>> bins;
};

struct KeyValues {
  std::vector<std::pair<std::string, Cell>> items;
};

struct Section {
  std::string title;
  std::variant<Table, Histogram, KeyValues> body;
  std::vector<std::string> annotations;
};

enum class ReportFormat { json, csv, markdown };

std::string_view name(ReportFormat f);
/// Throws std::invalid_argument on unknown names.
ReportFormat parse_report_format(std::string_view s);

struct ReportDocument {
  std::string title;
  std::vector<Section> sections;

  /// Throws std::invalid_argument when a table row length differs from its header.
  void check() const;
  nlohmann::json to_json() const;
  /// Inverse of to_json. Throws SchemaError.
  static ReportDocument from_json(const nlohmann::json& j);
};

/// Deterministic text: JSON with sorted keys and raw values; CSV (RFC 4180)
/// one block per section; Markdown pipe tables. Non-JSON numbers use 4 decimals.
std::string render(const ReportDocument& doc, ReportFormat format);
void emit_report(const ReportDocument& doc, const std::filesystem::path& path, ReportFormat format);

std::string format_number(double v);
std::string csv_field(const std::string& s);

/// Column order of the metric table.
const std::vector<std::string>& metric_columns();

/// Reference scores of the original model, carried as an annotation only.
std::string reference_score_annotation();

ReportDocument validation_document(const ValidationReport& r);

ReportDocument evaluation_document(const Evaluation& e, std::span<const QuestionProfile> profiles,
                                   const std::string& label = "model");

ReportDocument analysis_document(const Dataset& d, const KeywordRules& rules,
                                 const DependencyProvider& dep, const ProfileOptions& opts = {});

/// Sections of every input in order, titles prefixed by the source document title.
ReportDocument merge_documents(const std::vector<ReportDocument>& docs, const std::string& title);

}  // namespace viclevr
