#include "viclevr/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "viclevr/error.hpp"

namespace viclevr {

using nlohmann::json;

std::string_view name(ReportFormat f) {
  switch (f) {
    case ReportFormat::json: return "json";
    case ReportFormat::csv: return "csv";
    case ReportFormat::markdown: return "markdown";
  }
  return "?";
}

ReportFormat parse_report_format(std::string_view s) {
  if (s == "json") return ReportFormat::json;
  if (s == "csv") return ReportFormat::csv;
  if (s == "markdown" || s == "md") return ReportFormat::markdown;
  throw std::invalid_argument("unknown report format '" + std::string(s) + "'");
}

std::string format_number(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  // tiny magnitudes (gradient errors) would all print as 0.0000
  if (v != 0.0 && std::abs(v) < 1e-3) {
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
  }
  std::snprintf(buf, sizeof buf, "%.4f", v);
  std::string s = buf;
  if (s == "-0.0000") s = "0.0000";
  return s;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

namespace {

std::string cell_text(const Cell& c) {
  if (const auto* s = std::get_if<std::string>(&c)) return *s;
  if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
  return format_number(std::get<double>(c));
}

json cell_json(const Cell& c) {
  return std::visit([](const auto& v) { return json(v); }, c);
}

Cell cell_from_json(const json& j, const std::string& path) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number()) return j.get<double>();
  throw SchemaError(path, "cell must be a string or a number");
}

// Every section body as a header plus rows of text-able cells.
Table as_table(const Section& s) {
  return std::visit(
      [](const auto& body) -> Table {
        using T = std::decay_t<decltype(body)>;
        if constexpr (std::is_same_v<T, Table>) {
          return body;
        } else if constexpr (std::is_same_v<T, Histogram>) {
          Table t{{body.bin_label, "count"}, {}};
          for (const auto& [label, n] : body.bins) t.rows.push_back({label, n});
          return t;
        } else {
          Table t{{"key", "value"}, {}};
          for (const auto& [k, v] : body.items) t.rows.push_back({k, v});
          return t;
        }
      },
      s.body);
}

std::string md_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    if (c == '\n') {
      out += ' ';
      continue;
    }
    out += c;
  }
  return out;
}

std::string render_markdown(const ReportDocument& doc) {
  std::ostringstream out;
  out << "# " << doc.title << "\n";
  for (const auto& s : doc.sections) {
    out << "\n## " << s.title << "\n\n";
    const Table t = as_table(s);
    out << "|";
    for (const auto& c : t.columns) out << " " << md_escape(c) << " |";
    out << "\n|";
    for (std::size_t i = 0; i < t.columns.size(); ++i) out << " --- |";
    out << "\n";
    for (const auto& row : t.rows) {
      out << "|";
      for (const auto& c : row) out << " " << md_escape(cell_text(c)) << " |";
      out << "\n";
    }
    for (const auto& a : s.annotations) out << "\n> " << md_escape(a) << "\n";
  }
  return out.str();
}

std::string render_csv(const ReportDocument& doc) {
  std::ostringstream out;
  bool first = true;
  for (const auto& s : doc.sections) {
    if (!first) out << "\r\n";
    first = false;
    out << csv_field(s.title) << "\r\n";
    const Table t = as_table(s);
    for (std::size_t i = 0; i < t.columns.size(); ++i) out << (i ? "," : "") << csv_field(t.columns[i]);
    out << "\r\n";
    for (const auto& row : t.rows) {
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_field(cell_text(row[i]));
      out << "\r\n";
    }
    for (const auto& a : s.annotations) out << csv_field("note: " + a) << "\r\n";
  }
  return out.str();
}

}  // namespace

void ReportDocument::check() const {
  for (const auto& s : sections) {
    if (const auto* t = std::get_if<Table>(&s.body)) {
      for (const auto& row : t->rows) {
        if (row.size() != t->columns.size()) {
          throw std::invalid_argument("section '" + s.title + "': row width differs from header");
        }
      }
    }
  }
}

json ReportDocument::to_json() const {
  json secs = json::array();
  for (const auto& s : sections) {
    json j = {{"title", s.title}, {"annotations", s.annotations}};
    std::visit(
        [&](const auto& body) {
          using T = std::decay_t<decltype(body)>;
          if constexpr (std::is_same_v<T, Table>) {
            j["kind"] = "table";
            j["columns"] = body.columns;
            json rows = json::array();
            for (const auto& row : body.rows) {
              json r = json::array();
              for (const auto& c : row) r.push_back(cell_json(c));
              rows.push_back(std::move(r));
            }
            j["rows"] = std::move(rows);
          } else if constexpr (std::is_same_v<T, Histogram>) {
            j["kind"] = "histogram";
            j["bin_label"] = body.bin_label;
            json bins = json::array();
            for (const auto& [label, n] : body.bins) bins.push_back({label, n});
            j["bins"] = std::move(bins);
          } else {
            j["kind"] = "key_values";
            json items = json::array();
            for (const auto& [k, v] : body.items) items.push_back({k, cell_json(v)});
            j["items"] = std::move(items);
          }
        },
        s.body);
    secs.push_back(std::move(j));
  }
  return {{"title", title}, {"sections", std::move(secs)}};
}

ReportDocument ReportDocument::from_json(const json& j) {
  ReportDocument doc;
  try {
    doc.title = j.at("title").get<std::string>();
    const json& secs = j.at("sections");
    for (std::size_t i = 0; i < secs.size(); ++i) {
      const std::string path = "/sections/" + std::to_string(i);
      const json& e = secs[i];
      Section s;
      s.title = e.at("title").get<std::string>();
      s.annotations = e.value("annotations", std::vector<std::string>{});
      const std::string kind = e.at("kind").get<std::string>();
      if (kind == "table") {
        Table t;
        t.columns = e.at("columns").get<std::vector<std::string>>();
        for (const auto& row : e.at("rows")) {
          std::vector<Cell> cells;
          for (const auto& c : row) cells.push_back(cell_from_json(c, path + "/rows"));
          t.rows.push_back(std::move(cells));
        }
        s.body = std::move(t);
      } else if (kind == "histogram") {
        Histogram h;
        h.bin_label = e.at("bin_label").get<std::string>();
        for (const auto& b : e.at("bins")) {
          h.bins.emplace_back(b.at(0).get<std::string>(), b.at(1).get<std::int64_t>());
        }
        s.body = std::move(h);
      } else if (kind == "key_values") {
        KeyValues kv;
        for (const auto& it : e.at("items")) {
          kv.items.emplace_back(it.at(0).get<std::string>(), cell_from_json(it.at(1), path + "/items"));
        }
        s.body = std::move(kv);
      } else {
        throw SchemaError(path + "/kind", "unknown section kind '" + kind + "'");
      }
      doc.sections.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw SchemaError("", std::string("report document: ") + e.what());
  }
  doc.check();
  return doc;
}

std::string render(const ReportDocument& doc, ReportFormat format) {
  doc.check();
  switch (format) {
    case ReportFormat::json: return doc.to_json().dump(2) + "\n";
    case ReportFormat::csv: return render_csv(doc);
    case ReportFormat::markdown: return render_markdown(doc);
  }
  return "";
}

void emit_report(const ReportDocument& doc, const std::filesystem::path& path, ReportFormat format) {
  write_text_file(path, render(doc, format));
}

const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> cols = {"Accuracy", "Precision", "Recall", "F1_overall",
                                                "BLEU",     "ROUGE",     "METEOR"};
  return cols;
}

std::string reference_score_annotation() {
  return "Reference only, not reproduced here: PhoViT on the full ViCLEVR test split reports "
         "Accuracy 0.468, Precision 0.332, Recall 0.324, F1_overall 0.316, BLEU 0.514, "
         "ROUGE 0.494, METEOR 0.264.";
}

ReportDocument validation_document(const ValidationReport& r) {
  ReportDocument doc{"Validation", {}};
  KeyValues summary;
  summary.items.emplace_back("passed", std::string(r.passed() ? "yes" : "no"));
  summary.items.emplace_back("errors", static_cast<std::int64_t>(r.errors.size()));
  summary.items.emplace_back("warnings", static_cast<std::int64_t>(r.warnings.size()));
  for (const auto& [rule, n] : r.counts) {
    summary.items.emplace_back("violations " + rule, static_cast<std::int64_t>(n));
  }
  doc.sections.push_back({"Summary", summary, r.notices});
  Table findings{{"Severity", "Rule", "Subject", "Message"}, {}};
  for (const auto& f : r.errors) findings.rows.push_back({std::string("error"), f.rule_id, f.subject_id, f.message});
  for (const auto& f : r.warnings) {
    findings.rows.push_back({std::string("warning"), f.rule_id, f.subject_id, f.message});
  }
  doc.sections.push_back({"Findings", findings, {}});
  return doc;
}

ReportDocument evaluation_document(const Evaluation& e, std::span<const QuestionProfile> profiles,
                                   const std::string& label) {
  ReportDocument doc{"Evaluation", {}};
  Table metrics;
  metrics.columns.push_back("Method");
  for (const auto& c : metric_columns()) metrics.columns.push_back(c);
  const CorpusMetrics& m = e.corpus;
  metrics.rows.push_back({label, m.accuracy, m.precision_mean, m.recall_mean, m.f1_overall, m.bleu,
                          m.rouge_l_mean, m.meteor_mean});
  doc.sections.push_back(
      {"Metrics", metrics,
       {"Questions scored: " + std::to_string(m.n_questions), reference_score_annotation()}});
  if (!profiles.empty()) {
    for (Dimension dim : {Dimension::category, Dimension::linguistic_type, Dimension::length_group,
                          Dimension::lls_level}) {
      const BreakdownTable b = breakdown(e.scores, profiles, dim);
      Table t{{"Group", "N", "Accuracy", "Mean F1"}, {}};
      for (const auto& row : b.rows) {
        t.rows.push_back({row.group, static_cast<std::int64_t>(row.n), row.accuracy, row.mean_f1});
      }
      t.rows.push_back({std::string("overall"), static_cast<std::int64_t>(b.overall.n),
                        b.overall.accuracy, b.overall.mean_f1});
      doc.sections.push_back({"Breakdown by " + std::string(name(dim)), t, {}});
    }
  }
  return doc;
}

namespace {

Histogram counts_histogram(const std::string& label,
                           const std::vector<std::pair<std::string, std::int64_t>>& bins) {
  Histogram h;
  h.bin_label = label;
  for (const auto& b : bins) {
    if (b.second > 0) h.bins.push_back(b);
  }
  return h;
}

}  // namespace

ReportDocument analysis_document(const Dataset& d, const KeywordRules& rules,
                                 const DependencyProvider& dep, const ProfileOptions& opts) {
  ReportDocument doc{"Analysis", {}};

  const OverlapStats ov = overlap_stats(d);
  Table splits{{"Split", "Images", "Questions", "Unique questions", "Overlap with train"}, {}};
  auto split_row = [](const std::string& label, const SplitStats& s) {
    return std::vector<Cell>{label, static_cast<std::int64_t>(s.images),
                             static_cast<std::int64_t>(s.questions),
                             static_cast<std::int64_t>(s.unique_questions),
                             s.overlap_with_train ? Cell(static_cast<std::int64_t>(*s.overlap_with_train))
                                                  : Cell(std::string("-"))};
  };
  for (Split s : kSplits) {
    const auto it = ov.per_split.find(s);
    if (it != ov.per_split.end()) splits.rows.push_back(split_row(std::string(name(s)), it->second));
  }
  splits.rows.push_back(split_row("total", ov.total));
  std::vector<std::string> split_notes;
  if (ov.unassigned_questions > 0) {
    split_notes.push_back(std::to_string(ov.unassigned_questions) +
                          " questions belong to images without a split");
  }
  split_notes.push_back(
      "Reference only: the official ViCLEVR release has 21,000 / 6,000 / 5,000 questions in "
      "train / dev / test, with 134 dev and 96 test questions overlapping train.");
  doc.sections.push_back({"Split statistics", splits, split_notes});

  if (d.questions.empty()) return doc;

  const Quartiles q = length_quartiles(d);
  const auto profiles = profile_questions(d, rules, q, dep, opts);

  std::vector<std::pair<std::string, std::int64_t>> cats;
  for (Category c : kCategories) cats.emplace_back(std::string(name(c)), 0);
  cats.emplace_back("unknown", 0);
  std::vector<std::pair<std::string, std::int64_t>> types;
  for (auto t : {LinguisticType::what, LinguisticType::how, LinguisticType::yes_no, LinguisticType::other}) {
    types.emplace_back(std::string(name(t)), 0);
  }
  std::vector<std::pair<std::string, std::int64_t>> groups;
  for (auto g : {LengthGroup::short_, LengthGroup::medium, LengthGroup::long_, LengthGroup::very_long}) {
    groups.emplace_back(std::string(name(g)), 0);
  }
  std::vector<std::pair<std::string, std::int64_t>> levels;
  for (auto l : {LlsLevel::word, LlsLevel::phrase, LlsLevel::sentence}) {
    levels.emplace_back(std::string(name(l)), 0);
  }
  auto bump = [](auto& bins, std::string_view label) {
    for (auto& b : bins) {
      if (b.first == label) ++b.second;
    }
  };
  for (const auto& p : profiles) {
    bump(cats, category_name(p.category));
    bump(types, name(p.linguistic_type));
    bump(groups, name(p.length_group));
    bump(levels, name(p.lls_level));
  }
  doc.sections.push_back({"Question categories", counts_histogram("category", cats), {}});
  doc.sections.push_back({"Linguistic question types", counts_histogram("type", types), {}});

  Histogram lengths;
  lengths.bin_label = "length";
  for (const auto& [len, n] : length_histogram(d)) {
    lengths.bins.emplace_back(std::to_string(len), static_cast<std::int64_t>(n));
  }
  doc.sections.push_back({"Question length distribution", lengths, {}});

  KeyValues quart;
  quart.items.emplace_back("Q1", q.q1);
  quart.items.emplace_back("Q2", q.q2);
  quart.items.emplace_back("Q3", q.q3);
  doc.sections.push_back({"Length quartiles", quart,
                          {"Nearest-rank quartiles of token length, punctuation included.",
                           "Reference only: the official test split has quartiles 16 / 19 / 24."}});
  doc.sections.push_back({"Length groups", counts_histogram("group", groups), {}});

  const ComplexityStats cs = complexity_stats(d, dep);
  Table lcs{{"Field", "Min", "Mean", "Max"}, {}};
  lcs.rows.push_back({std::string("Word"), cs.words.min, cs.words.mean, cs.words.max});
  lcs.rows.push_back({std::string("Dependency"), cs.dependencies.min, cs.dependencies.mean, cs.dependencies.max});
  lcs.rows.push_back({std::string("Height"), cs.heights.min, cs.heights.mean, cs.heights.max});
  doc.sections.push_back(
      {"Linguistic complexity", lcs,
       {"Dependency and height come from the heuristic dependency provider and are not comparable "
        "to parser-based statistics.",
        "Reference only: the official release reports word counts 5 / 18.57 / 45 (min / mean / max)."}});
  doc.sections.push_back({"Linguistic levels", counts_histogram("level", levels), {}});
  return doc;
}

ReportDocument merge_documents(const std::vector<ReportDocument>& docs, const std::string& title) {
  ReportDocument merged{title, {}};
  for (const auto& d : docs) {
    for (const auto& s : d.sections) {
      Section copy = s;
      copy.title = d.title.empty() ? s.title : d.title + ": " + s.title;
      merged.sections.push_back(std::move(copy));
    }
  }
  return merged;
}

}  // namespace viclevr
