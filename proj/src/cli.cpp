#include "viclevr/cli.hpp"

#include <cstdlib>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#include "viclevr/error.hpp"
#include "viclevr/report.hpp"

namespace viclevr {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

GenConfig gen_config_from_json(const json& j, GenConfig g) {
  if (!j.is_object()) throw SchemaError("/generator", "expected object");
  try {
    g.n_scenes = j.value("n_scenes", g.n_scenes);
    g.questions_per_scene = j.value("questions_per_scene", g.questions_per_scene);
    g.seed = j.value("seed", g.seed);
    g.image_size = j.value("image_size", g.image_size);
    g.patch_compatible = j.value("patch_compatible", g.patch_compatible);
    g.patch_size = j.value("patch_size", g.patch_size);
    g.min_separation = j.value("min_separation", g.min_separation);
    g.min_objects = j.value("min_objects", g.min_objects);
    g.max_objects = j.value("max_objects", g.max_objects);
    g.embed_images = j.value("embed_images", g.embed_images);
    if (j.contains("mix_mode")) {
      const std::string mode = j["mix_mode"].get<std::string>();
      if (mode == "sample") {
        g.mix_mode = GenConfig::MixMode::sample;
      } else if (mode == "quota") {
        g.mix_mode = GenConfig::MixMode::quota;
      } else {
        throw SchemaError("/generator/mix_mode", "expected \"sample\" or \"quota\"");
      }
    }
    if (j.contains("category_mix")) {
      g.category_mix.clear();
      for (const auto& [key, w] : j["category_mix"].items()) {
        const auto c = parse_category(key);
        if (!c) throw SchemaError("/generator/category_mix/" + key, "unknown category");
        g.category_mix[*c] = w.get<double>();
      }
    }
    if (j.contains("split_ratio")) g.split.ratio = j["split_ratio"].get<std::array<double, 3>>();
    g.split.seed = j.value("split_seed", g.seed);
  } catch (const json::exception& e) {
    throw SchemaError("/generator", e.what());
  }
  return g;
}

json gen_config_to_json(const GenConfig& g) {
  json mix = json::object();
  for (const auto& [c, w] : g.category_mix) mix[std::string(name(c))] = w;
  return {{"n_scenes", g.n_scenes},
          {"questions_per_scene", g.questions_per_scene},
          {"seed", g.seed},
          {"image_size", g.image_size},
          {"patch_compatible", g.patch_compatible},
          {"patch_size", g.patch_size},
          {"min_separation", g.min_separation},
          {"min_objects", g.min_objects},
          {"max_objects", g.max_objects},
          {"embed_images", g.embed_images},
          {"mix_mode", g.mix_mode == GenConfig::MixMode::quota ? "quota" : "sample"},
          {"category_mix", mix},
          {"split_ratio", g.split.ratio},
          {"split_seed", g.split.seed}};
}

AppConfig AppConfig::from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("", "config must be an object");
  AppConfig c;
  if (j.contains("metrics")) c.metrics = MetricsConfig::from_json(j["metrics"]);
  if (j.contains("rules")) c.rules = KeywordRules::from_json(j["rules"]);
  if (j.contains("validation")) c.validation = ValidationConfig::from_json(j["validation"]);
  if (j.contains("generator")) c.generator = gen_config_from_json(j["generator"]);
  if (j.contains("lexicon")) c.generator.lexicon = Lexicon::from_json(j["lexicon"]);
  if (j.contains("model")) c.model = phovit::PhoVitConfig::from_json(j["model"]);
  return c;
}

json AppConfig::to_json() const {
  return {{"metrics", metrics.to_json()},
          {"rules", rules.to_json()},
          {"validation", validation.to_json()},
          {"generator", gen_config_to_json(generator)},
          {"lexicon", generator.lexicon.to_json()},
          {"model", model.to_json()}};
}

AppConfig load_app_config(const std::optional<std::string>& path) {
  std::optional<std::string> source = path;
  if (!source) {
    if (const char* env = std::getenv("VICLEVR_CONFIG"); env && *env) source = env;
  }
  if (!source) return AppConfig{};
  return AppConfig::from_json(read_json_file(*source));
}

// ---------------------------------------------------------------------------
// Commands

namespace {

struct Common {
  std::optional<std::string> config;
  std::string out;
  std::string format;
};

ReportFormat resolve_format(const Common& c, ReportFormat fallback) {
  if (!c.format.empty()) return parse_report_format(c.format);
  const std::string ext = std::filesystem::path(c.out).extension().string();
  if (ext == ".md") return ReportFormat::markdown;
  if (ext == ".csv") return ReportFormat::csv;
  if (ext == ".json") return ReportFormat::json;
  return fallback;
}

void deliver(const ReportDocument& doc, const Common& c, ReportFormat fallback, std::ostream& out) {
  const ReportFormat f = resolve_format(c, fallback);
  if (c.out.empty()) {
    out << render(doc, f);
  } else {
    emit_report(doc, c.out, f);
  }
}

int cmd_validate(const Common& c, const std::string& data, std::ostream& out, std::ostream& err) {
  const AppConfig cfg = load_app_config(c.config);
  const Dataset d = load_dataset(data);
  const ValidationReport r = validate(d, cfg.validation);
  deliver(validation_document(r), c, ReportFormat::json, out);
  err << "validate: " << r.errors.size() << " errors, " << r.warnings.size() << " warnings\n";
  return r.passed() ? exit_code::ok : exit_code::failed;
}

int cmd_analyze(const Common& c, const std::string& data, bool rules_only, std::ostream& out) {
  const AppConfig cfg = load_app_config(c.config);
  const Dataset d = load_dataset(data);
  const HeuristicDependencyProvider dep;
  ProfileOptions opts;
  opts.prefer_stored_category = !rules_only;
  deliver(analysis_document(d, cfg.rules, dep, opts), c, ReportFormat::json, out);
  return exit_code::ok;
}

int cmd_evaluate(const Common& c, const std::string& gold_path, const std::string& pred_path,
                 const std::string& label, std::ostream& out, std::ostream& err) {
  const AppConfig cfg = load_app_config(c.config);
  const Dataset gold = load_dataset(gold_path);
  const PredictionSet preds = load_predictions(pred_path, gold);
  if (gold.questions.empty()) throw SchemaError("/questions", "gold dataset has no questions");
  const Evaluation e = evaluate_all(preds, gold, cfg.metrics);
  const HeuristicDependencyProvider dep;
  const auto profiles = profile_questions(gold, cfg.rules, length_quartiles(gold), dep);
  deliver(evaluation_document(e, profiles, label), c, ReportFormat::json, out);
  if (!preds.missing.empty()) {
    err << "evaluate: " << preds.missing.size() << " gold questions have no prediction\n";
  }
  return exit_code::ok;
}

struct GenerateFlags {
  std::optional<std::size_t> scenes, qps, image_size;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mix_mode;
  bool embed_images = false;
};

int cmd_generate(const Common& c, const GenerateFlags& f, std::ostream& err) {
  AppConfig cfg = load_app_config(c.config);
  GenConfig& g = cfg.generator;
  if (f.scenes) g.n_scenes = *f.scenes;
  if (f.qps) g.questions_per_scene = *f.qps;
  if (f.image_size) g.image_size = *f.image_size;
  if (f.seed) g.seed = g.split.seed = *f.seed;
  if (f.embed_images) g.embed_images = true;
  if (f.mix_mode) g.mix_mode = *f.mix_mode == "quota" ? GenConfig::MixMode::quota : GenConfig::MixMode::sample;
  try {
    g.check();
  } catch (const std::invalid_argument& e) {
    throw SchemaError("/generator", e.what());
  }
  const GeneratedDataset gen = generate_dataset(g);
  write_generated(gen, g, c.out);
  err << "generate: " << gen.dataset.images.size() << " scenes, " << gen.dataset.questions.size()
      << " questions, " << gen.skipped << " skipped\n";
  return exit_code::ok;
}

int cmd_model_check(const Common& c, std::optional<std::uint64_t> seed_flag,
                    const std::optional<std::string>& embeddings, const std::string& grad_json,
                    std::ostream& out, std::ostream& err) {
  const AppConfig cfg = load_app_config(c.config);
  const std::uint64_t seed = seed_flag.value_or(cfg.model.seed);
  std::optional<phovit::EmbeddingTable> table;
  if (embeddings) table = phovit::EmbeddingTable::load_word2vec(*embeddings, cfg.model.d);
  const phovit::EmbeddingTable* tp = table ? &*table : nullptr;

  ReportDocument doc{"Model check", {}};
  bool all_ok = true;

  Table shapes{{"Check", "Result", "Detail"}, {}};
  for (const auto& r : phovit::shape_suite(cfg.model, seed)) {
    shapes.rows.push_back({r.name, std::string(r.passed ? "pass" : "FAIL"), r.detail});
    all_ok = all_ok && r.passed;
  }
  doc.sections.push_back({"Shape and invariant suite", shapes, {}});

  phovit::ColorProbe probe = phovit::color_probe(cfg.model, seed, tp);
  const phovit::GradCheckReport gc = phovit::grad_check_model(probe.model, probe.batch.front());
  Table grads{{"Parameter group", "Max relative error"}, {}};
  for (const auto& [group, e] : gc.group_error) grads.rows.push_back({group, e});
  std::vector<std::string> notes = gc.notices;
  notes.push_back("Tolerance " + format_number(gc.tol) + ", central differences with eps 1e-5, " +
                  std::to_string(gc.checked_scalars) + " scalars checked.");
  doc.sections.push_back({"Gradient check", grads, notes});
  all_ok = all_ok && gc.passed();
  if (!grad_json.empty()) write_text_file(grad_json, gc.to_json().dump(2) + "\n");

  const phovit::ProbeResult run1 = phovit::run_training_probe(cfg.model, seed, 300, 0.05, tp);
  const phovit::ProbeResult run2 = phovit::run_training_probe(cfg.model, seed, 300, 0.05, tp);
  const bool reproducible = run1.losses == run2.losses;
  const bool halved = run1.ratio() <= 0.5;
  KeyValues probe_kv;
  probe_kv.items.emplace_back("steps", std::int64_t{300});
  probe_kv.items.emplace_back("learning rate", 0.05);
  probe_kv.items.emplace_back("initial loss", run1.losses.front());
  probe_kv.items.emplace_back("final loss", run1.losses.back());
  probe_kv.items.emplace_back("final / initial", run1.ratio());
  probe_kv.items.emplace_back("halved", std::string(halved ? "yes" : "no"));
  probe_kv.items.emplace_back("reproducible", std::string(reproducible ? "yes" : "no"));
  doc.sections.push_back({"Training probe", probe_kv, {}});
  all_ok = all_ok && halved && reproducible;

  deliver(doc, c, ReportFormat::json, out);
  err << "model-check: " << (all_ok ? "all checks passed" : "some checks FAILED") << "\n";
  return all_ok ? exit_code::ok : exit_code::failed;
}

int cmd_report(const Common& c, const std::vector<std::string>& inputs, const std::string& title,
               std::ostream& out) {
  std::vector<ReportDocument> docs;
  for (const auto& path : inputs) docs.push_back(ReportDocument::from_json(read_json_file(path)));
  deliver(merge_documents(docs, title), c, ReportFormat::markdown, out);
  return exit_code::ok;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Validation, analysis, evaluation and generation for Vietnamese visual QA data"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--config", common.config, "JSON config (falls back to $VICLEVR_CONFIG)");

  auto add_output = [&](CLI::App* sub) {
    sub->add_option("--out", common.out, "Output path (stdout when omitted)");
    sub->add_option("--format", common.format, "json, csv or markdown")
        ->check(CLI::IsMember({"json", "csv", "markdown", "md"}));
  };

  std::string data, gold, pred, label = "model", title = "Report";
  bool rules_only = false;
  GenerateFlags gen;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> embeddings;
  std::string grad_json;
  std::vector<std::string> inputs;

  CLI::App* validate_cmd = app.add_subcommand("validate", "Check a dataset against the annotation rules");
  validate_cmd->add_option("--data", data, "Dataset JSON")->required();
  add_output(validate_cmd);

  CLI::App* analyze_cmd = app.add_subcommand("analyze", "Split, category, length and complexity statistics");
  analyze_cmd->add_option("--data", data, "Dataset JSON")->required();
  analyze_cmd->add_flag("--rules-only", rules_only, "Ignore stored categories and use the keyword rules");
  add_output(analyze_cmd);

  CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "Score predictions against gold answers");
  evaluate_cmd->add_option("--gold", gold, "Gold dataset JSON")->required();
  evaluate_cmd->add_option("--pred", pred, "Predictions JSON")->required();
  evaluate_cmd->add_option("--label", label, "Method name in the metric table");
  add_output(evaluate_cmd);

  CLI::App* generate_cmd = app.add_subcommand("generate", "Generate a synthetic dataset");
  generate_cmd->add_option("--out", common.out, "Output directory")->required();
  generate_cmd->add_option("--scenes", gen.scenes, "Number of scenes");
  generate_cmd->add_option("--qps", gen.qps, "Questions per scene");
  generate_cmd->add_option("--seed", gen.seed, "Generator and split seed");
  generate_cmd->add_option("--image-size", gen.image_size, "Raster width and height");
  generate_cmd->add_option("--mix-mode", gen.mix_mode, "sample or quota")
      ->check(CLI::IsMember({"sample", "quota"}));
  generate_cmd->add_flag("--embed-images", gen.embed_images, "Store pixels inside dataset.json");

  CLI::App* model_cmd = app.add_subcommand("model-check", "Shape suite, gradient check and training probe");
  model_cmd->add_option("--seed", seed, "Model seed");
  model_cmd->add_option("--embeddings", embeddings, "word2vec text embeddings of width d");
  model_cmd->add_option("--grad-json", grad_json, "Also write {group: max_rel_error} here");
  add_output(model_cmd);

  CLI::App* config_cmd = app.add_subcommand("config", "Print the resolved configuration");

  CLI::App* report_cmd = app.add_subcommand("report", "Merge JSON reports into one document");
  report_cmd->add_option("inputs", inputs, "JSON reports written by other commands")->required();
  report_cmd->add_option("--title", title, "Document title");
  add_output(report_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_code::ok : exit_code::io;
  }

  try {
    if (*validate_cmd) return cmd_validate(common, data, out, err);
    if (*analyze_cmd) return cmd_analyze(common, data, rules_only, out);
    if (*evaluate_cmd) return cmd_evaluate(common, gold, pred, label, out, err);
    if (*generate_cmd) return cmd_generate(common, gen, err);
    if (*model_cmd) return cmd_model_check(common, seed, embeddings, grad_json, out, err);
    if (*report_cmd) return cmd_report(common, inputs, title, out);
    if (*config_cmd) {
      out << load_app_config(common.config).to_json().dump(2) << "\n";
      return exit_code::ok;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::io;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::io;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::io;
  }
  return exit_code::io;
}

}  // namespace viclevr
