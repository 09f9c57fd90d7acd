#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include <json.hpp>

#include "viclevr/analysis.hpp"
#include "viclevr/dataset.hpp"
#include "viclevr/metrics.hpp"
#include "viclevr/phovit.hpp"
#include "viclevr/scenegen.hpp"

namespace viclevr {

/// Every configurable section; missing sections keep their defaults.
struct AppConfig {
  MetricsConfig metrics;
  KeywordRules rules = KeywordRules::defaults();
  ValidationConfig validation;
  GenConfig generator;
  phovit::PhoVitConfig model;

  /// Throws SchemaError on malformed sections.
  static AppConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

GenConfig gen_config_from_json(const nlohmann::json& j, GenConfig base = {});
nlohmann::json gen_config_to_json(const GenConfig& g);

/// `path` if given, else $VICLEVR_CONFIG if set, else the built-in defaults.
AppConfig load_app_config(const std::optional<std::string>& path);

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failed = 1;  // validation errors or failing model checks
inline constexpr int io = 2;      // usage, I/O, parse and schema errors
}  // namespace exit_code

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace viclevr
