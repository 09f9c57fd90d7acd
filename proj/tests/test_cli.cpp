#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "viclevr/cli.hpp"
#include "viclevr/error.hpp"

using namespace viclevr;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "viclevr_test_cli";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "viclevr");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

const char* kGood = R"({"images": [{"image_id": 1, "file_name": "a.ppm", "split": "train"},
                                   {"image_id": 2, "file_name": "b.ppm", "split": "test"}],
  "questions": [{"question_id": 10, "image_id": 1, "question": "Có bao nhiêu khối cầu?", "answer": "2"},
                {"question_id": 11, "image_id": 2, "question": "Màu sắc của vật trụ là gì?", "answer": "đỏ"}]})";

// image 2 has no question
const char* kOrphan = R"({"images": [{"image_id": 1, "file_name": "a.ppm"}, {"image_id": 2, "file_name": "b.ppm"}],
  "questions": [{"question_id": 10, "image_id": 1, "question": "Có bao nhiêu khối cầu?", "answer": "2"}]})";

// Unsets the variable on scope exit so other tests see the built-in defaults.
struct EnvGuard {
  explicit EnvGuard(const std::string& v) { setenv("VICLEVR_CONFIG", v.c_str(), 1); }
  ~EnvGuard() { unsetenv("VICLEVR_CONFIG"); }
};

}  // namespace

TEST_CASE("shipped default config matches the built-in defaults") {
  const fs::path p = fs::path(VICLEVR_SOURCE_DIR) / "config" / "default_config.json";
  REQUIRE(fs::exists(p));
  CHECK(json::parse(slurp(p)) == AppConfig{}.to_json());
  CHECK(AppConfig::from_json(AppConfig{}.to_json()).to_json() == AppConfig{}.to_json());
}

TEST_CASE("AppConfig partial sections keep defaults") {
  const AppConfig c = AppConfig::from_json(json::parse(R"({"metrics": {"rouge": {"beta": 2.0}}})"));
  CHECK(c.metrics.rouge.beta == 2.0);
  CHECK(c.to_json()["generator"] == AppConfig{}.to_json()["generator"]);
  CHECK_THROWS_AS(AppConfig::from_json(json::parse(R"({"metrics": {"rouge": {"beta": -1}}})")), SchemaError);
  CHECK_THROWS_AS(AppConfig::from_json(json::parse(R"({"generator": {"n_scenes": "many"}})")), SchemaError);
}

TEST_CASE("config file falls back to the environment") {
  const fs::path p = scratch("env_config.json");
  write(p, R"({"generator": {"n_scenes": 3}})");
  unsetenv("VICLEVR_CONFIG");
  CHECK(load_app_config(std::nullopt).generator.n_scenes == AppConfig{}.generator.n_scenes);
  {
    EnvGuard env(p.string());
    CHECK(load_app_config(std::nullopt).generator.n_scenes == 3);
    const fs::path q = scratch("explicit_config.json");
    write(q, R"({"generator": {"n_scenes": 5}})");
    CHECK(load_app_config(q.string()).generator.n_scenes == 5);
    const Run r = cli({"config"});
    CHECK(json::parse(r.out)["generator"]["n_scenes"] == 3);
  }
  CHECK_THROWS(load_app_config(scratch("nope.json").string()));
}

TEST_CASE("validate exit codes") {
  const fs::path good = scratch("good.json"), orphan = scratch("orphan.json"), broken = scratch("broken.json");
  write(good, kGood);
  write(orphan, kOrphan);
  write(broken, "{\"images\": [");

  const Run ok = cli({"validate", "--data", good.string()});
  CHECK(ok.code == 0);
  const json doc = json::parse(ok.out);
  CHECK(doc.contains("sections"));

  const Run bad = cli({"validate", "--data", orphan.string()});
  CHECK(bad.code == 1);
  CHECK(bad.out.find("R1") != std::string::npos);

  const Run missing = cli({"validate", "--data", scratch("absent.json").string()});
  CHECK(missing.code == 2);
  CHECK(missing.err.find("error:") != std::string::npos);
  CHECK(cli({"validate", "--data", broken.string()}).code == 2);
}

TEST_CASE("usage errors") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"validate", "--bogus"}).code == 2);
  CHECK(cli({"validate"}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"generate", "--out", scratch("g").string(), "--mix-mode", "random"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("output format follows --format, then the extension") {
  const fs::path good = scratch("fmt.json");
  write(good, kGood);
  const fs::path csv = scratch("report.csv"), md = scratch("report.md");
  CHECK(cli({"validate", "--data", good.string(), "--out", csv.string()}).code == 0);
  CHECK(slurp(csv).find("key,value") != std::string::npos);
  CHECK(cli({"validate", "--data", good.string(), "--out", md.string()}).code == 0);
  CHECK(slurp(md).rfind("# ", 0) == 0);
  const Run forced = cli({"validate", "--data", good.string(), "--out", md.string(), "--format", "json"});
  CHECK(forced.code == 0);
  CHECK(json::parse(slurp(md)).contains("sections"));
}

TEST_CASE("evaluate scores identical predictions as perfect") {
  const fs::path gold = scratch("gold.json"), pred = scratch("pred.json");
  write(gold, kGood);
  write(pred, R"([{"question_id": 10, "answer": "2"}, {"question_id": 11, "answer": "Đỏ"}])");
  const Run r = cli({"evaluate", "--gold", gold.string(), "--pred", pred.string(), "--label", "oracle"});
  REQUIRE(r.code == 0);
  const json doc = json::parse(r.out);
  const json& row = doc["sections"][0]["rows"][0];
  CHECK(row[0] == "oracle");
  for (int i = 1; i <= 6; ++i) CHECK(row[i].get<double>() == 1.0);

  const fs::path partial = scratch("pred_partial.json");
  write(partial, R"([{"question_id": 10, "answer": "2"}])");
  const Run p = cli({"evaluate", "--gold", gold.string(), "--pred", partial.string()});
  CHECK(p.code == 0);
  CHECK(p.err.find("1 gold questions have no prediction") != std::string::npos);

  const fs::path unknown = scratch("pred_unknown.json");
  write(unknown, R"([{"question_id": 99, "answer": "2"}])");
  CHECK(cli({"evaluate", "--gold", gold.string(), "--pred", unknown.string()}).code == 2);
}

TEST_CASE("generate is byte reproducible and validates") {
  const fs::path a = scratch("gen_a"), b = scratch("gen_b");
  fs::remove_all(a);
  fs::remove_all(b);
  const std::vector<std::string> flags{"--scenes", "6", "--qps", "2", "--seed", "17"};
  auto gen = [&](const fs::path& dir) {
    std::vector<std::string> args{"generate", "--out", dir.string()};
    args.insert(args.end(), flags.begin(), flags.end());
    return cli(args);
  };
  REQUIRE(gen(a).code == 0);
  REQUIRE(gen(b).code == 0);
  CHECK(slurp(a / "dataset.json") == slurp(b / "dataset.json"));
  CHECK(slurp(a / "programs.jsonl") == slurp(b / "programs.jsonl"));
  const json d = json::parse(slurp(a / "dataset.json"));
  CHECK(d["images"].size() == 6);
  CHECK(d["questions"].size() == 12);
  for (const auto& img : d["images"]) CHECK(fs::exists(a / img["file_name"].get<std::string>()));
  CHECK(cli({"validate", "--data", (a / "dataset.json").string()}).code == 0);
  CHECK(cli({"analyze", "--data", (a / "dataset.json").string()}).code == 0);
}

TEST_CASE("report merges documents") {
  const fs::path good = scratch("rep.json"), v = scratch("rep_validate.json"), an = scratch("rep_analyze.json");
  write(good, kGood);
  REQUIRE(cli({"validate", "--data", good.string(), "--out", v.string()}).code == 0);
  REQUIRE(cli({"analyze", "--data", good.string(), "--out", an.string()}).code == 0);
  const Run r = cli({"report", v.string(), an.string(), "--title", "Combined"});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("# Combined", 0) == 0);
  const json jv = json::parse(slurp(v)), ja = json::parse(slurp(an));
  const Run j = cli({"report", v.string(), an.string(), "--format", "json"});
  REQUIRE(j.code == 0);
  CHECK(json::parse(j.out)["sections"].size() == jv["sections"].size() + ja["sections"].size());
  CHECK(cli({"report", scratch("absent.json").string()}).code == 2);
}
