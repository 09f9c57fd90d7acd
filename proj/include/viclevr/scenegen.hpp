#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "viclevr/dataset.hpp"
#include "viclevr/rng.hpp"
#include "viclevr/scene.hpp"

namespace viclevr {

// ---------------------------------------------------------------------------
// Query programs

enum class Attribute { shape, color, material, size };
enum class Direction { left, right, front, behind };

std::string_view name(Attribute a);
std::string_view name(Direction d);
Attribute parse_attribute(std::string_view s);
Direction parse_direction(std::string_view s);

/// Attribute value stored as the enum's integer code for the attribute.
struct Filter {
  Attribute attribute;
  int value;
  friend bool operator==(const Filter&, const Filter&) = default;
};
struct Relate {
  Direction direction;
  friend bool operator==(const Relate&, const Relate&) = default;
};
struct Unique {
  friend bool operator==(const Unique&, const Unique&) = default;
};
using Step = std::variant<Filter, Relate, Unique>;

struct CountOp {
  friend bool operator==(const CountOp&, const CountOp&) = default;
};
struct ExistOp {
  friend bool operator==(const ExistOp&, const ExistOp&) = default;
};
struct QueryOp {
  Attribute attribute;
  friend bool operator==(const QueryOp&, const QueryOp&) = default;
};
/// Equality of `attribute` between the main referent and the referent of `other`.
struct CompareOp {
  Attribute attribute;
  std::vector<Step> other;
  friend bool operator==(const CompareOp&, const CompareOp&) = default;
};
using Terminal = std::variant<CountOp, ExistOp, QueryOp, CompareOp>;

struct QueryProgram {
  std::vector<Step> steps;
  Terminal terminal = CountOp{};
  friend bool operator==(const QueryProgram&, const QueryProgram&) = default;
};

/// Execution failure: unique over a set that is not a singleton, or a missing
/// referent for relate/query/compare.
class ProgramError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Throws ProgramError when the program violates its structural invariants.
void check_well_formed(const QueryProgram& p);

nlohmann::json program_to_json(const QueryProgram& p);
QueryProgram program_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Vietnamese lexicon

struct Lexicon {
  std::map<Shape, std::string> shapes;
  std::map<Color, std::string> colors;
  std::map<Material, std::string> materials;
  std::map<Size, std::string> sizes;
  std::map<Direction, std::string> directions;
  std::string yes = "có";
  std::string no = "không";

  static Lexicon defaults();
  static Lexicon from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  /// Word for the value of `attribute` coded as `value`.
  const std::string& word(Attribute attribute, int value) const;
};

int attribute_value(const SceneObject& o, Attribute a);
std::size_t attribute_cardinality(Attribute a);

/// Runs the program: filters narrow the working set, unique fixes a referent,
/// relate replaces the set with objects strictly on the given side of it
/// (left/right on x, behind/front on y). Count answers are ASCII digits.
std::string execute_program(const QueryProgram& p, const Scene& s,
                            const Lexicon& lex = Lexicon::defaults());

// ---------------------------------------------------------------------------
// Generation

struct GenConfig {
  std::size_t n_scenes = 10;
  std::size_t questions_per_scene = 3;
  std::map<Category, double> category_mix{{Category::count, 1.0},    {Category::color, 1.0},
                                          {Category::comparison, 1.0}, {Category::size, 1.0},
                                          {Category::material, 1.0}, {Category::shape, 1.0}};
  /// sample: categories drawn at random by weight. quota: smooth weighted
  /// round-robin, which realizes the mix exactly when the total divides evenly.
  enum class MixMode { sample, quota };
  MixMode mix_mode = MixMode::sample;
  std::uint64_t seed = 0;
  std::size_t image_size = 32;
  bool patch_compatible = true;
  std::size_t patch_size = 4;
  double min_separation = 0.12;
  std::size_t min_objects = 3;
  std::size_t max_objects = 10;
  bool embed_images = false;
  SplitSpec split{};
  Lexicon lexicon = Lexicon::defaults();

  /// Throws std::invalid_argument on an invalid configuration.
  void check() const;
};

/// Object count uniform in [min_objects, max_objects]; attributes uniform over
/// their enums; positions rejection-sampled in the unit square with z = 0.
/// Throws std::runtime_error after 1000 failed placements of one object.
Scene generate_scene(SplitMix64& rng, const GenConfig& cfg, std::int64_t scene_id = 0);

/// A program whose terminal matches `category` and that executes on `scene`.
/// Retries up to 100 random instantiations, then returns nullopt.
std::optional<QueryProgram> sample_program(Category category, const Scene& scene,
                                           SplitMix64& rng);

/// Vietnamese question text for the program.
std::string realize_question(const QueryProgram& p, SplitMix64& rng,
                             const Lexicon& lex = Lexicon::defaults());

/// White background, objects painted back to front by y.
RasterImage rasterize_scene(const Scene& s, std::size_t size);

/// Binary PPM (P6) encoding with values rounded to 8 bits.
std::string encode_ppm(const RasterImage& img);

struct GeneratedQuestion {
  std::int64_t question_id = 0;
  QueryProgram program;
};

struct GeneratedDataset {
  Dataset dataset;
  std::vector<GeneratedQuestion> programs;  // sidecar, ascending question_id
  std::vector<Scene> scenes;
  std::vector<RasterImage> images;  // one per scene, same order
  std::map<Category, std::size_t> category_counts;
  std::size_t skipped = 0;  // questions dropped after failed instantiation
};

/// Scene s draws from splitmix64(seed ^ s); the split uses cfg.split with seed cfg.seed.
GeneratedDataset generate_dataset(const GenConfig& cfg);

/// JSON-lines sidecar: one {"question_id", "steps", "terminal"} object per line.
std::string programs_to_jsonl(const std::vector<GeneratedQuestion>& programs);
std::vector<GeneratedQuestion> programs_from_jsonl(const std::string& text);

/// Writes dataset.json, programs.jsonl and (unless embedded) images/*.ppm under `dir`.
void write_generated(const GeneratedDataset& g, const GenConfig& cfg,
                     const std::filesystem::path& dir);

}  // namespace viclevr
