#include "viclevr/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "viclevr/error.hpp"

namespace viclevr {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Scene types

namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view s, const std::array<Enum, N>& values, const char* what) {
  for (auto v : values) {
    if (name(v) == s) return v;
  }
  throw std::invalid_argument(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

}  // namespace

std::string_view name(Shape v) {
  switch (v) {
    case Shape::cube: return "cube";
    case Shape::sphere: return "sphere";
    case Shape::cylinder: return "cylinder";
  }
  return "?";
}

std::string_view name(Color v) {
  switch (v) {
    case Color::gray: return "gray";
    case Color::red: return "red";
    case Color::blue: return "blue";
    case Color::green: return "green";
    case Color::brown: return "brown";
    case Color::purple: return "purple";
    case Color::cyan: return "cyan";
    case Color::yellow: return "yellow";
  }
  return "?";
}

std::string_view name(Material v) { return v == Material::rubber ? "rubber" : "metal"; }
std::string_view name(Size v) { return v == Size::small ? "small" : "large"; }

Shape parse_shape(std::string_view s) { return parse_enum(s, kShapes, "shape"); }
Color parse_color(std::string_view s) { return parse_enum(s, kColors, "color"); }
Material parse_material(std::string_view s) { return parse_enum(s, kMaterials, "material"); }
Size parse_size(std::string_view s) { return parse_enum(s, kSizes, "size"); }

json scene_to_json(const Scene& scene) {
  json objects = json::array();
  for (const auto& o : scene.objects) {
    objects.push_back({{"shape", name(o.shape)},
                       {"color", name(o.color)},
                       {"material", name(o.material)},
                       {"size", name(o.size)},
                       {"position", o.position}});
  }
  return {{"objects", std::move(objects)}};
}

Scene scene_from_json(const json& j, const std::string& path) {
  if (!j.is_object() || !j.contains("objects") || !j["objects"].is_array()) {
    throw SchemaError(path + "/objects", "expected array");
  }
  Scene scene;
  const json& objects = j["objects"];
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const std::string p = path + "/objects/" + std::to_string(i);
    const json& e = objects[i];
    auto field = [&](const char* key) -> std::string {
      if (!e.is_object() || !e.contains(key) || !e[key].is_string()) {
        throw SchemaError(p + "/" + key, "expected string");
      }
      return e[key].get<std::string>();
    };
    auto parsed = [&](const char* key, auto parse) {
      const std::string v = field(key);
      try {
        return parse(v);
      } catch (const std::invalid_argument& ex) {
        throw SchemaError(p + "/" + key, ex.what());
      }
    };
    SceneObject o;
    o.shape = parsed("shape", parse_shape);
    o.color = parsed("color", parse_color);
    o.material = parsed("material", parse_material);
    o.size = parsed("size", parse_size);
    if (!e.contains("position") || !e["position"].is_array() || e["position"].size() != 3) {
      throw SchemaError(p + "/position", "expected [x, y, z]");
    }
    for (std::size_t k = 0; k < 3; ++k) {
      if (!e["position"][k].is_number()) throw SchemaError(p + "/position", "expected numbers");
      o.position[k] = e["position"][k].get<double>();
    }
    scene.objects.push_back(o);
  }
  return scene;
}

json raster_to_json(const RasterImage& img) {
  return {{"height", img.height}, {"width", img.width}, {"channels", 3}, {"data", img.pixels}};
}

RasterImage raster_from_json(const json& j, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path, "expected object");
  try {
    RasterImage img;
    img.height = j.at("height").get<std::size_t>();
    img.width = j.at("width").get<std::size_t>();
    img.pixels = j.at("data").get<std::vector<double>>();
    if (img.pixels.size() != img.height * img.width * RasterImage::channels) {
      throw SchemaError(path + "/data", "length does not match height*width*3");
    }
    return img;
  } catch (const json::exception& e) {
    throw SchemaError(path, e.what());
  }
}

// ---------------------------------------------------------------------------
// Programs

std::string_view name(Attribute a) {
  switch (a) {
    case Attribute::shape: return "shape";
    case Attribute::color: return "color";
    case Attribute::material: return "material";
    case Attribute::size: return "size";
  }
  return "?";
}

std::string_view name(Direction d) {
  switch (d) {
    case Direction::left: return "left";
    case Direction::right: return "right";
    case Direction::front: return "front";
    case Direction::behind: return "behind";
  }
  return "?";
}

namespace {
constexpr std::array kAttributes = {Attribute::shape, Attribute::color, Attribute::material,
                                    Attribute::size};
constexpr std::array kDirections = {Direction::left, Direction::right, Direction::front,
                                    Direction::behind};
}  // namespace

Attribute parse_attribute(std::string_view s) { return parse_enum(s, kAttributes, "attribute"); }
Direction parse_direction(std::string_view s) { return parse_enum(s, kDirections, "direction"); }

int attribute_value(const SceneObject& o, Attribute a) {
  switch (a) {
    case Attribute::shape: return static_cast<int>(o.shape);
    case Attribute::color: return static_cast<int>(o.color);
    case Attribute::material: return static_cast<int>(o.material);
    case Attribute::size: return static_cast<int>(o.size);
  }
  return 0;
}

std::size_t attribute_cardinality(Attribute a) {
  switch (a) {
    case Attribute::shape: return kShapes.size();
    case Attribute::color: return kColors.size();
    case Attribute::material: return kMaterials.size();
    case Attribute::size: return kSizes.size();
  }
  return 0;
}

namespace {

std::string value_name(Attribute a, int v) {
  switch (a) {
    case Attribute::shape: return std::string(name(kShapes.at(static_cast<std::size_t>(v))));
    case Attribute::color: return std::string(name(kColors.at(static_cast<std::size_t>(v))));
    case Attribute::material: return std::string(name(kMaterials.at(static_cast<std::size_t>(v))));
    case Attribute::size: return std::string(name(kSizes.at(static_cast<std::size_t>(v))));
  }
  return "?";
}

int parse_value(Attribute a, std::string_view s) {
  switch (a) {
    case Attribute::shape: return static_cast<int>(parse_shape(s));
    case Attribute::color: return static_cast<int>(parse_color(s));
    case Attribute::material: return static_cast<int>(parse_material(s));
    case Attribute::size: return static_cast<int>(parse_size(s));
  }
  return 0;
}

void check_steps(const std::vector<Step>& steps, bool needs_referent) {
  bool have_referent = false;
  for (const Step& step : steps) {
    if (const auto* f = std::get_if<Filter>(&step)) {
      if (f->value < 0 || static_cast<std::size_t>(f->value) >= attribute_cardinality(f->attribute)) {
        throw ProgramError("filter value out of range");
      }
      have_referent = false;
    } else if (std::holds_alternative<Relate>(step)) {
      if (!have_referent) throw ProgramError("relate requires a preceding unique step");
      have_referent = false;
    } else {
      have_referent = true;
    }
  }
  if (needs_referent && !have_referent) {
    throw ProgramError("query and compare require the steps to end with unique");
  }
}

json steps_to_json(const std::vector<Step>& steps) {
  json out = json::array();
  for (const Step& step : steps) {
    if (const auto* f = std::get_if<Filter>(&step)) {
      out.push_back({{"op", "filter"},
                     {"attribute", name(f->attribute)},
                     {"value", value_name(f->attribute, f->value)}});
    } else if (const auto* r = std::get_if<Relate>(&step)) {
      out.push_back({{"op", "relate"}, {"direction", name(r->direction)}});
    } else {
      out.push_back({{"op", "unique"}});
    }
  }
  return out;
}

std::vector<Step> steps_from_json(const json& j) {
  if (!j.is_array()) throw SchemaError("/steps", "expected array");
  std::vector<Step> steps;
  for (const auto& e : j) {
    const std::string op = e.at("op").get<std::string>();
    if (op == "filter") {
      const Attribute a = parse_attribute(e.at("attribute").get<std::string>());
      steps.push_back(Filter{a, parse_value(a, e.at("value").get<std::string>())});
    } else if (op == "relate") {
      steps.push_back(Relate{parse_direction(e.at("direction").get<std::string>())});
    } else if (op == "unique") {
      steps.push_back(Unique{});
    } else {
      throw SchemaError("/steps", "unknown op '" + op + "'");
    }
  }
  return steps;
}

}  // namespace

void check_well_formed(const QueryProgram& p) {
  const bool needs_referent =
      std::holds_alternative<QueryOp>(p.terminal) || std::holds_alternative<CompareOp>(p.terminal);
  check_steps(p.steps, needs_referent);
  if (const auto* c = std::get_if<CompareOp>(&p.terminal)) check_steps(c->other, true);
}

json program_to_json(const QueryProgram& p) {
  json terminal;
  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, CountOp>) {
          terminal = {{"op", "count"}};
        } else if constexpr (std::is_same_v<T, ExistOp>) {
          terminal = {{"op", "exist"}};
        } else if constexpr (std::is_same_v<T, QueryOp>) {
          terminal = {{"op", "query"}, {"attribute", name(t.attribute)}};
        } else {
          terminal = {{"op", "compare"}, {"attribute", name(t.attribute)},
                      {"other", steps_to_json(t.other)}};
        }
      },
      p.terminal);
  return {{"steps", steps_to_json(p.steps)}, {"terminal", terminal}};
}

QueryProgram program_from_json(const json& j) {
  try {
    QueryProgram p;
    p.steps = steps_from_json(j.at("steps"));
    const json& t = j.at("terminal");
    const std::string op = t.at("op").get<std::string>();
    if (op == "count") {
      p.terminal = CountOp{};
    } else if (op == "exist") {
      p.terminal = ExistOp{};
    } else if (op == "query") {
      p.terminal = QueryOp{parse_attribute(t.at("attribute").get<std::string>())};
    } else if (op == "compare") {
      p.terminal = CompareOp{parse_attribute(t.at("attribute").get<std::string>()),
                             steps_from_json(t.at("other"))};
    } else {
      throw SchemaError("/terminal/op", "unknown terminal '" + op + "'");
    }
    return p;
  } catch (const json::exception& e) {
    throw SchemaError("", std::string("program: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw SchemaError("", std::string("program: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Lexicon

Lexicon Lexicon::defaults() {
  Lexicon lex;
  lex.shapes = {{Shape::cube, "khối lập phương"}, {Shape::sphere, "khối cầu"},
                {Shape::cylinder, "vật trụ"}};
  lex.colors = {{Color::gray, "xám"},        {Color::red, "đỏ"},
                {Color::blue, "xanh"},       {Color::green, "xanh lá cây"},
                {Color::brown, "nâu"},       {Color::purple, "tím"},
                {Color::cyan, "lục lam"},    {Color::yellow, "vàng"}};
  lex.materials = {{Material::rubber, "cao su"}, {Material::metal, "kim loại"}};
  lex.sizes = {{Size::small, "nhỏ"}, {Size::large, "lớn"}};
  lex.directions = {{Direction::left, "bên trái"}, {Direction::right, "bên phải"},
                    {Direction::front, "phía trước"}, {Direction::behind, "phía sau"}};
  return lex;
}

namespace {

template <typename Enum, std::size_t N>
void read_words(const json& j, const char* key, const std::array<Enum, N>& values,
                std::map<Enum, std::string>& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  for (auto v : values) {
    const auto w = it->find(std::string(name(v)));
    if (w == it->end()) continue;
    if (!w->is_string() || w->get<std::string>().empty()) {
      throw SchemaError(std::string("/") + key + "/" + std::string(name(v)), "expected word");
    }
    out[v] = w->get<std::string>();
  }
}

template <typename Enum>
json write_words(const std::map<Enum, std::string>& words) {
  json out = json::object();
  for (const auto& [k, v] : words) out[std::string(name(k))] = v;
  return out;
}

}  // namespace

Lexicon Lexicon::from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("", "lexicon must be an object");
  Lexicon lex = defaults();
  read_words(j, "shapes", kShapes, lex.shapes);
  read_words(j, "colors", kColors, lex.colors);
  read_words(j, "materials", kMaterials, lex.materials);
  read_words(j, "sizes", kSizes, lex.sizes);
  read_words(j, "directions", kDirections, lex.directions);
  if (j.contains("yes")) lex.yes = j["yes"].get<std::string>();
  if (j.contains("no")) lex.no = j["no"].get<std::string>();
  return lex;
}

json Lexicon::to_json() const {
  return {{"shapes", write_words(shapes)},       {"colors", write_words(colors)},
          {"materials", write_words(materials)}, {"sizes", write_words(sizes)},
          {"directions", write_words(directions)}, {"yes", yes}, {"no", no}};
}

const std::string& Lexicon::word(Attribute attribute, int value) const {
  const auto idx = static_cast<std::size_t>(value);
  switch (attribute) {
    case Attribute::shape: return shapes.at(kShapes.at(idx));
    case Attribute::color: return colors.at(kColors.at(idx));
    case Attribute::material: return materials.at(kMaterials.at(idx));
    case Attribute::size: return sizes.at(kSizes.at(idx));
  }
  throw std::invalid_argument("unknown attribute");
}

// ---------------------------------------------------------------------------
// Execution

namespace {

bool on_side(const SceneObject& o, const SceneObject& ref, Direction d) {
  switch (d) {
    case Direction::left: return o.position[0] < ref.position[0];
    case Direction::right: return o.position[0] > ref.position[0];
    case Direction::front: return o.position[1] > ref.position[1];
    case Direction::behind: return o.position[1] < ref.position[1];
  }
  return false;
}

struct ExecState {
  std::vector<std::size_t> set;
  std::optional<std::size_t> referent;
};

ExecState run_steps(const std::vector<Step>& steps, const Scene& s) {
  ExecState st;
  st.set.resize(s.objects.size());
  std::iota(st.set.begin(), st.set.end(), std::size_t{0});
  for (const Step& step : steps) {
    if (const auto* f = std::get_if<Filter>(&step)) {
      std::erase_if(st.set, [&](std::size_t i) {
        return attribute_value(s.objects[i], f->attribute) != f->value;
      });
      st.referent.reset();
    } else if (const auto* r = std::get_if<Relate>(&step)) {
      if (!st.referent) throw ProgramError("relate without a unique referent");
      const SceneObject& ref = s.objects[*st.referent];
      st.set.clear();
      for (std::size_t i = 0; i < s.objects.size(); ++i) {
        if (i != *st.referent && on_side(s.objects[i], ref, r->direction)) st.set.push_back(i);
      }
      st.referent.reset();
    } else {
      if (st.set.empty()) throw ProgramError("empty referent");
      if (st.set.size() != 1) throw ProgramError("non-unique referent");
      st.referent = st.set.front();
    }
  }
  return st;
}

std::size_t referent_of(const std::vector<Step>& steps, const Scene& s) {
  const ExecState st = run_steps(steps, s);
  if (!st.referent) throw ProgramError("empty referent for query");
  return *st.referent;
}

}  // namespace

std::string execute_program(const QueryProgram& p, const Scene& s, const Lexicon& lex) {
  check_well_formed(p);
  return std::visit(
      [&](const auto& t) -> std::string {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, CountOp>) {
          return std::to_string(run_steps(p.steps, s).set.size());
        } else if constexpr (std::is_same_v<T, ExistOp>) {
          return run_steps(p.steps, s).set.empty() ? lex.no : lex.yes;
        } else if constexpr (std::is_same_v<T, QueryOp>) {
          const SceneObject& o = s.objects[referent_of(p.steps, s)];
          return lex.word(t.attribute, attribute_value(o, t.attribute));
        } else {
          const SceneObject& a = s.objects[referent_of(p.steps, s)];
          const SceneObject& b = s.objects[referent_of(t.other, s)];
          return attribute_value(a, t.attribute) == attribute_value(b, t.attribute) ? lex.yes
                                                                                    : lex.no;
        }
      },
      p.terminal);
}

// ---------------------------------------------------------------------------
// Scene generation

void GenConfig::check() const {
  if (min_objects == 0 || min_objects > max_objects) {
    throw std::invalid_argument("object count range is empty");
  }
  double total = 0.0;
  for (const auto& [c, w] : category_mix) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("category weight < 0");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("category weights must have a positive sum");
  if (image_size < 16) throw std::invalid_argument("image_size must be >= 16");
  if (patch_compatible && (patch_size == 0 || image_size % patch_size != 0)) {
    throw std::invalid_argument("image_size must be divisible by patch_size");
  }
  if (!(min_separation >= 0.0)) throw std::invalid_argument("min_separation must be >= 0");
}

Scene generate_scene(SplitMix64& rng, const GenConfig& cfg, std::int64_t scene_id) {
  constexpr std::size_t kPlacementAttempts = 1000;
  Scene scene;
  scene.scene_id = scene_id;
  const std::size_t count =
      cfg.min_objects + static_cast<std::size_t>(rng.uniform(cfg.max_objects - cfg.min_objects + 1));
  const double min_sep2 = cfg.min_separation * cfg.min_separation;
  for (std::size_t k = 0; k < count; ++k) {
    SceneObject o;
    o.shape = kShapes[rng.uniform(kShapes.size())];
    o.color = kColors[rng.uniform(kColors.size())];
    o.material = kMaterials[rng.uniform(kMaterials.size())];
    o.size = kSizes[rng.uniform(kSizes.size())];
    bool placed = false;
    for (std::size_t attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      const double x = rng.uniform_real();
      const double y = rng.uniform_real();
      placed = std::all_of(scene.objects.begin(), scene.objects.end(), [&](const SceneObject& other) {
        const double dx = other.position[0] - x;
        const double dy = other.position[1] - y;
        return dx * dx + dy * dy >= min_sep2;
      });
      if (placed) o.position = {x, y, 0.0};
    }
    if (!placed) {
      throw std::runtime_error("scene " + std::to_string(scene_id) + ": could not place object " +
                               std::to_string(k) + " after 1000 attempts");
    }
    scene.objects.push_back(o);
  }
  return scene;
}

// ---------------------------------------------------------------------------
// Program sampling

namespace {

std::vector<std::size_t> matching(const Scene& s, const std::vector<std::size_t>& candidates,
                                  const std::vector<Filter>& filters) {
  std::vector<std::size_t> out;
  for (auto i : candidates) {
    const bool ok = std::all_of(filters.begin(), filters.end(), [&](const Filter& f) {
      return attribute_value(s.objects[i], f.attribute) == f.value;
    });
    if (ok) out.push_back(i);
  }
  return out;
}

// Filters on `target` (skipping `excluded`) added in random order until only
// the target remains among `candidates`.
std::optional<std::vector<Filter>> distinguish(const Scene& s, std::size_t target,
                                               const std::vector<std::size_t>& candidates,
                                               std::optional<Attribute> excluded,
                                               SplitMix64& rng) {
  std::vector<Attribute> attrs;
  for (auto a : kAttributes) {
    if (a != excluded) attrs.push_back(a);
  }
  shuffle(attrs, rng);
  std::vector<Filter> filters;
  if (matching(s, candidates, filters).size() == 1) return filters;
  for (auto a : attrs) {
    filters.push_back({a, attribute_value(s.objects[target], a)});
    if (matching(s, candidates, filters).size() == 1) {
      std::sort(filters.begin(), filters.end(), [](const Filter& x, const Filter& y) {
        return static_cast<int>(x.attribute) < static_cast<int>(y.attribute);
      });
      return filters;
    }
  }
  return std::nullopt;
}

std::vector<std::size_t> all_indices(const Scene& s) {
  std::vector<std::size_t> v(s.objects.size());
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

void append_filters(std::vector<Step>& steps, const std::vector<Filter>& filters) {
  for (const auto& f : filters) steps.emplace_back(f);
}

// Steps ending in unique that single out `target`, either directly or through
// one relation hop from a uniquely described anchor.
std::optional<std::vector<Step>> describe(const Scene& s, std::size_t target,
                                          std::optional<Attribute> excluded, SplitMix64& rng) {
  const auto everyone = all_indices(s);
  const bool try_relation_first = rng.uniform(10) < 3;
  auto plain = [&]() -> std::optional<std::vector<Step>> {
    auto filters = distinguish(s, target, everyone, excluded, rng);
    if (!filters) return std::nullopt;
    std::vector<Step> steps;
    append_filters(steps, *filters);
    steps.emplace_back(Unique{});
    return steps;
  };
  auto relational = [&]() -> std::optional<std::vector<Step>> {
    const std::size_t anchor = static_cast<std::size_t>(rng.uniform(s.objects.size()));
    if (anchor == target) return std::nullopt;
    const Direction dir = kDirections[rng.uniform(kDirections.size())];
    if (!on_side(s.objects[target], s.objects[anchor], dir)) return std::nullopt;
    auto anchor_filters = distinguish(s, anchor, everyone, std::nullopt, rng);
    if (!anchor_filters) return std::nullopt;
    std::vector<std::size_t> related;
    for (auto i : everyone) {
      if (i != anchor && on_side(s.objects[i], s.objects[anchor], dir)) related.push_back(i);
    }
    auto target_filters = distinguish(s, target, related, excluded, rng);
    if (!target_filters) return std::nullopt;
    std::vector<Step> steps;
    append_filters(steps, *anchor_filters);
    steps.emplace_back(Unique{});
    steps.emplace_back(Relate{dir});
    append_filters(steps, *target_filters);
    steps.emplace_back(Unique{});
    return steps;
  };
  if (try_relation_first) {
    if (auto r = relational()) return r;
  }
  if (auto p = plain()) return p;
  return relational();
}

std::optional<QueryProgram> sample_once(Category category, const Scene& s, SplitMix64& rng) {
  if (s.objects.empty()) return std::nullopt;
  const auto pick = [&] { return static_cast<std::size_t>(rng.uniform(s.objects.size())); };
  QueryProgram p;
  switch (category) {
    case Category::count: {
      if (rng.uniform(2) == 0) {
        const SceneObject& seed_obj = s.objects[pick()];
        std::vector<Attribute> attrs(kAttributes.begin(), kAttributes.end());
        shuffle(attrs, rng);
        const std::size_t n_filters = static_cast<std::size_t>(rng.uniform(3));
        std::vector<Filter> filters;
        for (std::size_t k = 0; k < n_filters; ++k) {
          filters.push_back({attrs[k], attribute_value(seed_obj, attrs[k])});
        }
        std::sort(filters.begin(), filters.end(), [](const Filter& x, const Filter& y) {
          return static_cast<int>(x.attribute) < static_cast<int>(y.attribute);
        });
        append_filters(p.steps, filters);
      } else {
        const std::size_t anchor = pick();
        auto anchor_filters = distinguish(s, anchor, all_indices(s), std::nullopt, rng);
        if (!anchor_filters) return std::nullopt;
        append_filters(p.steps, *anchor_filters);
        p.steps.emplace_back(Unique{});
        p.steps.emplace_back(Relate{kDirections[rng.uniform(kDirections.size())]});
        if (rng.uniform(2) == 0) {
          const Attribute a = kAttributes[rng.uniform(kAttributes.size())];
          p.steps.emplace_back(Filter{a, static_cast<int>(rng.uniform(attribute_cardinality(a)))});
        }
      }
      p.terminal = CountOp{};
      return p;
    }
    case Category::comparison: {
      const Attribute a = kAttributes[rng.uniform(kAttributes.size())];
      const std::size_t first = pick();
      const std::size_t second = pick();
      if (first == second) return std::nullopt;
      auto d1 = describe(s, first, a, rng);
      auto d2 = describe(s, second, a, rng);
      if (!d1 || !d2) return std::nullopt;
      p.steps = std::move(*d1);
      p.terminal = CompareOp{a, std::move(*d2)};
      return p;
    }
    default: {
      const Attribute a = category == Category::color      ? Attribute::color
                          : category == Category::size     ? Attribute::size
                          : category == Category::material ? Attribute::material
                                                           : Attribute::shape;
      auto d = describe(s, pick(), a, rng);
      if (!d) return std::nullopt;
      p.steps = std::move(*d);
      p.terminal = QueryOp{a};
      return p;
    }
  }
}

}  // namespace

std::optional<QueryProgram> sample_program(Category category, const Scene& scene,
                                           SplitMix64& rng) {
  constexpr int kRetries = 100;
  for (int attempt = 0; attempt < kRetries; ++attempt) {
    auto p = sample_once(category, scene, rng);
    if (!p) continue;
    try {
      execute_program(*p, scene);
      return p;
    } catch (const ProgramError&) {
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Surface realization

namespace {

std::string noun_phrase(const std::vector<Filter>& filters, const Lexicon& lex) {
  std::optional<int> shape, color, material, size;
  for (const auto& f : filters) {
    switch (f.attribute) {
      case Attribute::shape: shape = f.value; break;
      case Attribute::color: color = f.value; break;
      case Attribute::material: material = f.value; break;
      case Attribute::size: size = f.value; break;
    }
  }
  std::string np = shape ? lex.word(Attribute::shape, *shape) : "vật";
  if (material) np += " " + lex.word(Attribute::material, *material);
  if (color) np += " màu " + lex.word(Attribute::color, *color);
  if (size) np += " " + lex.word(Attribute::size, *size);
  return np;
}

// Reads the step chain right to left: the final filter group, then each
// relation word followed by the description of its anchor.
std::string describe_steps(const std::vector<Step>& steps, const Lexicon& lex) {
  std::vector<std::vector<Filter>> groups(1);
  std::vector<Direction> relations;
  for (const Step& step : steps) {
    if (const auto* f = std::get_if<Filter>(&step)) {
      groups.back().push_back(*f);
    } else if (const auto* r = std::get_if<Relate>(&step)) {
      relations.push_back(r->direction);
      groups.emplace_back();
    }
  }
  std::string text = noun_phrase(groups.back(), lex);
  for (std::size_t k = relations.size(); k-- > 0;) {
    text += " " + lex.directions.at(relations[k]) + " " + noun_phrase(groups[k], lex);
  }
  return text;
}

std::string attribute_noun(Attribute a) {
  switch (a) {
    case Attribute::shape: return "hình dạng";
    case Attribute::color: return "màu sắc";
    case Attribute::material: return "chất liệu";
    case Attribute::size: return "kích thước";
  }
  return "";
}

std::string pick_template(const std::vector<std::string>& templates, const std::string& np,
                          SplitMix64& rng) {
  std::string t = templates[rng.uniform(templates.size())];
  const std::size_t at = t.find("{}");
  return t.replace(at, 2, np);
}

}  // namespace

std::string realize_question(const QueryProgram& p, SplitMix64& rng, const Lexicon& lex) {
  const std::string np = describe_steps(p.steps, lex);
  return std::visit(
      [&](const auto& t) -> std::string {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, CountOp>) {
          return pick_template({"có bao nhiêu {} ?", "có tất cả bao nhiêu {} ?",
                                "bao nhiêu {} có trong ảnh ?"},
                               np, rng);
        } else if constexpr (std::is_same_v<T, ExistOp>) {
          return pick_template({"có {} nào không ?"}, np, rng);
        } else if constexpr (std::is_same_v<T, QueryOp>) {
          switch (t.attribute) {
            case Attribute::color:
              return pick_template({"màu sắc của {} là gì ?", "{} có màu gì ?"}, np, rng);
            case Attribute::material:
              return pick_template({"chất liệu của {} là gì ?", "{} được làm bằng chất liệu gì ?"},
                                   np, rng);
            case Attribute::shape:
              return pick_template({"hình dạng của {} là gì ?", "{} có hình dạng gì ?"}, np, rng);
            case Attribute::size:
              return pick_template({"kích thước của {} là gì ?",
                                    "{} có kích thước như thế nào ?"},
                                   np, rng);
          }
          return np;
        } else {
          const std::string other = describe_steps(t.other, lex);
          const std::string noun = attribute_noun(t.attribute);
          if (rng.uniform(2) == 0) {
            return "có phải " + np + " có cùng " + noun + " với " + other + " không ?";
          }
          return "có phải " + np + " và " + other + " có cùng " + noun + " không ?";
        }
      },
      p.terminal);
}

// ---------------------------------------------------------------------------
// Rasterizer

RasterImage rasterize_scene(const Scene& s, std::size_t size) {
  static constexpr std::array<std::array<double, 3>, 8> kPalette = {{
      {0.50, 0.50, 0.50},  // gray
      {0.80, 0.10, 0.10},  // red
      {0.10, 0.20, 0.80},  // blue
      {0.10, 0.60, 0.20},  // green
      {0.50, 0.30, 0.10},  // brown
      {0.50, 0.20, 0.60},  // purple
      {0.10, 0.70, 0.70},  // cyan
      {0.90, 0.80, 0.10},  // yellow
  }};
  RasterImage img(size, size, 1.0);
  std::vector<std::size_t> order(s.objects.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return s.objects[a].position[1] < s.objects[b].position[1];
  });

  const auto n = static_cast<long>(size);
  for (std::size_t idx : order) {
    const SceneObject& o = s.objects[idx];
    const long r = static_cast<long>(o.size == Size::small ? size / 10 : size / 6);
    const long cx = std::clamp(static_cast<long>(std::floor(o.position[0] * static_cast<double>(size))), 0L, n - 1);
    const long cy = std::clamp(static_cast<long>(std::floor(o.position[1] * static_cast<double>(size))), 0L, n - 1);
    const long half_width = o.shape == Shape::cylinder ? std::max(1L, r / 2) : r;
    const long stripe_row = cy - std::max(1L, r / 2);
    const auto& rgb = kPalette[static_cast<std::size_t>(o.color)];
    for (long y = std::max(0L, cy - r); y <= std::min(n - 1, cy + r); ++y) {
      for (long x = std::max(0L, cx - half_width); x <= std::min(n - 1, cx + half_width); ++x) {
        if (o.shape == Shape::sphere && (x - cx) * (x - cx) + (y - cy) * (y - cy) > r * r) continue;
        const bool highlight = o.material == Material::metal && y == stripe_row;
        for (std::size_t c = 0; c < 3; ++c) {
          img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c) =
              highlight ? std::min(1.0, rgb[c] + 0.25) : rgb[c];
        }
      }
    }
  }
  return img;
}

std::string encode_ppm(const RasterImage& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + img.pixels.size());
  for (double v : img.pixels) {
    out.push_back(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset generation

namespace {

std::vector<Category> quota_schedule(const GenConfig& cfg, std::size_t total) {
  std::vector<std::pair<Category, double>> weights(cfg.category_mix.begin(),
                                                   cfg.category_mix.end());
  double sum = 0.0;
  for (const auto& [c, w] : weights) sum += w;
  std::vector<double> current(weights.size(), 0.0);
  std::vector<Category> schedule;
  schedule.reserve(total);
  for (std::size_t k = 0; k < total; ++k) {
    std::size_t best = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      current[i] += weights[i].second;
      if (current[i] > current[best]) best = i;
    }
    current[best] -= sum;
    schedule.push_back(weights[best].first);
  }
  return schedule;
}

Category sample_category(const GenConfig& cfg, SplitMix64& rng) {
  double sum = 0.0;
  for (const auto& [c, w] : cfg.category_mix) sum += w;
  double u = rng.uniform_real() * sum;
  Category last = cfg.category_mix.begin()->first;
  for (const auto& [c, w] : cfg.category_mix) {
    if (w <= 0.0) continue;
    last = c;
    if (u < w) return c;
    u -= w;
  }
  return last;
}

char* format_file_name(char* buf, std::size_t n, std::size_t scene) {
  std::snprintf(buf, n, "images/scene_%06zu.ppm", scene);
  return buf;
}

}  // namespace

GeneratedDataset generate_dataset(const GenConfig& cfg) {
  cfg.check();
  GeneratedDataset g;
  g.dataset.info = {{"generator", "viclevr-scenegen"},
                    {"seed", cfg.seed},
                    {"n_scenes", cfg.n_scenes},
                    {"questions_per_scene", cfg.questions_per_scene},
                    {"image_size", cfg.image_size}};
  const std::vector<Category> schedule =
      cfg.mix_mode == GenConfig::MixMode::quota
          ? quota_schedule(cfg, cfg.n_scenes * cfg.questions_per_scene)
          : std::vector<Category>{};

  std::int64_t next_question = 0;
  for (std::size_t s = 0; s < cfg.n_scenes; ++s) {
    SplitMix64 rng(cfg.seed ^ static_cast<std::uint64_t>(s));
    Scene scene = generate_scene(rng, cfg, static_cast<std::int64_t>(s));
    RasterImage raster = rasterize_scene(scene, cfg.image_size);

    std::size_t produced = 0;
    auto emit = [&](Category category, QueryProgram program) {
      QAPair q;
      q.question_id = next_question++;
      q.image_id = static_cast<std::int64_t>(s);
      q.question = realize_question(program, rng, cfg.lexicon);
      q.answer = execute_program(program, scene, cfg.lexicon);
      q.category = category;
      g.dataset.questions.push_back(q);
      g.programs.push_back({q.question_id, std::move(program)});
      ++g.category_counts[category];
      ++produced;
    };
    for (std::size_t k = 0; k < cfg.questions_per_scene; ++k) {
      const Category category = cfg.mix_mode == GenConfig::MixMode::quota
                                    ? schedule[s * cfg.questions_per_scene + k]
                                    : sample_category(cfg, rng);
      auto program = sample_program(category, scene, rng);
      if (!program) {
        ++g.skipped;
        continue;
      }
      emit(category, std::move(*program));
    }
    if (produced == 0) emit(Category::count, QueryProgram{{}, CountOp{}});

    ImageEntry img;
    img.image_id = static_cast<std::int64_t>(s);
    char buf[64];
    img.file_name = format_file_name(buf, sizeof buf, s);
    img.scene = scene;
    if (cfg.embed_images) img.raster = raster;
    g.dataset.images.push_back(std::move(img));
    g.scenes.push_back(std::move(scene));
    g.images.push_back(std::move(raster));
  }
  SplitSpec split = cfg.split;
  g.dataset = split_dataset(g.dataset, split);
  return g;
}

std::string programs_to_jsonl(const std::vector<GeneratedQuestion>& programs) {
  std::string out;
  for (const auto& gq : programs) {
    json line = program_to_json(gq.program);
    line["question_id"] = gq.question_id;
    out += line.dump() + "\n";
  }
  return out;
}

std::vector<GeneratedQuestion> programs_from_jsonl(const std::string& text) {
  std::vector<GeneratedQuestion> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("programs line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.contains("question_id") || !j["question_id"].is_number_integer()) {
      throw SchemaError("/" + std::to_string(line_no) + "/question_id", "expected integer");
    }
    out.push_back({j["question_id"].get<std::int64_t>(), program_from_json(j)});
  }
  return out;
}

void write_generated(const GeneratedDataset& g, const GenConfig& cfg,
                     const std::filesystem::path& dir) {
  save_dataset(g.dataset, dir / "dataset.json");
  write_text_file(dir / "programs.jsonl", programs_to_jsonl(g.programs));
  if (!cfg.embed_images) {
    for (std::size_t s = 0; s < g.images.size(); ++s) {
      write_text_file(dir / g.dataset.images[s].file_name, encode_ppm(g.images[s]));
    }
  }
}

}  // namespace viclevr
