#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace viclevr {

enum class Shape { cube, sphere, cylinder };
enum class Color { gray, red, blue, green, brown, purple, cyan, yellow };
enum class Material { rubber, metal };
enum class Size { small, large };

inline constexpr std::array kShapes = {Shape::cube, Shape::sphere, Shape::cylinder};
inline constexpr std::array kColors = {Color::gray,   Color::red,    Color::blue, Color::green,
                                       Color::brown,  Color::purple, Color::cyan, Color::yellow};
inline constexpr std::array kMaterials = {Material::rubber, Material::metal};
inline constexpr std::array kSizes = {Size::small, Size::large};

std::string_view name(Shape v);
std::string_view name(Color v);
std::string_view name(Material v);
std::string_view name(Size v);

/// Inverse of `name`; throws std::invalid_argument on unknown strings.
Shape parse_shape(std::string_view s);
Color parse_color(std::string_view s);
Material parse_material(std::string_view s);
Size parse_size(std::string_view s);

struct SceneObject {
  Shape shape = Shape::cube;
  Color color = Color::gray;
  Material material = Material::rubber;
  Size size = Size::small;
  std::array<double, 3> position{0.0, 0.0, 0.0};
  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct Scene {
  std::vector<SceneObject> objects;
  std::int64_t scene_id = 0;
  friend bool operator==(const Scene&, const Scene&) = default;
};

/// H x W x 3 image, row-major with interleaved channels, values in [0, 1].
struct RasterImage {
  std::size_t height = 0;
  std::size_t width = 0;
  static constexpr std::size_t channels = 3;
  std::vector<double> pixels;

  RasterImage() = default;
  RasterImage(std::size_t h, std::size_t w, double fill = 1.0)
      : height(h), width(w), pixels(h * w * channels, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t c) {
    return pixels[(y * width + x) * channels + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * channels + c];
  }
  friend bool operator==(const RasterImage&, const RasterImage&) = default;
};

/// SceneSpec JSON: {"objects": [{"shape","color","material","size","position":[x,y,z]}]}.
/// Errors carry the JSON pointer relative to `path`.
nlohmann::json scene_to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j, const std::string& path = "");

nlohmann::json raster_to_json(const RasterImage& img);
RasterImage raster_from_json(const nlohmann::json& j, const std::string& path = "");

}  // namespace viclevr
