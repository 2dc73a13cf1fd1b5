#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "spsl/image.hpp"

namespace spsl::scene {

enum class Mode { sort_of_clevr, clevr_lite };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view text);

inline constexpr std::array<std::string_view, 6> kColors = {"red",    "green",  "blue",
                                                            "yellow", "orange", "gray"};
inline constexpr std::array<std::string_view, 2> kSortShapes = {"circle", "rectangle"};
inline constexpr std::array<std::string_view, 3> kClevrShapes = {"cube", "sphere", "cylinder"};
inline constexpr std::array<std::string_view, 2> kSizes = {"small", "large"};
inline constexpr std::array<std::string_view, 2> kMaterials = {"metal", "matte"};

inline constexpr Rgb kBackground{192, 192, 192};
/// Palette entry for a color name; throws std::invalid_argument.
Rgb palette(std::string_view color);
std::size_t color_index(std::string_view color);

struct SceneObject {
  std::string id;
  std::string shape;
  std::string color;
  std::string size;      // clevr-lite only
  std::string material;  // clevr-lite only
  int x = 0, y = 0;      // center, pixels
  int radius = 5;

  /// Attribute lookup by name (shape, color, size, material); "" when unset.
  const std::string& attribute(std::string_view name) const;
  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct Scene {
  std::string scene_id;
  Mode mode = Mode::sort_of_clevr;
  std::vector<SceneObject> objects;
  int image_size = 64;

  /// Index of the object with this id; throws std::out_of_range.
  std::size_t index_of(std::string_view id) const;
  friend bool operator==(const Scene&, const Scene&) = default;
};

struct SceneConfig {
  int image_size = 64;
  int radius = 5;        // sort-of-clevr circle radius and square half-side
  int min_gap = 2;       // required slack between object extents
  int max_retries = 1000;  // placement attempts per object
  int clevr_min_objects = 4;
  int clevr_max_objects = 10;
  int clevr_small_radius = 4;
  int clevr_large_radius = 6;

  void validate() const;
};

class PlacementError : public std::runtime_error {
 public:
  PlacementError(std::uint64_t seed, const std::string& message)
      : std::runtime_error(message), seed_(seed) {}
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
};

/// Pure function of (seed, mode, config). Centers are integers with
/// max(|dx|, |dy|) >= r1 + r2 + min_gap between any two objects.
Scene generate_scene(std::uint64_t seed, Mode mode, const SceneConfig& config = {},
                     std::string scene_id = {});

/// Filled circles and axis-aligned squares on a gray background. Throws
/// std::invalid_argument for clevr-lite scenes.
RgbImage render(const Scene& scene);

/// Directional relations and distance rankings between object centers.
class RelationTable {
 public:
  explicit RelationTable(const Scene& scene);

  std::size_t size() const noexcept { return n_; }
  bool left_of(std::size_t a, std::size_t b) const { return xs_[a] < xs_[b]; }
  bool right_of(std::size_t a, std::size_t b) const { return left_of(b, a); }
  bool above(std::size_t a, std::size_t b) const { return ys_[a] < ys_[b]; }
  bool below(std::size_t a, std::size_t b) const { return above(b, a); }
  /// Squared center distance.
  std::int64_t distance2(std::size_t a, std::size_t b) const;
  /// Other objects ordered by increasing distance, ties by index.
  const std::vector<std::size_t>& neighbors(std::size_t a) const { return ranked_.at(a); }
  std::size_t closest(std::size_t a) const { return ranked_.at(a).front(); }
  std::size_t furthest(std::size_t a) const { return ranked_.at(a).back(); }
  /// True when the nearest (furthest) neighbor is tied with the runner-up.
  bool closest_tied(std::size_t a) const;
  bool furthest_tied(std::size_t a) const;

 private:
  std::size_t n_;
  std::vector<int> xs_, ys_;
  std::vector<std::vector<std::size_t>> ranked_;
};

inline RelationTable spatial_relations(const Scene& scene) { return RelationTable(scene); }

inline constexpr int kSceneSchemaVersion = 1;

nlohmann::json to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);

void write_scenes_jsonl(std::ostream& out, const std::vector<Scene>& scenes);
std::vector<Scene> read_scenes_jsonl(std::istream& in);

}  // namespace spsl::scene
