#include "spsl/scene.hpp"

#include <algorithm>
#include <cstdlib>
#include <istream>
#include <ostream>

#include "spsl/rng.hpp"

namespace spsl::scene {

using nlohmann::json;

std::string_view to_string(Mode mode) {
  return mode == Mode::sort_of_clevr ? "sort-of-clevr" : "clevr-lite";
}

Mode parse_mode(std::string_view text) {
  if (text == "sort-of-clevr") return Mode::sort_of_clevr;
  if (text == "clevr-lite") return Mode::clevr_lite;
  throw std::invalid_argument("unknown scene mode '" + std::string(text) + "'");
}

std::size_t color_index(std::string_view color) {
  auto it = std::find(kColors.begin(), kColors.end(), color);
  if (it == kColors.end()) throw std::invalid_argument("unknown color '" + std::string(color) + "'");
  return static_cast<std::size_t>(it - kColors.begin());
}

Rgb palette(std::string_view color) {
  static constexpr std::array<Rgb, 6> rgb = {
      Rgb{220, 30, 30},  Rgb{30, 180, 30},  Rgb{30, 60, 220},
      Rgb{230, 210, 40}, Rgb{240, 130, 20}, Rgb{100, 100, 100}};
  return rgb[color_index(color)];
}

const std::string& SceneObject::attribute(std::string_view name) const {
  if (name == "shape") return shape;
  if (name == "color") return color;
  if (name == "size") return size;
  if (name == "material") return material;
  throw std::invalid_argument("unknown attribute '" + std::string(name) + "'");
}

std::size_t Scene::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < objects.size(); ++i)
    if (objects[i].id == id) return i;
  throw std::out_of_range("no object '" + std::string(id) + "' in scene " + scene_id);
}

void SceneConfig::validate() const {
  if (image_size < 8) throw std::invalid_argument("image_size must be >= 8");
  if (radius < 1 || clevr_small_radius < 1 || clevr_large_radius < 1)
    throw std::invalid_argument("radii must be >= 1");
  if (min_gap < 0) throw std::invalid_argument("min_gap must be >= 0");
  if (max_retries < 1) throw std::invalid_argument("max_retries must be >= 1");
  if (clevr_min_objects < 1 || clevr_max_objects < clevr_min_objects)
    throw std::invalid_argument("bad clevr-lite object count range");
  int biggest = std::max({radius, clevr_small_radius, clevr_large_radius});
  if (2 * biggest + 1 > image_size) throw std::invalid_argument("objects do not fit the image");
}

namespace {

std::string pick(Rng& rng, auto const& options) {
  return std::string(options[uniform_index(rng, options.size())]);
}

void place(Rng& rng, std::uint64_t seed, const SceneConfig& config, std::vector<SceneObject>& placed,
           SceneObject obj) {
  const int lo = obj.radius, hi = config.image_size - 1 - obj.radius;
  for (int attempt = 0; attempt < config.max_retries; ++attempt) {
    int x = static_cast<int>(uniform_int(rng, lo, hi));
    int y = static_cast<int>(uniform_int(rng, lo, hi));
    bool ok = std::all_of(placed.begin(), placed.end(), [&](const SceneObject& o) {
      return std::max(std::abs(o.x - x), std::abs(o.y - y)) >= o.radius + obj.radius + config.min_gap;
    });
    if (ok) {
      obj.x = x;
      obj.y = y;
      placed.push_back(std::move(obj));
      return;
    }
  }
  throw PlacementError(seed, "could not place object " + obj.id + " for seed " + std::to_string(seed) +
                                 " after " + std::to_string(config.max_retries) + " attempts");
}

}  // namespace

Scene generate_scene(std::uint64_t seed, Mode mode, const SceneConfig& config, std::string scene_id) {
  config.validate();
  Rng rng(seed);
  Scene scene;
  scene.scene_id = std::move(scene_id);
  scene.mode = mode;
  scene.image_size = config.image_size;

  if (mode == Mode::sort_of_clevr) {
    for (std::size_t i = 0; i < kColors.size(); ++i) {
      SceneObject o;
      o.id = "o" + std::to_string(i);
      o.color = std::string(kColors[i]);
      o.shape = pick(rng, kSortShapes);
      o.radius = config.radius;
      place(rng, seed, config, scene.objects, std::move(o));
    }
    return scene;
  }

  int n = static_cast<int>(uniform_int(rng, config.clevr_min_objects, config.clevr_max_objects));
  for (int i = 0; i < n; ++i) {
    SceneObject o;
    o.id = "o" + std::to_string(i);
    o.shape = pick(rng, kClevrShapes);
    o.color = pick(rng, kColors);
    o.size = pick(rng, kSizes);
    o.material = pick(rng, kMaterials);
    o.radius = o.size == "small" ? config.clevr_small_radius : config.clevr_large_radius;
    place(rng, seed, config, scene.objects, std::move(o));
  }
  return scene;
}

RgbImage render(const Scene& scene) {
  if (scene.mode != Mode::sort_of_clevr)
    throw std::invalid_argument("clevr-lite scenes have no raster form");
  RgbImage image(scene.image_size, scene.image_size, kBackground);
  for (const auto& o : scene.objects) {
    const Rgb c = palette(o.color);
    const bool circle = o.shape == "circle";
    for (int y = std::max(0, o.y - o.radius); y <= std::min(scene.image_size - 1, o.y + o.radius); ++y) {
      for (int x = std::max(0, o.x - o.radius); x <= std::min(scene.image_size - 1, o.x + o.radius); ++x) {
        int dx = x - o.x, dy = y - o.y;
        if (!circle || dx * dx + dy * dy <= o.radius * o.radius) image.set(x, y, c);
      }
    }
  }
  return image;
}

RelationTable::RelationTable(const Scene& scene) : n_(scene.objects.size()), ranked_(n_) {
  for (const auto& o : scene.objects) {
    xs_.push_back(o.x);
    ys_.push_back(o.y);
  }
  for (std::size_t a = 0; a < n_; ++a) {
    auto& r = ranked_[a];
    for (std::size_t b = 0; b < n_; ++b)
      if (b != a) r.push_back(b);
    std::stable_sort(r.begin(), r.end(),
                     [&](std::size_t p, std::size_t q) { return distance2(a, p) < distance2(a, q); });
  }
}

std::int64_t RelationTable::distance2(std::size_t a, std::size_t b) const {
  std::int64_t dx = xs_.at(a) - xs_.at(b), dy = ys_.at(a) - ys_.at(b);
  return dx * dx + dy * dy;
}

bool RelationTable::closest_tied(std::size_t a) const {
  const auto& r = ranked_.at(a);
  return r.size() >= 2 && distance2(a, r[0]) == distance2(a, r[1]);
}

bool RelationTable::furthest_tied(std::size_t a) const {
  const auto& r = ranked_.at(a);
  return r.size() >= 2 && distance2(a, r[r.size() - 1]) == distance2(a, r[r.size() - 2]);
}

json to_json(const Scene& scene) {
  json objects = json::array();
  for (const auto& o : scene.objects) {
    json jo = {{"id", o.id}, {"shape", o.shape}, {"color", o.color},
               {"x", o.x},   {"y", o.y},         {"radius", o.radius}};
    if (scene.mode == Mode::clevr_lite) {
      jo["size"] = o.size;
      jo["material"] = o.material;
    }
    objects.push_back(std::move(jo));
  }
  return {{"schema", kSceneSchemaVersion},
          {"scene_id", scene.scene_id},
          {"mode", to_string(scene.mode)},
          {"image_size", scene.image_size},
          {"objects", std::move(objects)}};
}

Scene scene_from_json(const json& j) {
  if (j.at("schema").get<int>() != kSceneSchemaVersion)
    throw std::invalid_argument("unsupported scene schema version");
  Scene s;
  s.scene_id = j.at("scene_id").get<std::string>();
  s.mode = parse_mode(j.at("mode").get<std::string>());
  s.image_size = j.at("image_size").get<int>();
  for (const auto& jo : j.at("objects")) {
    SceneObject o;
    o.id = jo.at("id").get<std::string>();
    o.shape = jo.at("shape").get<std::string>();
    o.color = jo.at("color").get<std::string>();
    o.x = jo.at("x").get<int>();
    o.y = jo.at("y").get<int>();
    o.radius = jo.at("radius").get<int>();
    o.size = jo.value("size", "");
    o.material = jo.value("material", "");
    s.objects.push_back(std::move(o));
  }
  return s;
}

void write_scenes_jsonl(std::ostream& out, const std::vector<Scene>& scenes) {
  for (const auto& s : scenes) out << to_json(s).dump() << '\n';
}

std::vector<Scene> read_scenes_jsonl(std::istream& in) {
  std::vector<Scene> scenes;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    scenes.push_back(scene_from_json(json::parse(line)));
  }
  return scenes;
}

}  // namespace spsl::scene
