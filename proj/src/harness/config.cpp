#include "spsl/harness/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace spsl::harness {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

ConfigFile parse_config(std::string_view text) {
  ConfigFile out;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto c = raw.find_first_of("#;"); c != std::string_view::npos) raw = raw.substr(0, c);
    std::string line = trim(raw);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("", where + ": unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError("", where + ": empty section name");
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("", where + ": expected key = value");
    std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigError("", where + ": missing key");
    std::string full = section.empty() ? key : section + "." + key;
    if (out.values.count(full)) throw ConfigError(full, where + ": duplicate key");
    out.values[full] = value;
    out.lines[full] = line_no;
  }
  return out;
}

ConfigFile load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

namespace {

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError(key, "cannot parse '" + v + "' as a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key, "expected true or false, got '" + v + "'");
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(parse_number<T>(key, trim(item)));
  if (out.empty()) throw ConfigError(key, "empty list");
  return out;
}

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <class T>
std::string fmt_list(const std::vector<T>& v) {
  std::string out;
  for (const T& x : v) {
    if (!out.empty()) out += ", ";
    if constexpr (std::is_floating_point_v<T>) out += fmt(x);
    else out += std::to_string(x);
  }
  return out;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

template <class F>
auto wrap(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(key, e.what());
  }
}

struct Field {
  const char* key;
  std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define INT_FIELD(name, member)                                                                            \
  Field {                                                                                                  \
    name, [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.member = parse_number<int>(k, v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.member); }                                \
  }
#define DOUBLE_FIELD(name, member)                                                                          \
  Field {                                                                                                   \
    name, [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.member = parse_number<double>(k, v); }, \
        [](const ExperimentConfig& c) { return fmt(c.member); }                                            \
  }
#define BOOL_FIELD(name, member)                                                                          \
  Field {                                                                                                 \
    name, [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.member = parse_bool(k, v); }, \
        [](const ExperimentConfig& c) { return fmt_bool(c.member); }                                     \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"data.mode", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.mode = wrap(k, [&] { return scene::parse_mode(v); });
       },
       [](const ExperimentConfig& c) { return std::string(scene::to_string(c.mode)); }},
      INT_FIELD("data.train_scenes", train_scenes),
      INT_FIELD("data.val_scenes", val_scenes),
      INT_FIELD("data.test_scenes", test_scenes),
      INT_FIELD("data.questions_per_scene", questions_per_scene),
      {"data.seed", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.seed = parse_number<std::uint64_t>(k, v);
       },
       [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
      INT_FIELD("data.radius", scene.radius),
      INT_FIELD("data.min_gap", scene.min_gap),
      INT_FIELD("data.max_retries", scene.max_retries),
      INT_FIELD("data.clevr_min_objects", scene.clevr_min_objects),
      INT_FIELD("data.clevr_max_objects", scene.clevr_max_objects),
      INT_FIELD("data.clevr_small_radius", scene.clevr_small_radius),
      INT_FIELD("data.clevr_large_radius", scene.clevr_large_radius),

      INT_FIELD("features.grid", features.grid),
      {"features.encoding", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.features.encoding = wrap(k, [&] { return parse_encoding(v); });
       },
       [](const ExperimentConfig& c) { return to_string(c.features.encoding); }},

      INT_FIELD("model.embed", model.embed),
      {"model.g_widths", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.g_widths = parse_list<int>(k, v);
       },
       [](const ExperimentConfig& c) { return fmt_list(c.model.g_widths); }},
      {"model.f_widths", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.f_widths = parse_list<int>(k, v);
       },
       [](const ExperimentConfig& c) { return fmt_list(c.model.f_widths); }},
      {"model.pooling", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         if (v != "sum" && v != "mean") throw ConfigError(k, "expected sum or mean, got '" + v + "'");
         c.model.mean_pool = v == "mean";
       },
       [](const ExperimentConfig& c) { return std::string(c.model.mean_pool ? "mean" : "sum"); }},

      {"train.variant", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.variant = wrap(k, [&] { return nn::parse_variant(v); });
       },
       [](const ExperimentConfig& c) { return nn::to_string(c.variant); }},
      DOUBLE_FIELD("train.lr", train.lr),
      INT_FIELD("train.batch", train.batch),
      INT_FIELD("train.epochs", train.epochs),
      {"train.optimizer", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.optimizer = wrap(k, [&] { return nn::parse_optimizer(v); });
       },
       [](const ExperimentConfig& c) { return nn::to_string(c.train.optimizer); }},
      DOUBLE_FIELD("train.beta1", train.beta1),
      DOUBLE_FIELD("train.beta2", train.beta2),
      DOUBLE_FIELD("train.eps", train.eps),
      {"train.seed", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.seed = parse_number<std::uint64_t>(k, v);
       },
       [](const ExperimentConfig& c) { return std::to_string(c.train.seed); }},
      {"train.teacher", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.teacher = v; },
       [](const ExperimentConfig& c) { return c.teacher; }},
      {"train.masks", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         if (v != "matched" && v != "truth") throw ConfigError(k, "expected matched or truth, got '" + v + "'");
         c.masks = v == "truth" ? MaskOrigin::truth : MaskOrigin::matched;
       },
       [](const ExperimentConfig& c) { return std::string(c.masks == MaskOrigin::truth ? "truth" : "matched"); }},

      DOUBLE_FIELD("distill.pi", distill.pi),
      {"distill.schedule", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.distill.schedule = wrap(k, [&] { return nn::parse_schedule(v); });
       },
       [](const ExperimentConfig& c) { return nn::to_string(c.distill.schedule); }},
      {"distill.l2", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.distill.l2 = wrap(k, [&] { return nn::parse_soft_loss(v); });
       },
       [](const ExperimentConfig& c) { return nn::to_string(c.distill.l2); }},
      {"distill.mode", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.distill.mode = wrap(k, [&] { return nn::parse_distill_mode(v); });
       },
       [](const ExperimentConfig& c) { return nn::to_string(c.distill.mode); }},
      DOUBLE_FIELD("distill.teacher_pi", teacher_pi),

      {"solver.max_iters", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.solver.max_iters = parse_number<std::size_t>(k, v);
       },
       [](const ExperimentConfig& c) { return std::to_string(c.solver.max_iters); }},
      DOUBLE_FIELD("solver.tol", solver.tol),
      DOUBLE_FIELD("solver.step0", solver.step0),
      {"solver.patience", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.solver.patience = parse_number<std::size_t>(k, v);
       },
       [](const ExperimentConfig& c) { return std::to_string(c.solver.patience); }},
      BOOL_FIELD("solver.strict", strict),

      DOUBLE_FIELD("match.w_attribute", match.w_attribute),
      DOUBLE_FIELD("match.w_relation", match.w_relation),
      DOUBLE_FIELD("match.w_inconsistent", match.w_inconsistent),
      DOUBLE_FIELD("match.w_prior", match.w_prior),
      BOOL_FIELD("match.hard_filter", match.hard_filter),
      BOOL_FIELD("match.negatives", match.negatives),
      BOOL_FIELD("match.inverse_relations", match.inverse_relations),
      DOUBLE_FIELD("match.threshold", match.select_threshold),
      DOUBLE_FIELD("match.tie_tolerance", match.tie_tolerance),
      DOUBLE_FIELD("match.decay_scale", mask.decay_scale),

      {"sweep.pis", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.sweep_pis = parse_list<double>(k, v);
       },
       [](const ExperimentConfig& c) { return fmt_list(c.sweep_pis); }},
  };
  return table;
}

#undef INT_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD

}  // namespace

void ExperimentConfig::validate() const {
  auto at_least = [](int v, int lo, const char* key) {
    if (v < lo) throw ConfigError(key, "must be >= " + std::to_string(lo));
  };
  at_least(train_scenes, 1, "data.train_scenes");
  at_least(val_scenes, 0, "data.val_scenes");
  at_least(test_scenes, 0, "data.test_scenes");
  at_least(questions_per_scene, 1, "data.questions_per_scene");
  wrap("data", [&] { scene.validate(); });
  if (features.grid < 1 || scene.image_size % features.grid != 0)
    throw ConfigError("features.grid", "must divide the image size " + std::to_string(scene.image_size));
  if (model.g_widths.size() != 4) throw ConfigError("model.g_widths", "must list 4 widths");
  if (model.f_widths.size() != 3) throw ConfigError("model.f_widths", "must list 3 widths");
  for (int w : model.g_widths) if (w < 1) throw ConfigError("model.g_widths", "widths must be >= 1");
  for (int w : model.f_widths) if (w < 1) throw ConfigError("model.f_widths", "widths must be >= 1");
  at_least(model.embed, 1, "model.embed");
  wrap("train", [&] { train.validate(); });
  if (!(distill.pi >= 0.0 && distill.pi <= 1.0)) throw ConfigError("distill.pi", "must lie in [0, 1]");
  if (!(teacher_pi >= 0.0 && teacher_pi <= 1.0)) throw ConfigError("distill.teacher_pi", "must lie in [0, 1]");
  if (variant == nn::Variant::student && teacher.empty())
    throw ConfigError("train.teacher", "student runs need a teacher run name");
  wrap("solver", [&] { solver.validate(); });
  wrap("match", [&] { match.validate(); });
  if (!(mask.decay_scale > 0.0)) throw ConfigError("match.decay_scale", "must be > 0");
  for (double p : sweep_pis)
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("sweep.pis", "every pi must lie in [0, 1]");
}

std::string ExperimentConfig::run_name() const {
  if (variant != nn::Variant::student) return nn::to_string(variant);
  std::string name = "student-" + teacher + "-pi" + fmt(distill.pi);
  if (distill.mode == nn::DistillMode::iterative) name += "-iterative";
  return name;
}

ExperimentConfig experiment_from(const ConfigFile& file) {
  ExperimentConfig c;
  for (const auto& [key, value] : file.values) {
    const Field* f = nullptr;
    for (const auto& candidate : fields())
      if (key == candidate.key) f = &candidate;
    if (!f) {
      auto line = file.lines.find(key);
      throw ConfigError(key, "unknown key" + (line == file.lines.end() ? std::string()
                                                                      : " (line " + std::to_string(line->second) + ")"));
    }
    f->set(c, key, value);
  }
  c.match.solver = c.solver;
  c.validate();
  return c;
}

std::string format_config(const ExperimentConfig& c) {
  std::string out, section;
  for (const auto& f : fields()) {
    std::string_view key = f.key;
    auto dot = key.find('.');
    std::string sec(key.substr(0, dot));
    if (sec != section) {
      out += (out.empty() ? "[" : "\n[") + sec + "]\n";
      section = sec;
    }
    out += std::string(key.substr(dot + 1)) + " = " + f.get(c) + "\n";
  }
  return out;
}

}  // namespace spsl::harness
