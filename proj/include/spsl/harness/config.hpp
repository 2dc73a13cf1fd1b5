#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "spsl/harness/pipeline.hpp"
#include "spsl/map_infer.hpp"
#include "spsl/matcher.hpp"
#include "spsl/nn/losses.hpp"
#include "spsl/nn/train.hpp"
#include "spsl/scene.hpp"

namespace spsl::harness {

/// Bad config text or value. field() is "section.key" when known.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Raw `key = value` pairs keyed by "section.key". Keys before any
/// [section] header live in section "".
struct ConfigFile {
  std::map<std::string, std::string> values;
  std::map<std::string, std::size_t> lines;
};

/// '#' and ';' start comments. Throws ConfigError with the line number on
/// malformed lines or duplicate keys.
ConfigFile parse_config(std::string_view text);
ConfigFile load_config(const std::filesystem::path& path);

enum class MaskOrigin { matched, truth };

struct ExperimentConfig {
  // [data]
  scene::Mode mode = scene::Mode::sort_of_clevr;
  int train_scenes = 9800;
  int val_scenes = 200;
  int test_scenes = 200;
  int questions_per_scene = 10;
  std::uint64_t seed = 1;
  scene::SceneConfig scene;
  // [features]
  FeatureConfig features;
  // [model]
  nn::ModelConfig model;
  // [train]
  nn::Variant variant = nn::Variant::baseline;
  nn::TrainConfig train;
  std::string teacher;  // teacher run directory name under train/, for students
  MaskOrigin masks = MaskOrigin::matched;
  // [distill]
  nn::DistillConfig distill;
  double teacher_pi = 0.9;  // iterative mode
  // [solver]
  infer::SolverConfig solver;
  bool strict = false;
  // [match]
  match::MatchConfig match;
  match::MaskParams mask;
  // [sweep]
  std::vector<double> sweep_pis{0.1, 0.2, 0.3, 0.4, 0.5, 0.575, 0.6, 0.7, 0.8, 0.9};

  void validate() const;  // ConfigError naming the field
  /// Name of the run directory for the configured variant.
  std::string run_name() const;
};

/// Unknown keys and unparsable values raise ConfigError naming the field.
ExperimentConfig experiment_from(const ConfigFile& file);
/// Canonical text of every key; parses back to an equal configuration.
std::string format_config(const ExperimentConfig& config);

}  // namespace spsl::harness
