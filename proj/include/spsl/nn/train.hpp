#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spsl/nn/losses.hpp"
#include "spsl/nn/rn_model.hpp"

namespace spsl::nn {

/// Flat sample storage: features (n x regions*channels), question vectors
/// (n x vocab) and integer labels.
struct Dataset {
  int regions = 0;
  int channels = 0;
  int vocab = 0;
  int answers = 0;
  std::vector<float> features;
  std::vector<float> questions;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const float> feature(std::size_t i) const;
  std::span<const float> question(std::size_t i) const;
  void add(std::span<const double> features, std::span<const double> question, int label);
  /// Throws std::invalid_argument if the dataset does not fit the model.
  void check_compatible(const ModelConfig& model) const;
};

enum class OptimizerKind { adam, sgd };
OptimizerKind parse_optimizer(const std::string& s);
std::string to_string(OptimizerKind k);

struct TrainConfig {
  double lr = 1e-4;
  int batch = 64;
  int epochs = 50;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 1;

  void validate() const;
};

enum class Variant { baseline, teacher_external_mask, teacher_attention, student };
std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& path)
      : std::runtime_error("non-finite gradient at " + path), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

struct EpochMetrics {
  int epoch = 0;
  std::string split;  // train | val | teacher
  double accuracy = 0.0;
  double loss = 0.0;
};

struct Metrics {
  double accuracy = 0.0;
  double loss = 0.0;  // mean cross-entropy
};

using Model = RnModel<float>;

/// The teacher side of a student run. teacher_view holds the teacher's
/// inputs (e.g. masked images) for the same samples in the same order.
/// Iterative mode also updates the teacher, so it is taken by pointer.
struct StudentSpec {
  DistillConfig distill;
  Model* teacher = nullptr;
  const Dataset* teacher_view = nullptr;
  double teacher_pi = 0.9;  // imitation weight of the teacher in iterative mode
};

struct TrainResult {
  std::vector<EpochMetrics> trace;
};

/// Trains in place. The initial parameters are taken as given (call
/// Model::initialize first). val may be null.
TrainResult train(Model& model, const Dataset& train_set, const Dataset* val, const TrainConfig& config,
                  Variant variant, const StudentSpec* student = nullptr);

Metrics evaluate(const Model& model, const Dataset& data);
/// Softmax outputs, n x answers.
std::vector<float> predict_proba(const Model& model, const Dataset& data);

/// Max over parameters of |analytic - numeric| / max(|analytic|, |numeric|, floor)
/// with central differences of step h on the mean loss of the samples. A
/// difference that crosses a ReLU kink is retried with h/10 and h/100, then
/// counted in `skipped`.
struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_path;
  std::size_t skipped = 0;
};
GradCheckResult grad_check(RnModel<double>& model, std::span<const std::vector<double>> features,
                           std::span<const std::vector<double>> questions, std::span<const int> labels,
                           std::span<const std::vector<double>> soft = {}, double pi = 0.0,
                           SoftLoss l2 = SoftLoss::euclidean, double h = 1e-5, double floor = 1e-6);

void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);  // std::runtime_error on a bad file

void write_trace_csv(std::ostream& out, const std::vector<EpochMetrics>& trace);
std::vector<EpochMetrics> read_trace_csv(std::istream& in);

}  // namespace spsl::nn
