#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace spsl::nn {

enum class Schedule { fixed, annealed };  // annealed: min(pi, 1 - pi^t)
enum class SoftLoss { cross_entropy, euclidean };
enum class DistillMode { sequential, iterative };

std::string to_string(Schedule s);
std::string to_string(SoftLoss l);
std::string to_string(DistillMode m);
Schedule parse_schedule(const std::string& s);  // std::invalid_argument
SoftLoss parse_soft_loss(const std::string& s);
DistillMode parse_distill_mode(const std::string& s);

struct DistillConfig {
  double pi = 0.0;
  Schedule schedule = Schedule::fixed;
  SoftLoss l2 = SoftLoss::euclidean;
  DistillMode mode = DistillMode::sequential;

  void validate() const;
  /// Imitation weight used in epoch t (t >= 1).
  double effective_pi(int epoch) const;
};

/// Loss of one sample and its gradient w.r.t. the logits. soft may be empty
/// when pi_t == 0; the soft term is then skipped entirely, so pi = 0 gives
/// plain cross-entropy bit for bit. Throws std::invalid_argument on a bad
/// label or an invalid probability vector.
template <class Scalar>
Scalar sample_loss(std::span<const Scalar> logits, int label, std::span<const Scalar> soft, double pi_t,
                   SoftLoss l2, std::span<Scalar> dlogits);

/// Mean distillation loss over a batch: logits and soft are row-major
/// (batch x answers).
double distill_loss(std::span<const int> labels, std::span<const double> soft, std::span<const double> logits,
                    const DistillConfig& config, int epoch);

/// Checks a probability vector: finite, non-negative, sum 1 within tol.
void check_probabilities(std::span<const double> p, double tol = 1e-6);

}  // namespace spsl::nn
