#include "spsl/nn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spsl::nn {

std::string to_string(Schedule s) { return s == Schedule::fixed ? "fixed" : "annealed"; }
std::string to_string(SoftLoss l) { return l == SoftLoss::euclidean ? "euclidean" : "cross_entropy"; }
std::string to_string(DistillMode m) { return m == DistillMode::sequential ? "sequential" : "iterative"; }

Schedule parse_schedule(const std::string& s) {
  if (s == "fixed") return Schedule::fixed;
  if (s == "annealed") return Schedule::annealed;
  throw std::invalid_argument("unknown schedule '" + s + "' (fixed|annealed)");
}

SoftLoss parse_soft_loss(const std::string& s) {
  if (s == "euclidean") return SoftLoss::euclidean;
  if (s == "cross_entropy") return SoftLoss::cross_entropy;
  throw std::invalid_argument("unknown soft loss '" + s + "' (euclidean|cross_entropy)");
}

DistillMode parse_distill_mode(const std::string& s) {
  if (s == "sequential") return DistillMode::sequential;
  if (s == "iterative") return DistillMode::iterative;
  throw std::invalid_argument("unknown distillation mode '" + s + "' (sequential|iterative)");
}

void DistillConfig::validate() const {
  if (!(pi >= 0.0 && pi <= 1.0)) throw std::invalid_argument("distill.pi must lie in [0, 1]");
}

double DistillConfig::effective_pi(int epoch) const {
  if (epoch < 1) throw std::invalid_argument("epoch numbering starts at 1");
  if (schedule == Schedule::fixed) return pi;
  return std::min(pi, 1.0 - std::pow(pi, epoch));
}

void check_probabilities(std::span<const double> p, double tol) {
  double sum = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("probability vector has a negative or non-finite entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > tol) throw std::invalid_argument("probability vector does not sum to 1");
}

template <class Scalar>
Scalar sample_loss(std::span<const Scalar> logits, int label, std::span<const Scalar> soft, double pi_t,
                   SoftLoss l2, std::span<Scalar> dlogits) {
  const std::size_t n = logits.size();
  if (label < 0 || static_cast<std::size_t>(label) >= n) throw std::invalid_argument("label out of range");
  if (dlogits.size() != n) throw std::invalid_argument("dlogits size mismatch");

  const Scalar mx = *std::max_element(logits.begin(), logits.end());
  std::vector<Scalar> p(n);
  Scalar z = 0;
  for (std::size_t k = 0; k < n; ++k) z += p[k] = std::exp(logits[k] - mx);
  for (std::size_t k = 0; k < n; ++k) p[k] /= z;
  const Scalar logz = mx + std::log(z);

  const Scalar w1 = static_cast<Scalar>(1.0 - pi_t);
  Scalar loss = w1 * (logz - logits[label]);
  for (std::size_t k = 0; k < n; ++k) dlogits[k] = w1 * (p[k] - (static_cast<int>(k) == label ? Scalar(1) : Scalar(0)));
  if (pi_t == 0.0) return loss;

  if (soft.size() != n) throw std::invalid_argument("soft target size mismatch");
  const Scalar w2 = static_cast<Scalar>(pi_t);
  if (l2 == SoftLoss::cross_entropy) {
    Scalar s_sum = 0, ce = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (!(soft[k] >= 0)) throw std::invalid_argument("soft target has a negative entry");
      s_sum += soft[k];
      ce += soft[k] * (logz - logits[k]);
    }
    if (std::abs(static_cast<double>(s_sum) - 1.0) > 1e-4)
      throw std::invalid_argument("soft target does not sum to 1");
    loss += w2 * ce;
    for (std::size_t k = 0; k < n; ++k) dlogits[k] += w2 * (s_sum * p[k] - soft[k]);
  } else {
    // ||p - s||^2, pulled back through the softmax Jacobian.
    Scalar sq = 0, pu = 0;
    std::vector<Scalar> u(n);
    for (std::size_t k = 0; k < n; ++k) {
      Scalar d = p[k] - soft[k];
      sq += d * d;
      u[k] = 2 * d;
      pu += p[k] * u[k];
    }
    loss += w2 * sq;
    for (std::size_t k = 0; k < n; ++k) dlogits[k] += w2 * p[k] * (u[k] - pu);
  }
  return loss;
}

template float sample_loss<float>(std::span<const float>, int, std::span<const float>, double, SoftLoss,
                                  std::span<float>);
template double sample_loss<double>(std::span<const double>, int, std::span<const double>, double, SoftLoss,
                                    std::span<double>);

double distill_loss(std::span<const int> labels, std::span<const double> soft, std::span<const double> logits,
                    const DistillConfig& config, int epoch) {
  config.validate();
  if (labels.empty()) throw std::invalid_argument("empty batch");
  if (logits.size() % labels.size() != 0) throw std::invalid_argument("logits are not batch x answers");
  const std::size_t a = logits.size() / labels.size();
  const double pi_t = config.effective_pi(epoch);
  if (pi_t > 0.0 && soft.size() != logits.size()) throw std::invalid_argument("soft targets are not batch x answers");
  std::vector<double> scratch(a);
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::span<const double> s;
    if (pi_t > 0.0) {
      s = soft.subspan(i * a, a);
      if (config.l2 == SoftLoss::cross_entropy) check_probabilities(s);
    }
    total += sample_loss<double>(logits.subspan(i * a, a), labels[i], s, pi_t, config.l2, scratch);
  }
  return total / static_cast<double>(labels.size());
}

}  // namespace spsl::nn
