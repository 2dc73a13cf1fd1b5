#pragma once

// Small random models and batches for the gradient checks.

#include <numeric>
#include <vector>

#include "spsl/nn/rn_model.hpp"
#include "spsl/rng.hpp"

namespace spsl::testing {

using nn::ModelConfig;
using nn::RnModel;

inline ModelConfig tiny_config(bool attention) {
  ModelConfig c;
  c.regions = 4;
  c.channels = 5;
  c.vocab = 5;
  c.embed = 3;
  c.g_widths = {6, 6, 6, 6};
  c.f_widths = {6, 6, 4};
  c.answers = 3;
  c.attention = attention;
  return c;
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = lo + (hi - lo) * uniform01(rng);
  return v;
}

// Moves parameters off the ReLU kinks that zero biases sit on.
inline void jitter(RnModel<double>& m, std::uint64_t seed) {
  Rng rng(seed);
  for (double& p : m.params()) p += 0.2 * (uniform01(rng) - 0.5);
}

struct Batch {
  std::vector<std::vector<double>> features, questions, soft;
  std::vector<int> labels;
};

inline Batch random_batch(const ModelConfig& c, std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  Batch b;
  for (std::size_t i = 0; i < n; ++i) {
    b.features.push_back(random_vector(rng, static_cast<std::size_t>(c.regions * c.channels), 0.0, 1.0));
    b.questions.push_back(random_vector(rng, static_cast<std::size_t>(c.vocab), 0.0, 1.0));
    b.labels.push_back(static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(c.answers))));
    auto s = random_vector(rng, static_cast<std::size_t>(c.answers), 0.05, 1.0);
    double z = std::accumulate(s.begin(), s.end(), 0.0);
    for (double& x : s) x /= z;
    b.soft.push_back(s);
  }
  return b;
}

}  // namespace spsl::testing
