#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace spsl::nn {

struct ModelConfig {
  int regions = 64;
  int channels = 5;
  int vocab = 30;  // width of the question input vector
  int embed = 32;
  std::vector<int> g_widths{64, 64, 64, 64};
  std::vector<int> f_widths{64, 64, 32};  // the answer layer is appended
  int answers = 12;
  bool attention = false;
  // Pair aggregation: the sum, or the sum divided by regions^2.
  bool mean_pool = false;

  void validate() const;  // std::invalid_argument naming the field
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ParamBlock {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

/// Named matrices inside one flat parameter vector. Weights are stored
/// row-major as (out x in); biases are (out x 1).
class ParamLayout {
 public:
  explicit ParamLayout(const ModelConfig& config);

  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  std::size_t total() const { return total_; }
  const ParamBlock& block(const std::string& name) const;  // std::out_of_range
  /// "name[row,col]" for a flat index.
  std::string path(std::size_t index) const;

  // Hot-path indices into blocks().
  std::size_t embedding = 0, g_a = 0, g_b = 0, g_q = 0, g_bias = 0;
  std::vector<std::size_t> g_w, g_bias_rest;  // g layers 2..4
  std::vector<std::size_t> f_w, f_bias;
  std::size_t att_image = 0, att_question = 0, att_bias = 0;

 private:
  std::size_t add(std::string name, int rows, int cols);
  std::vector<ParamBlock> blocks_;
  std::size_t total_ = 0;
};

/// Per-sample activations kept for the backward pass.
template <class Scalar>
struct Workspace {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Mat raw;     // regions x channels, as given
  Mat x;       // after attention (== raw without it)
  Vec q;       // embedded question
  Vec v, alpha;
  Mat pa, pb;  // per-region halves of the first g layer
  std::vector<Mat> g;  // post-ReLU activations over all ordered pairs
  Vec pooled;
  std::vector<Vec> f;  // post-ReLU hidden activations of f
  Vec logits;
  // backward scratch
  Mat dg, dprev, dx;
};

/// Relation network with optional question-conditioned attention over
/// regions. Scalar is float for training and double for gradient checks.
template <class Scalar>
class RnModel {
 public:
  using Mat = typename Workspace<Scalar>::Mat;
  using Vec = typename Workspace<Scalar>::Vec;

  explicit RnModel(const ModelConfig& config);
  /// He-uniform weights, zero biases, uniform(-1,1) embeddings.
  void initialize(std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  std::vector<Scalar>& params() { return params_; }
  const std::vector<Scalar>& params() const { return params_; }
  Eigen::Map<const Mat> matrix(std::size_t block) const;
  Eigen::Map<Mat> matrix(std::size_t block);

  /// features: regions x channels row-major; question: vocab entries.
  /// Returns the logits (also in ws.logits). Throws std::invalid_argument on
  /// a shape mismatch.
  const Vec& forward(std::span<const Scalar> features, std::span<const Scalar> question,
                     Workspace<Scalar>& ws) const;
  /// Adds d(loss)/d(params) into grad given d(loss)/d(logits) and the
  /// workspace of the matching forward call.
  void backward(Workspace<Scalar>& ws, std::span<const Scalar> question, std::span<const Scalar> dlogits,
                std::span<Scalar> grad) const;

  /// Embedded question, q = E^T question.
  Vec embed(std::span<const Scalar> question) const;
  /// Attention weights and the attended features for the given regions.
  std::pair<Vec, Mat> attend(const Mat& features, const Vec& q) const;

 private:
  void check_shapes(std::span<const Scalar> features, std::span<const Scalar> question) const;

  ModelConfig config_;
  ParamLayout layout_;
  std::vector<Scalar> params_;
};

extern template class RnModel<float>;
extern template class RnModel<double>;

/// Numerically stable softmax, exp(z - max) / sum. sample_loss uses the
/// same expression, so a model's own predictions give a zero euclidean term.
template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> softmax(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& z) {
  const Scalar mx = z.maxCoeff();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> e(z.size());
  Scalar sum = 0;
  for (Eigen::Index k = 0; k < z.size(); ++k) sum += e[k] = std::exp(z[k] - mx);
  for (Eigen::Index k = 0; k < z.size(); ++k) e[k] /= sum;
  return e;
}

}  // namespace spsl::nn
