#include "spsl/nn/rn_model.hpp"

#include <cmath>
#include <stdexcept>

#include "spsl/rng.hpp"

namespace spsl::nn {

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw std::invalid_argument(std::string("model.") + name + " must be >= 1");
  };
  positive(regions, "regions");
  positive(channels, "channels");
  positive(vocab, "vocab");
  positive(embed, "embed");
  positive(answers, "answers");
  if (g_widths.size() != 4) throw std::invalid_argument("model.g_widths must list 4 layers");
  if (f_widths.size() != 3) throw std::invalid_argument("model.f_widths must list 3 hidden layers");
  for (int w : g_widths) positive(w, "g_widths");
  for (int w : f_widths) positive(w, "f_widths");
}

ParamLayout::ParamLayout(const ModelConfig& c) {
  c.validate();
  embedding = add("embedding", c.vocab, c.embed);
  g_a = add("g1.a", c.g_widths[0], c.channels);
  g_b = add("g1.b", c.g_widths[0], c.channels);
  g_q = add("g1.q", c.g_widths[0], c.embed);
  g_bias = add("g1.bias", c.g_widths[0], 1);
  for (std::size_t k = 1; k < c.g_widths.size(); ++k) {
    std::string n = "g" + std::to_string(k + 1);
    g_w.push_back(add(n + ".w", c.g_widths[k], c.g_widths[k - 1]));
    g_bias_rest.push_back(add(n + ".bias", c.g_widths[k], 1));
  }
  int in = c.g_widths.back();
  std::vector<int> widths = c.f_widths;
  widths.push_back(c.answers);
  for (std::size_t k = 0; k < widths.size(); ++k) {
    std::string n = "f" + std::to_string(k + 1);
    f_w.push_back(add(n + ".w", widths[k], in));
    f_bias.push_back(add(n + ".bias", widths[k], 1));
    in = widths[k];
  }
  if (c.attention) {
    att_image = add("att.w_image", c.regions, c.regions * c.channels);
    att_question = add("att.w_question", c.regions, c.embed);
    att_bias = add("att.bias", c.regions, 1);
  }
}

std::size_t ParamLayout::add(std::string name, int rows, int cols) {
  blocks_.push_back({std::move(name), rows, cols, total_});
  total_ += blocks_.back().size();
  return blocks_.size() - 1;
}

const ParamBlock& ParamLayout::block(const std::string& name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return b;
  throw std::out_of_range("no parameter block " + name);
}

std::string ParamLayout::path(std::size_t index) const {
  for (const auto& b : blocks_) {
    if (index >= b.offset && index < b.offset + b.size()) {
      std::size_t local = index - b.offset;
      return b.name + "[" + std::to_string(local / b.cols) + "," + std::to_string(local % b.cols) + "]";
    }
  }
  throw std::out_of_range("parameter index out of range");
}

template <class Scalar>
RnModel<Scalar>::RnModel(const ModelConfig& config)
    : config_(config), layout_(config), params_(layout_.total(), Scalar(0)) {}

template <class Scalar>
void RnModel<Scalar>::initialize(std::uint64_t seed) {
  Rng rng(seed);
  auto fill = [&](std::size_t block, double bound) {
    const ParamBlock& b = layout_.blocks()[block];
    for (std::size_t i = 0; i < b.size(); ++i)
      params_[b.offset + i] = static_cast<Scalar>((2.0 * uniform01(rng) - 1.0) * bound);
  };
  const ModelConfig& c = config_;
  fill(layout_.embedding, 1.0);
  const double first = std::sqrt(6.0 / (2 * c.channels + c.embed));
  fill(layout_.g_a, first);
  fill(layout_.g_b, first);
  fill(layout_.g_q, first);
  for (std::size_t k = 0; k < layout_.g_w.size(); ++k)
    fill(layout_.g_w[k], std::sqrt(6.0 / c.g_widths[k]));
  for (std::size_t k = 0; k < layout_.f_w.size(); ++k) {
    const ParamBlock& b = layout_.blocks()[layout_.f_w[k]];
    bool last = k + 1 == layout_.f_w.size();
    double bound = last ? std::sqrt(6.0 / (b.rows + b.cols)) : std::sqrt(6.0 / b.cols);
    if (k == 0 && !c.mean_pool) bound /= static_cast<double>(c.regions) * c.regions;
    fill(layout_.f_w[k], bound);
  }
  if (c.attention) {
    fill(layout_.att_image, std::sqrt(6.0 / (c.regions + c.regions * c.channels)));
    fill(layout_.att_question, std::sqrt(6.0 / (c.regions + c.embed)));
  }
}

template <class Scalar>
Eigen::Map<const typename RnModel<Scalar>::Mat> RnModel<Scalar>::matrix(std::size_t block) const {
  const ParamBlock& b = layout_.blocks()[block];
  return Eigen::Map<const Mat>(params_.data() + b.offset, b.rows, b.cols);
}

template <class Scalar>
Eigen::Map<typename RnModel<Scalar>::Mat> RnModel<Scalar>::matrix(std::size_t block) {
  const ParamBlock& b = layout_.blocks()[block];
  return Eigen::Map<Mat>(params_.data() + b.offset, b.rows, b.cols);
}

template <class Scalar>
void RnModel<Scalar>::check_shapes(std::span<const Scalar> features, std::span<const Scalar> question) const {
  const std::size_t want = static_cast<std::size_t>(config_.regions * config_.channels);
  if (features.size() != want)
    throw std::invalid_argument("features have " + std::to_string(features.size()) + " values, expected " +
                                std::to_string(want));
  if (question.size() != static_cast<std::size_t>(config_.vocab))
    throw std::invalid_argument("question vector has " + std::to_string(question.size()) +
                                " entries, expected " + std::to_string(config_.vocab));
}

template <class Scalar>
typename RnModel<Scalar>::Vec RnModel<Scalar>::embed(std::span<const Scalar> question) const {
  auto e = matrix(layout_.embedding);
  Vec q = Vec::Zero(config_.embed);
  for (std::size_t t = 0; t < question.size(); ++t)
    if (question[t] != Scalar(0)) q += question[t] * e.row(static_cast<Eigen::Index>(t)).transpose();
  return q;
}

template <class Scalar>
std::pair<typename RnModel<Scalar>::Vec, typename RnModel<Scalar>::Mat> RnModel<Scalar>::attend(
    const Mat& features, const Vec& q) const {
  if (!config_.attention) throw std::logic_error("model has no attention parameters");
  Eigen::Map<const Vec> flat(features.data(), features.size());
  Vec v = (matrix(layout_.att_image) * flat + matrix(layout_.att_question) * q +
           matrix(layout_.att_bias).col(0))
              .array()
              .tanh()
              .matrix();
  Vec alpha = softmax<Scalar>(v);
  Mat x = alpha.asDiagonal() * features;
  return {alpha, x};
}

template <class Scalar>
const typename RnModel<Scalar>::Vec& RnModel<Scalar>::forward(std::span<const Scalar> features,
                                                             std::span<const Scalar> question,
                                                             Workspace<Scalar>& ws) const {
  check_shapes(features, question);
  const Eigen::Index R = config_.regions;
  ws.raw = Eigen::Map<const Mat>(features.data(), R, config_.channels);
  ws.q = embed(question);
  if (config_.attention) {
    Eigen::Map<const Vec> flat(ws.raw.data(), ws.raw.size());
    ws.v = (matrix(layout_.att_image) * flat + matrix(layout_.att_question) * ws.q +
            matrix(layout_.att_bias).col(0))
               .array()
               .tanh()
               .matrix();
    ws.alpha = softmax<Scalar>(ws.v);
    ws.x = ws.alpha.asDiagonal() * ws.raw;
  } else {
    ws.x = ws.raw;
  }

  ws.pa.noalias() = ws.x * matrix(layout_.g_a).transpose();
  ws.pb.noalias() = ws.x * matrix(layout_.g_b).transpose();
  const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> c =
      (matrix(layout_.g_q) * ws.q + matrix(layout_.g_bias).col(0)).transpose();
  ws.g.resize(config_.g_widths.size());
  ws.g[0].resize(R * R, config_.g_widths[0]);
  for (Eigen::Index i = 0; i < R; ++i) {
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> base = ws.pa.row(i) + c;
    for (Eigen::Index j = 0; j < R; ++j) ws.g[0].row(i * R + j) = (base + ws.pb.row(j)).cwiseMax(Scalar(0));
  }
  for (std::size_t k = 1; k < ws.g.size(); ++k) {
    ws.g[k].noalias() = ws.g[k - 1] * matrix(layout_.g_w[k - 1]).transpose();
    ws.g[k] = (ws.g[k].rowwise() + matrix(layout_.g_bias_rest[k - 1]).col(0).transpose()).cwiseMax(Scalar(0));
  }
  ws.pooled = ws.g.back().colwise().sum().transpose();
  if (config_.mean_pool) ws.pooled /= static_cast<Scalar>(R * R);

  const std::size_t nf = layout_.f_w.size();
  ws.f.resize(nf - 1);
  const Vec* in = &ws.pooled;
  for (std::size_t k = 0; k + 1 < nf; ++k) {
    ws.f[k] = (matrix(layout_.f_w[k]) * *in + matrix(layout_.f_bias[k]).col(0)).cwiseMax(Scalar(0));
    in = &ws.f[k];
  }
  ws.logits = matrix(layout_.f_w[nf - 1]) * *in + matrix(layout_.f_bias[nf - 1]).col(0);
  return ws.logits;
}

template <class Scalar>
void RnModel<Scalar>::backward(Workspace<Scalar>& ws, std::span<const Scalar> question,
                               std::span<const Scalar> dlogits, std::span<Scalar> grad) const {
  if (grad.size() != params_.size()) throw std::invalid_argument("gradient buffer size mismatch");
  if (dlogits.size() != static_cast<std::size_t>(config_.answers))
    throw std::invalid_argument("dlogits size mismatch");
  auto G = [&](std::size_t block) {
    const ParamBlock& b = layout_.blocks()[block];
    return Eigen::Map<Mat>(grad.data() + b.offset, b.rows, b.cols);
  };
  const Eigen::Index R = config_.regions;

  // f layers
  Vec dz = Eigen::Map<const Vec>(dlogits.data(), config_.answers);
  Vec dpooled;
  for (std::size_t k = layout_.f_w.size(); k-- > 0;) {
    const Vec& in = k == 0 ? ws.pooled : ws.f[k - 1];
    G(layout_.f_w[k]).noalias() += dz * in.transpose();
    G(layout_.f_bias[k]).col(0) += dz;
    Vec din = matrix(layout_.f_w[k]).transpose() * dz;
    if (k == 0) {
      dpooled = std::move(din);
    } else {
      dz = (ws.f[k - 1].array() > Scalar(0)).select(din.array(), Scalar(0)).matrix();
    }
  }

  // g layers: every pair receives the pooled gradient.
  if (config_.mean_pool) dpooled /= static_cast<Scalar>(R * R);
  const std::size_t ng = ws.g.size();
  ws.dg = (ws.g[ng - 1].array() > Scalar(0))
              .select(dpooled.transpose().replicate(R * R, 1).array(), Scalar(0))
              .matrix();
  for (std::size_t k = ng - 1; k >= 1; --k) {
    G(layout_.g_w[k - 1]).noalias() += ws.dg.transpose() * ws.g[k - 1];
    G(layout_.g_bias_rest[k - 1]).col(0) += ws.dg.colwise().sum().transpose();
    ws.dprev.noalias() = ws.dg * matrix(layout_.g_w[k - 1]);
    ws.dg = (ws.g[k - 1].array() > Scalar(0)).select(ws.dprev.array(), Scalar(0)).matrix();
  }

  const Eigen::Index w0 = config_.g_widths[0];
  Mat dpa = Mat::Zero(R, w0), dpb = Mat::Zero(R, w0);
  for (Eigen::Index i = 0; i < R; ++i) {
    auto rows = ws.dg.middleRows(i * R, R);
    dpa.row(i) = rows.colwise().sum();
    dpb += rows;
  }
  const Vec dc = dpa.colwise().sum().transpose();
  G(layout_.g_a).noalias() += dpa.transpose() * ws.x;
  G(layout_.g_b).noalias() += dpb.transpose() * ws.x;
  G(layout_.g_q).noalias() += dc * ws.q.transpose();
  G(layout_.g_bias).col(0) += dc;
  Vec dq = matrix(layout_.g_q).transpose() * dc;

  if (config_.attention) {
    ws.dx.noalias() = dpa * matrix(layout_.g_a);
    ws.dx.noalias() += dpb * matrix(layout_.g_b);
    Vec dalpha = (ws.dx.array() * ws.raw.array()).rowwise().sum().matrix();
    Vec dv = ws.alpha.cwiseProduct((dalpha.array() - ws.alpha.dot(dalpha)).matrix());
    Vec du = dv.cwiseProduct((Scalar(1) - ws.v.array().square()).matrix());
    Eigen::Map<const Vec> flat(ws.raw.data(), ws.raw.size());
    G(layout_.att_image).noalias() += du * flat.transpose();
    G(layout_.att_question).noalias() += du * ws.q.transpose();
    G(layout_.att_bias).col(0) += du;
    dq.noalias() += matrix(layout_.att_question).transpose() * du;
  }

  auto de = G(layout_.embedding);
  for (std::size_t t = 0; t < question.size(); ++t)
    if (question[t] != Scalar(0)) de.row(static_cast<Eigen::Index>(t)) += question[t] * dq.transpose();
}

template class RnModel<float>;
template class RnModel<double>;

}  // namespace spsl::nn
