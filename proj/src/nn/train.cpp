#include "spsl/nn/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <memory>
#include <numeric>
#include <sstream>

#include "spsl/rng.hpp"

namespace spsl::nn {

std::span<const float> Dataset::feature(std::size_t i) const {
  const std::size_t n = static_cast<std::size_t>(regions * channels);
  return std::span<const float>(features).subspan(i * n, n);
}

std::span<const float> Dataset::question(std::size_t i) const {
  const std::size_t n = static_cast<std::size_t>(vocab);
  return std::span<const float>(questions).subspan(i * n, n);
}

void Dataset::add(std::span<const double> f, std::span<const double> q, int label) {
  if (f.size() != static_cast<std::size_t>(regions * channels) || q.size() != static_cast<std::size_t>(vocab))
    throw std::invalid_argument("sample shape does not match the dataset");
  if (label < 0 || label >= answers) throw std::invalid_argument("label out of range");
  for (double v : f) features.push_back(static_cast<float>(v));
  for (double v : q) questions.push_back(static_cast<float>(v));
  labels.push_back(label);
}

void Dataset::check_compatible(const ModelConfig& m) const {
  if (regions != m.regions || channels != m.channels)
    throw std::invalid_argument("dataset regions/channels do not match the model");
  if (vocab != m.vocab) throw std::invalid_argument("question vocabulary size does not match the model");
  if (answers != m.answers) throw std::invalid_argument("answer vocabulary size does not match the model");
}

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw std::invalid_argument("unknown optimizer '" + s + "' (adam|sgd)");
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("train.lr must be > 0");
  if (batch < 1) throw std::invalid_argument("train.batch must be >= 1");
  if (epochs < 1) throw std::invalid_argument("train.epochs must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("train.beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("train.beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("train.eps must be > 0");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::teacher_external_mask: return "teacher-external-mask";
    case Variant::teacher_attention: return "teacher-attention";
    case Variant::student: return "student";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::baseline, Variant::teacher_external_mask, Variant::teacher_attention, Variant::student})
    if (to_string(v) == s) return v;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

namespace {

class Optimizer {
 public:
  Optimizer(const TrainConfig& c, std::size_t n) : c_(c), m_(n, 0.0f), v_(n, 0.0f) {}

  void step(std::vector<float>& p, const std::vector<float>& g) {
    if (c_.optimizer == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= static_cast<float>(c_.lr) * g[i];
      return;
    }
    ++t_;
    const double c1 = 1.0 - std::pow(c_.beta1, t_), c2 = 1.0 - std::pow(c_.beta2, t_);
    const float b1 = static_cast<float>(c_.beta1), b2 = static_cast<float>(c_.beta2);
    const float a = static_cast<float>(c_.lr / c1), s2 = static_cast<float>(1.0 / c2);
    const float eps = static_cast<float>(c_.eps);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m_[i] = b1 * m_[i] + (1.0f - b1) * g[i];
      v_[i] = b2 * v_[i] + (1.0f - b2) * g[i] * g[i];
      p[i] -= a * m_[i] / (std::sqrt(v_[i] * s2) + eps);
    }
  }

 private:
  TrainConfig c_;
  std::vector<float> m_, v_;
  int t_ = 0;
};

void check_finite(const Model& model, const std::vector<float>& g) {
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!std::isfinite(g[i])) throw NonFiniteGradient(model.layout().path(i));
}

struct EpochStats {
  double accuracy = 0.0;
  double loss = 0.0;
};

// One pass over data in a shuffled order. soft is n x answers or empty.
EpochStats run_epoch(Model& model, Optimizer& opt, const Dataset& data, Rng& rng, std::span<const float> soft,
                     double pi_t, SoftLoss l2, int batch) {
  const std::size_t n = data.size();
  const std::size_t a = static_cast<std::size_t>(model.config().answers);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(rng, order.begin(), order.end());

  Workspace<float> ws;
  std::vector<float> grad(model.params().size());
  std::vector<float> dlogits(a);
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(n, start + static_cast<std::size_t>(batch));
    const float scale = 1.0f / static_cast<float>(end - start);
    std::fill(grad.begin(), grad.end(), 0.0f);
    for (std::size_t k = start; k < end; ++k) {
      const std::size_t i = order[k];
      const auto& logits = model.forward(data.feature(i), data.question(i), ws);
      Eigen::Index arg;
      logits.maxCoeff(&arg);
      correct += arg == data.labels[i];
      std::span<const float> s = soft.empty() ? std::span<const float>() : soft.subspan(i * a, a);
      loss_sum += sample_loss<float>(std::span<const float>(logits.data(), a), data.labels[i], s, pi_t, l2, dlogits);
      for (float& d : dlogits) d *= scale;
      model.backward(ws, data.question(i), dlogits, grad);
    }
    check_finite(model, grad);
    opt.step(model.params(), grad);
  }
  return {static_cast<double>(correct) / static_cast<double>(n), loss_sum / static_cast<double>(n)};
}

}  // namespace

Metrics evaluate(const Model& model, const Dataset& data) {
  data.check_compatible(model.config());
  if (data.size() == 0) return {};
  Workspace<float> ws;
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& z = model.forward(data.feature(i), data.question(i), ws);
    Eigen::Index arg;
    const float mx = z.maxCoeff(&arg);
    correct += arg == data.labels[i];
    const double logz = mx + std::log((z.array() - mx).exp().sum());
    loss += logz - z[data.labels[i]];
  }
  const double n = static_cast<double>(data.size());
  return {static_cast<double>(correct) / n, loss / n};
}

std::vector<float> predict_proba(const Model& model, const Dataset& data) {
  data.check_compatible(model.config());
  const std::size_t a = static_cast<std::size_t>(model.config().answers);
  std::vector<float> out(data.size() * a);
  Workspace<float> ws;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Eigen::VectorXf p = softmax<float>(model.forward(data.feature(i), data.question(i), ws));
    std::copy(p.data(), p.data() + a, out.begin() + static_cast<std::ptrdiff_t>(i * a));
  }
  return out;
}

TrainResult train(Model& model, const Dataset& train_set, const Dataset* val, const TrainConfig& config,
                  Variant variant, const StudentSpec* student) {
  config.validate();
  if (train_set.size() == 0) throw std::invalid_argument("training set is empty");
  train_set.check_compatible(model.config());
  if (val) val->check_compatible(model.config());
  if (variant == Variant::teacher_attention && !model.config().attention)
    throw std::invalid_argument("teacher-attention needs a model with attention");
  if (variant == Variant::student) {
    if (!student || !student->teacher || !student->teacher_view)
      throw std::invalid_argument("student training needs a teacher");
    student->distill.validate();
    const ModelConfig& tc = student->teacher->config();
    if (tc.answers != model.config().answers || tc.vocab != model.config().vocab)
      throw std::invalid_argument("teacher and student vocabularies differ");
    student->teacher_view->check_compatible(tc);
    if (student->teacher_view->size() != train_set.size() || student->teacher_view->labels != train_set.labels)
      throw std::invalid_argument("teacher view does not hold the training samples");
  }

  TrainResult result;
  Rng rng(derive_seed(config.seed, 1));
  Optimizer opt(config, model.params().size());
  const bool iterative = variant == Variant::student && student->distill.mode == DistillMode::iterative;
  Rng teacher_rng(derive_seed(config.seed, 2));
  std::unique_ptr<Optimizer> teacher_opt;
  if (iterative) teacher_opt = std::make_unique<Optimizer>(config, student->teacher->params().size());

  std::vector<float> soft;
  if (variant == Variant::student && !iterative) soft = predict_proba(*student->teacher, *student->teacher_view);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    double pi_t = 0.0;
    SoftLoss l2 = SoftLoss::euclidean;
    if (variant == Variant::student) {
      pi_t = student->distill.effective_pi(epoch);
      l2 = student->distill.l2;
      if (iterative) soft = predict_proba(*student->teacher, *student->teacher_view);
    }
    EpochStats s = run_epoch(model, opt, train_set, rng, pi_t > 0.0 ? soft : std::vector<float>{}, pi_t, l2,
                             config.batch);
    result.trace.push_back({epoch, "train", s.accuracy, s.loss});
    if (val) {
      Metrics m = evaluate(model, *val);
      result.trace.push_back({epoch, "val", m.accuracy, m.loss});
    }
    if (iterative && epoch < config.epochs) {
      std::vector<float> student_soft = predict_proba(model, train_set);
      EpochStats t = run_epoch(*student->teacher, *teacher_opt, *student->teacher_view, teacher_rng, student_soft,
                               student->teacher_pi, SoftLoss::euclidean, config.batch);
      result.trace.push_back({epoch, "teacher", t.accuracy, t.loss});
    }
  }
  return result;
}

GradCheckResult grad_check(RnModel<double>& model, std::span<const std::vector<double>> features,
                           std::span<const std::vector<double>> questions, std::span<const int> labels,
                           std::span<const std::vector<double>> soft, double pi, SoftLoss l2, double h,
                           double floor) {
  const std::size_t n = labels.size();
  if (n == 0 || features.size() != n || questions.size() != n) throw std::invalid_argument("grad_check batch is empty or ragged");
  if (pi > 0.0 && soft.size() != n) throw std::invalid_argument("grad_check needs soft targets when pi > 0");
  for (double p : model.params())
    if (!std::isfinite(p)) throw std::invalid_argument("grad_check needs finite parameters");
  const std::size_t a = static_cast<std::size_t>(model.config().answers);
  Workspace<double> ws;
  std::vector<double> dl(a);

  auto soft_of = [&](std::size_t i) {
    return pi > 0.0 ? std::span<const double>(soft[i]) : std::span<const double>();
  };
  // The ReLU on/off pattern of a forward pass; a central difference whose two
  // sides disagree on it straddles a kink and says nothing about the gradient.
  std::vector<bool> pattern;
  auto record = [&]() {
    for (const auto& g : ws.g)
      for (Eigen::Index k = 0; k < g.size(); ++k) pattern.push_back(g.data()[k] > 0.0);
    for (const auto& f : ws.f)
      for (Eigen::Index k = 0; k < f.size(); ++k) pattern.push_back(f[k] > 0.0);
  };
  auto loss = [&]() {
    pattern.clear();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& z = model.forward(features[i], questions[i], ws);
      record();
      total += sample_loss<double>(std::span<const double>(z.data(), a), labels[i], soft_of(i), pi, l2, dl);
    }
    return total / static_cast<double>(n);
  };

  std::vector<double> analytic(model.params().size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& z = model.forward(features[i], questions[i], ws);
    sample_loss<double>(std::span<const double>(z.data(), a), labels[i], soft_of(i), pi, l2, dl);
    for (double& d : dl) d /= static_cast<double>(n);
    model.backward(ws, questions[i], dl, analytic);
  }
  for (std::size_t i = 0; i < analytic.size(); ++i)
    if (!std::isfinite(analytic[i])) throw NonFiniteGradient(model.layout().path(i));

  GradCheckResult result;
  auto& p = model.params();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p[i];
    double numeric = 0.0;
    bool smooth = false;
    for (double step = h; step >= h * 1e-3 && !smooth; step *= 0.1) {
      p[i] = keep + step;
      const double up = loss();
      const std::vector<bool> up_pattern = pattern;
      p[i] = keep - step;
      const double down = loss();
      smooth = pattern == up_pattern;
      numeric = (up - down) / (2.0 * step);
    }
    p[i] = keep;
    if (!smooth) {
      ++result.skipped;
      continue;
    }
    const double err =
        std::abs(analytic[i] - numeric) / std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    if (err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_path = model.layout().path(i);
    }
  }
  return result;
}

namespace {

constexpr const char* kMagic = "spsl-checkpoint 1";

std::string join(const std::vector<int>& v) {
  std::string out;
  for (int x : v) out += (out.empty() ? "" : " ") + std::to_string(x);
  return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  const ModelConfig& c = model.config();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kMagic << '\n'
      << "regions " << c.regions << '\n'
      << "channels " << c.channels << '\n'
      << "vocab " << c.vocab << '\n'
      << "embed " << c.embed << '\n'
      << "g_widths " << join(c.g_widths) << '\n'
      << "f_widths " << join(c.f_widths) << '\n'
      << "answers " << c.answers << '\n'
      << "attention " << (c.attention ? 1 : 0) << '\n'
      << "mean_pool " << (c.mean_pool ? 1 : 0) << '\n';
  for (const ParamBlock& b : model.layout().blocks()) out << "block " << b.name << ' ' << b.rows << ' ' << b.cols << '\n';
  out << "params " << model.params().size() << '\n' << "end\n";
  static_assert(std::endian::native == std::endian::little, "checkpoints are little-endian");
  for (float v : model.params()) {
    double d = v;
    out.write(reinterpret_cast<const char*>(&d), sizeof d);
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw std::runtime_error(path.string() + ": not a checkpoint");
  ModelConfig c;
  std::vector<std::tuple<std::string, int, int>> blocks;
  std::size_t count = 0;
  auto ints = [](std::istringstream& ls) {
    std::vector<int> v;
    for (int x; ls >> x;) v.push_back(x);
    return v;
  };
  while (std::getline(in, line) && line != "end") {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "regions") ls >> c.regions;
    else if (key == "channels") ls >> c.channels;
    else if (key == "vocab") ls >> c.vocab;
    else if (key == "embed") ls >> c.embed;
    else if (key == "g_widths") c.g_widths = ints(ls);
    else if (key == "f_widths") c.f_widths = ints(ls);
    else if (key == "answers") ls >> c.answers;
    else if (key == "attention") { int a = 0; ls >> a; c.attention = a != 0; }
    else if (key == "mean_pool") { int a = 0; ls >> a; c.mean_pool = a != 0; }
    else if (key == "block") { std::string n; int r = 0, k = 0; ls >> n >> r >> k; blocks.emplace_back(n, r, k); }
    else if (key == "params") ls >> count;
    else throw std::runtime_error(path.string() + ": unknown manifest key '" + key + "'");
  }
  if (line != "end") throw std::runtime_error(path.string() + ": truncated manifest");
  Model model(c);
  const auto& layout = model.layout().blocks();
  if (count != model.params().size() || blocks.size() != layout.size())
    throw std::runtime_error(path.string() + ": manifest does not match the model shape");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    auto [n, r, k] = blocks[i];
    if (n != layout[i].name || r != layout[i].rows || k != layout[i].cols)
      throw std::runtime_error(path.string() + ": block " + n + " does not match the model shape");
  }
  for (float& v : model.params()) {
    double d;
    if (!in.read(reinterpret_cast<char*>(&d), sizeof d)) throw std::runtime_error(path.string() + ": truncated parameters");
    v = static_cast<float>(d);
  }
  return model;
}

void write_trace_csv(std::ostream& out, const std::vector<EpochMetrics>& trace) {
  out << "epoch,split,accuracy,loss\n";
  for (const auto& m : trace)
    out << m.epoch << ',' << m.split << ',' << std::fixed << std::setprecision(6) << m.accuracy << ',' << m.loss
        << '\n';
  out << std::defaultfloat;
}

std::vector<EpochMetrics> read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "epoch,split,accuracy,loss")
    throw std::runtime_error("trace CSV header mismatch");
  std::vector<EpochMetrics> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    EpochMetrics m;
    std::string epoch, acc, loss;
    if (!std::getline(ls, epoch, ',') || !std::getline(ls, m.split, ',') || !std::getline(ls, acc, ',') ||
        !std::getline(ls, loss))
      throw std::runtime_error("malformed trace row: " + line);
    m.epoch = std::stoi(epoch);
    m.accuracy = std::stod(acc);
    m.loss = std::stod(loss);
    out.push_back(m);
  }
  return out;
}

}  // namespace spsl::nn
