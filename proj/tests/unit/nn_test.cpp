#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "spsl/harness/pipeline.hpp"
#include "spsl/nn/tensor.hpp"
#include "spsl/nn/train.hpp"
#include "spsl/rng.hpp"
#include "support/nn_fixtures.hpp"

using namespace spsl;
using namespace spsl::nn;
using spsl::testing::jitter;
using spsl::testing::random_batch;
using spsl::testing::random_vector;
using spsl::testing::tiny_config;

namespace {

// Plain loops over the named blocks; independent of the Eigen path.
struct Naive {
  const RnModel<double>& m;

  double w(const std::string& name, int r, int c) const {
    const ParamBlock& b = m.layout().block(name);
    return m.params()[b.offset + static_cast<std::size_t>(r * b.cols + c)];
  }

  std::vector<double> layer(const std::string& name, const std::vector<double>& in, bool relu) const {
    const ParamBlock& b = m.layout().block(name + ".w");
    std::vector<double> out(static_cast<std::size_t>(b.rows));
    for (int r = 0; r < b.rows; ++r) {
      double s = w(name + ".bias", r, 0);
      for (int c = 0; c < b.cols; ++c) s += w(name + ".w", r, c) * in[static_cast<std::size_t>(c)];
      out[static_cast<std::size_t>(r)] = relu ? std::max(0.0, s) : s;
    }
    return out;
  }

  std::vector<double> embed(const std::vector<double>& question) const {
    const auto& c = m.config();
    std::vector<double> q(static_cast<std::size_t>(c.embed), 0.0);
    for (int t = 0; t < c.vocab; ++t)
      for (int d = 0; d < c.embed; ++d) q[static_cast<std::size_t>(d)] += question[static_cast<std::size_t>(t)] * w("embedding", t, d);
    return q;
  }

  std::vector<double> alpha(const std::vector<double>& feat, const std::vector<double>& q) const {
    const auto& c = m.config();
    std::vector<double> v(static_cast<std::size_t>(c.regions));
    double z = 0.0;
    for (int r = 0; r < c.regions; ++r) {
      double s = w("att.bias", r, 0);
      for (std::size_t k = 0; k < feat.size(); ++k) s += w("att.w_image", r, static_cast<int>(k)) * feat[k];
      for (int d = 0; d < c.embed; ++d) s += w("att.w_question", r, d) * q[static_cast<std::size_t>(d)];
      v[static_cast<std::size_t>(r)] = std::exp(std::tanh(s));
      z += v[static_cast<std::size_t>(r)];
    }
    for (double& x : v) x /= z;
    return v;
  }

  std::vector<double> logits(std::vector<double> feat, const std::vector<double>& question) const {
    const auto& c = m.config();
    const auto q = embed(question);
    const auto C = static_cast<std::size_t>(c.channels);
    if (c.attention) {
      auto a = alpha(feat, q);
      for (std::size_t r = 0; r < a.size(); ++r)
        for (std::size_t k = 0; k < C; ++k) feat[r * C + k] *= a[r];
    }
    std::vector<double> pooled(static_cast<std::size_t>(c.g_widths.back()), 0.0);
    for (int i = 0; i < c.regions; ++i) {
      for (int j = 0; j < c.regions; ++j) {
        std::vector<double> h(static_cast<std::size_t>(c.g_widths[0]));
        for (int u = 0; u < c.g_widths[0]; ++u) {
          double s = w("g1.bias", u, 0);
          for (int k = 0; k < c.channels; ++k) {
            s += w("g1.a", u, k) * feat[static_cast<std::size_t>(i) * C + static_cast<std::size_t>(k)];
            s += w("g1.b", u, k) * feat[static_cast<std::size_t>(j) * C + static_cast<std::size_t>(k)];
          }
          for (int d = 0; d < c.embed; ++d) s += w("g1.q", u, d) * q[static_cast<std::size_t>(d)];
          h[static_cast<std::size_t>(u)] = std::max(0.0, s);
        }
        for (int k = 2; k <= 4; ++k) h = layer("g" + std::to_string(k), h, true);
        for (std::size_t u = 0; u < h.size(); ++u) pooled[u] += h[u];
      }
    }
    if (c.mean_pool)
      for (double& x : pooled) x /= static_cast<double>(c.regions * c.regions);
    auto h = pooled;
    for (int k = 1; k <= 3; ++k) h = layer("f" + std::to_string(k), h, true);
    return layer("f4", h, false);
  }
};

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

TEST(Features, UniformGrayShareColors) {
  RgbImage img(64, 64, {100, 100, 100});
  auto f = extract_object_features(img, 8);
  ASSERT_EQ(f.shape, (std::vector<std::size_t>{64, 5}));
  for (std::size_t r = 0; r < 64; ++r) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(f.at(r, c), 100.0 / 255.0);
    EXPECT_DOUBLE_EQ(f.at(r, 3), (static_cast<double>(r % 8) + 0.5) / 8.0);
    EXPECT_DOUBLE_EQ(f.at(r, 4), (static_cast<double>(r / 8) + 0.5) / 8.0);
  }
}

TEST(Features, ZeroMaskBlanksColorsOnly) {
  auto s = scene::generate_scene(42, scene::Mode::sort_of_clevr);
  RgbImage img = scene::render(s);
  match::MaskGrid zero{64, 64, std::vector<double>(64 * 64, 0.0)};
  auto plain = extract_object_features(img, 4);
  auto masked = extract_object_features(img, 4, &zero);
  for (std::size_t r = 0; r < 16; ++r) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(masked.at(r, c), 0.0);
    EXPECT_EQ(masked.at(r, 3), plain.at(r, 3));
    EXPECT_EQ(masked.at(r, 4), plain.at(r, 4));
  }
}

TEST(Features, GridMustDivideImage) {
  RgbImage img(64, 64);
  EXPECT_THROW(extract_object_features(img, 5), std::invalid_argument);
  EXPECT_THROW(extract_object_features(img, 0), std::invalid_argument);
  EXPECT_NO_THROW(extract_object_features(img, 64));
}

TEST(Features, Seed42MatchesGolden) {
  std::ifstream jin(std::string(SPSL_GOLDEN_DIR) + "/seed42_scene.json");
  nlohmann::json j;
  jin >> j;
  auto f = extract_object_features(scene::render(scene::scene_from_json(j)), 8);
  std::ifstream in(std::string(SPSL_GOLDEN_DIR) + "/seed42_features_g8.txt");
  ASSERT_TRUE(in);
  std::vector<double> golden;
  for (double v; in >> v;) golden.push_back(v);
  ASSERT_EQ(golden.size(), f.size());
  for (std::size_t i = 0; i < golden.size(); ++i) EXPECT_NEAR(f.data[i], golden[i], 1e-12) << i;
}

TEST(TensorGrid, SizeIsProductOfShape) {
  TensorGrid t({3, 4, 2});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(TensorGrid({0, 5}).size(), 0u);
}

TEST(RnForward, HandComputedUnitWidths) {
  ModelConfig c;
  c.regions = 2;
  c.channels = 1;
  c.vocab = 1;
  c.embed = 1;
  c.g_widths = {1, 1, 1, 1};
  c.f_widths = {1, 1, 1};
  c.answers = 2;
  RnModel<double> m(c);
  std::fill(m.params().begin(), m.params().end(), 1.0);
  for (const auto& b : m.layout().blocks())
    if (b.name.ends_with(".bias")) std::fill_n(m.params().begin() + static_cast<std::ptrdiff_t>(b.offset), b.size(), 0.0);
  m.params()[m.layout().block("f4.w").offset + 1] = -1.0;
  // g1 over pairs of {1, 2} plus q = 1 gives 3, 4, 4, 5; identities after.
  Workspace<double> ws;
  std::vector<double> feat{1.0, 2.0}, q{1.0};
  auto z = m.forward(feat, q, ws);
  EXPECT_DOUBLE_EQ(z[0], 16.0);
  EXPECT_DOUBLE_EQ(z[1], -16.0);
  RnModel<double> mean(ModelConfig{c.regions, c.channels, c.vocab, c.embed, c.g_widths, c.f_widths, c.answers, false, true});
  mean.params() = m.params();
  z = mean.forward(feat, q, ws);
  EXPECT_DOUBLE_EQ(z[0], 4.0);
}

TEST(RnForward, MatchesNaiveRecomputation) {
  for (bool att : {false, true}) {
    RnModel<double> m(tiny_config(att));
    m.initialize(11);
    jitter(m, 3);
    Rng rng(3);
    Workspace<double> ws;
    auto feat = random_vector(rng, 20, 0, 1), q = random_vector(rng, 5, 0, 1);
    auto got = to_vec(m.forward(feat, q, ws));
    auto want = Naive{m}.logits(feat, q);
    for (std::size_t k = 0; k < want.size(); ++k) EXPECT_NEAR(got[k], want[k], 1e-12);
  }
}

TEST(RnForward, SingleRegionIsOnePair) {
  ModelConfig c = tiny_config(false);
  c.regions = 1;
  RnModel<double> m(c);
  m.initialize(4);
  Rng rng(9);
  auto feat = random_vector(rng, 5, 0, 1), q = random_vector(rng, 5, 0, 1);
  Workspace<double> ws;
  auto got = to_vec(m.forward(feat, q, ws));
  EXPECT_EQ(ws.g[0].rows(), 1);
  auto want = Naive{m}.logits(feat, q);
  for (std::size_t k = 0; k < want.size(); ++k) EXPECT_NEAR(got[k], want[k], 1e-12);
}

TEST(RnForward, RejectsShapeMismatch) {
  RnModel<double> m(tiny_config(false));
  Workspace<double> ws;
  std::vector<double> feat(19), q(5);
  EXPECT_THROW(m.forward(feat, q, ws), std::invalid_argument);
  feat.resize(20);
  q.resize(6);
  EXPECT_THROW(m.forward(feat, q, ws), std::invalid_argument);
  ModelConfig bad = tiny_config(false);
  bad.g_widths = {6, 6};
  EXPECT_THROW(RnModel<double>{bad}, std::invalid_argument);
}

TEST(RnForwardProperty, PermutationInvariantOverRegions) {
  ModelConfig c = tiny_config(false);
  c.regions = 16;
  RnModel<double> m(c);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    m.initialize(seed);
    Rng rng(seed + 100);
    auto feat = random_vector(rng, 80, 0, 1), q = random_vector(rng, 5, 0, 1);
    std::vector<std::size_t> perm(16);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    shuffle(rng, perm.begin(), perm.end());
    std::vector<double> permuted(80);
    for (std::size_t r = 0; r < 16; ++r)
      for (std::size_t k = 0; k < 5; ++k) permuted[r * 5 + k] = feat[perm[r] * 5 + k];
    Workspace<double> ws;
    auto a = to_vec(m.forward(feat, q, ws));
    auto b = to_vec(m.forward(permuted, q, ws));
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-9);
  }
}

TEST(Attention, ZeroWeightsGiveUniformAlpha) {
  ModelConfig c = tiny_config(true);
  c.regions = 64;
  RnModel<double> m(c);
  m.initialize(1);
  for (const char* n : {"att.w_image", "att.w_question", "att.bias"}) {
    const auto& b = m.layout().block(n);
    std::fill_n(m.params().begin() + static_cast<std::ptrdiff_t>(b.offset), b.size(), 0.0);
  }
  Rng rng(2);
  Eigen::MatrixXd f = Eigen::MatrixXd::Random(64, 5);
  RnModel<double>::Mat feat = f;
  auto [alpha, attended] = m.attend(feat, m.embed(random_vector(rng, 5)));
  for (Eigen::Index r = 0; r < 64; ++r) EXPECT_DOUBLE_EQ(alpha[r], 1.0 / 64.0);
  EXPECT_NEAR((attended - feat / 64.0).cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(Attention, SoftmaxShiftInvariant) {
  Eigen::VectorXd v(4);
  v << 0.3, -0.2, 0.9, 0.0;
  Eigen::VectorXd shifted = (v.array() + 7.5).matrix();
  EXPECT_LE((softmax<double>(v) - softmax<double>(shifted)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Attention, RandomFixtureMatchesRecomputation) {
  RnModel<double> m(tiny_config(true));
  m.initialize(21);
  Rng rng(8);
  auto feat = random_vector(rng, 20, 0, 1), question = random_vector(rng, 5, 0, 1);
  Workspace<double> ws;
  m.forward(feat, question, ws);
  auto want = Naive{m}.alpha(feat, Naive{m}.embed(question));
  for (std::size_t r = 0; r < want.size(); ++r) EXPECT_NEAR(ws.alpha[static_cast<Eigen::Index>(r)], want[r], 1e-14);
}

TEST(AttentionProperty, AlphaOnSimplex) {
  ModelConfig c = tiny_config(true);
  c.regions = 16;
  RnModel<double> m(c);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    m.initialize(seed);
    Rng rng(seed);
    for (double& p : m.params()) p *= 1.0 + 4.0 * uniform01(rng);
    Workspace<double> ws;
    m.forward(random_vector(rng, 80, 0, 1), random_vector(rng, 5, 0, 1), ws);
    EXPECT_NEAR(ws.alpha.sum(), 1.0, 1e-9);
    EXPECT_GE(ws.alpha.minCoeff(), 0.0);
  }
}

TEST(DistillLoss, PiZeroIsCrossEntropy) {
  std::vector<double> logits{1.0, -0.5, 2.0, 0.25, 0.0, 0.0};
  std::vector<int> labels{2, 1};
  std::vector<double> soft{0.2, 0.3, 0.5, 0.6, 0.3, 0.1};
  DistillConfig c;
  c.pi = 0.0;
  double ce = 0.0;
  for (int i = 0; i < 2; ++i) {
    double z = 0.0;
    for (int k = 0; k < 3; ++k) z += std::exp(logits[static_cast<std::size_t>(3 * i + k)]);
    ce += std::log(z) - logits[static_cast<std::size_t>(3 * i + labels[static_cast<std::size_t>(i)])];
  }
  EXPECT_NEAR(distill_loss(labels, soft, logits, c, 1), ce / 2.0, 1e-15);
  EXPECT_EQ(distill_loss(labels, {}, logits, c, 1), distill_loss(labels, soft, logits, c, 1));
}

TEST(DistillLoss, PiOneEuclideanSelfTargetIsZero) {
  Eigen::VectorXd z(4);
  z << 0.3, 1.2, -2.0, 0.7;
  Eigen::VectorXd p = softmax<double>(z);
  DistillConfig c;
  c.pi = 1.0;
  c.l2 = SoftLoss::euclidean;
  std::vector<int> labels{0};
  EXPECT_EQ(distill_loss(labels, to_vec(p), to_vec(z), c, 3), 0.0);
}

TEST(DistillLoss, CrossEntropySoftTermWorkedValue) {
  // pi = 0.5, two classes, logits 0 -> p = (0.5, 0.5); both terms are log 2.
  DistillConfig c;
  c.pi = 0.5;
  c.l2 = SoftLoss::cross_entropy;
  std::vector<int> labels{1};
  std::vector<double> soft{0.9, 0.1}, logits{0.0, 0.0};
  EXPECT_NEAR(distill_loss(labels, soft, logits, c, 1), std::log(2.0), 1e-15);
  c.l2 = SoftLoss::euclidean;  // 0.5 * log 2 + 0.5 * (0.4^2 + 0.4^2)
  EXPECT_NEAR(distill_loss(labels, soft, logits, c, 1), 0.5 * std::log(2.0) + 0.16, 1e-15);
}

TEST(DistillLoss, AnnealedSchedule) {
  DistillConfig c;
  c.pi = 0.9;
  c.schedule = Schedule::annealed;
  EXPECT_NEAR(c.effective_pi(1), 0.1, 1e-15);
  EXPECT_NEAR(c.effective_pi(2), 0.19, 1e-15);
  EXPECT_EQ(c.effective_pi(200), 0.9);
  c.schedule = Schedule::fixed;
  EXPECT_EQ(c.effective_pi(1), 0.9);
  EXPECT_THROW(c.effective_pi(0), std::invalid_argument);
}

TEST(DistillLoss, RejectsInvalidInputs) {
  DistillConfig c;
  c.pi = 0.5;
  c.l2 = SoftLoss::cross_entropy;
  std::vector<int> labels{0};
  std::vector<double> logits{0.0, 1.0};
  EXPECT_THROW(distill_loss(labels, std::vector<double>{0.7, 0.7}, logits, c, 1), std::invalid_argument);
  EXPECT_THROW(distill_loss(labels, std::vector<double>{1.2, -0.2}, logits, c, 1), std::invalid_argument);
  EXPECT_THROW(distill_loss(std::vector<int>{2}, std::vector<double>{0.5, 0.5}, logits, c, 1), std::invalid_argument);
  c.pi = 1.5;
  EXPECT_THROW(distill_loss(labels, std::vector<double>{0.5, 0.5}, logits, c, 1), std::invalid_argument);
}

TEST(Backward, TinyModelsStayUnderFiveHundredParameters) {
  EXPECT_LE(ParamLayout(tiny_config(false)).total(), 500u);
  EXPECT_LE(ParamLayout(tiny_config(true)).total(), 500u);
  EXPECT_EQ(ParamLayout(tiny_config(true)).total(), 448u);
}

TEST(BackwardProperty, GradCheckRelationNetwork) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ModelConfig c = tiny_config(false);
    c.mean_pool = seed % 2 == 0;
    RnModel<double> m(c);
    m.initialize(seed);
    jitter(m, seed);
    auto b = random_batch(m.config(), seed + 500, 3);
    auto r = grad_check(m, b.features, b.questions, b.labels);
    EXPECT_LT(r.max_rel_error, 1e-4) << seed << " " << r.worst_path;
    EXPECT_LE(r.skipped, 2u) << seed;
  }
}

TEST(BackwardProperty, GradCheckAttentionPath) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RnModel<double> m(tiny_config(true));
    m.initialize(seed);
    jitter(m, seed);
    auto b = random_batch(m.config(), seed + 900, 3);
    auto r = grad_check(m, b.features, b.questions, b.labels);
    EXPECT_LT(r.max_rel_error, 1e-4) << seed << " " << r.worst_path;
  }
}

TEST(BackwardProperty, GradCheckDistillationTerms) {
  for (SoftLoss l2 : {SoftLoss::euclidean, SoftLoss::cross_entropy}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      ModelConfig c = tiny_config(true);
      c.mean_pool = seed % 2 == 0;
      RnModel<double> m(c);
      m.initialize(seed + 40);
      jitter(m, seed);
      auto b = random_batch(m.config(), seed + 77, 3);
      auto r = grad_check(m, b.features, b.questions, b.labels, b.soft, 0.6, l2);
      EXPECT_LT(r.max_rel_error, 1e-4) << seed << " " << r.worst_path;
    }
  }
}

TEST(Backward, ZeroModelTiedBiasGradients) {
  RnModel<double> m(tiny_config(false));
  std::vector<double> feat(20, 0.5), q(5, 0.2), grad(m.params().size(), 0.0);
  Workspace<double> ws;
  const auto& z = m.forward(feat, q, ws);
  std::vector<double> dl(3);
  sample_loss<double>(std::span<const double>(z.data(), 3), 1, {}, 0.0, SoftLoss::euclidean, dl);
  m.backward(ws, q, dl, grad);
  const auto& fb = m.layout().block("f4.bias");
  EXPECT_DOUBLE_EQ(grad[fb.offset + 0], grad[fb.offset + 2]);
  EXPECT_DOUBLE_EQ(grad[fb.offset + 0], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(grad[fb.offset + 1], 1.0 / 3.0 - 1.0);
  const auto& gb = m.layout().block("g1.bias");
  for (int u = 1; u < gb.rows; ++u) EXPECT_EQ(grad[gb.offset + static_cast<std::size_t>(u)], grad[gb.offset]);
}

TEST(Backward, NonFiniteGradientNamesParameter) {
  RnModel<double> m(tiny_config(false));
  m.initialize(1);
  auto b = random_batch(m.config(), 1, 1);
  m.params()[m.layout().block("f2.w").offset + 3] = std::nan("");
  EXPECT_THROW(grad_check(m, b.features, b.questions, b.labels), std::invalid_argument);

  Dataset d;
  d.regions = 4;
  d.channels = 5;
  d.vocab = 5;
  d.answers = 3;
  d.add(b.features[0], b.questions[0], b.labels[0]);
  Model fm(tiny_config(false));
  fm.initialize(1);
  fm.params()[fm.layout().block("f1.bias").offset] = std::numeric_limits<float>::infinity();
  TrainConfig tc;
  tc.epochs = 1;
  try {
    train(fm, d, nullptr, tc, Variant::baseline);
    FAIL() << "expected NonFiniteGradient";
  } catch (const NonFiniteGradient& e) {
    EXPECT_NE(e.path().find('['), std::string::npos);
  }
}

namespace {

struct SmallData {
  Dataset plain, masked;
};

const SmallData& small_data() {
  static const SmallData data = [] {
    std::vector<scene::Scene> scenes;
    std::vector<qa::QuestionRecord> questions;
    for (int i = 0; i < 5; ++i) {
      scenes.push_back(scene::generate_scene(derive_seed(70, static_cast<std::uint64_t>(i)), scene::Mode::sort_of_clevr, {},
                                             "s" + std::to_string(i)));
      auto q = qa::generate_questions(scenes.back(), derive_seed(71, static_cast<std::uint64_t>(i)));
      questions.insert(questions.end(), q.begin(), q.end());
    }
    harness::FeatureConfig fc;
    fc.grid = 4;
    harness::MaskSource truth = [](const scene::Scene& s, const qa::QuestionRecord& q) {
      return match::render_mask(s, q.relevant_objects, {});
    };
    return SmallData{harness::build_dataset(scenes, questions, fc), harness::build_dataset(scenes, questions, fc, truth)};
  }();
  return data;
}

ModelConfig small_model(const Dataset& d) { return harness::model_for(d, ModelConfig{}); }

TrainConfig small_train(int epochs) {
  TrainConfig tc;
  tc.lr = 1e-3;
  tc.batch = 10;
  tc.epochs = epochs;
  tc.seed = 3;
  return tc;
}

int first_epoch_reaching(const std::vector<EpochMetrics>& trace, double threshold) {
  for (const auto& m : trace)
    if (m.split == "train" && m.accuracy >= threshold) return m.epoch;
  return -1;
}

}  // namespace

TEST(Train, OverfitsFiftySamples) {
  const auto& d = small_data().plain;
  ASSERT_EQ(d.size(), 50u);
  Model m(small_model(d));
  m.initialize(5);
  auto r = train(m, d, nullptr, small_train(200), Variant::baseline);
  EXPECT_GE(evaluate(m, d).accuracy, 0.95);
  EXPECT_EQ(r.trace.size(), 200u);
}

TEST(Train, MaskedTeacherFitsNoSlowerThanBaseline) {
  // Paired runs (same init and shuffle seed per pair), compared on the mean
  // epoch at which train accuracy first reaches 0.95.
  const auto& data = small_data();
  double base_total = 0.0, teacher_total = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    Model base(small_model(data.plain)), teacher(small_model(data.masked));
    base.initialize(seed);
    teacher.initialize(seed);
    auto tc = small_train(200);
    tc.seed = seed;
    int eb = first_epoch_reaching(train(base, data.plain, nullptr, tc, Variant::baseline).trace, 0.95);
    int et = first_epoch_reaching(train(teacher, data.masked, nullptr, tc, Variant::teacher_external_mask).trace, 0.95);
    ASSERT_GT(et, 0) << seed;
    ASSERT_GT(eb, 0) << seed;
    base_total += eb;
    teacher_total += et;
  }
  EXPECT_LE(teacher_total, base_total);
}

TEST(Train, StudentWithPiZeroReproducesBaseline) {
  const auto& data = small_data();
  Model teacher(small_model(data.masked));
  teacher.initialize(9);
  train(teacher, data.masked, nullptr, small_train(3), Variant::teacher_external_mask);

  Model base(small_model(data.plain)), student(small_model(data.plain));
  base.initialize(5);
  student.initialize(5);
  StudentSpec spec;
  spec.distill.pi = 0.0;
  spec.teacher = &teacher;
  spec.teacher_view = &data.masked;
  auto rb = train(base, data.plain, &data.plain, small_train(5), Variant::baseline);
  auto rs = train(student, data.plain, &data.plain, small_train(5), Variant::student, &spec);
  ASSERT_EQ(rb.trace.size(), rs.trace.size());
  for (std::size_t i = 0; i < rb.trace.size(); ++i) {
    EXPECT_EQ(rb.trace[i].loss, rs.trace[i].loss);
    EXPECT_EQ(rb.trace[i].accuracy, rs.trace[i].accuracy);
  }
  EXPECT_EQ(base.params(), student.params());
}

TEST(Train, DeterministicGivenSeed) {
  const auto& d = small_data().plain;
  Model a(small_model(d)), b(small_model(d));
  a.initialize(1);
  b.initialize(1);
  train(a, d, nullptr, small_train(3), Variant::baseline);
  train(b, d, nullptr, small_train(3), Variant::baseline);
  EXPECT_EQ(a.params(), b.params());
  Model c(small_model(d));
  c.initialize(1);
  auto tc = small_train(3);
  tc.seed = 4;
  train(c, d, nullptr, tc, Variant::baseline);
  EXPECT_NE(a.params(), c.params());
}

TEST(Train, IterativeModeUpdatesTeacher) {
  const auto& data = small_data();
  Model teacher(small_model(data.masked)), student(small_model(data.plain));
  teacher.initialize(2);
  student.initialize(3);
  const auto before = teacher.params();
  StudentSpec spec;
  spec.distill.pi = 0.9;
  spec.distill.mode = DistillMode::iterative;
  spec.teacher = &teacher;
  spec.teacher_view = &data.masked;
  auto r = train(student, data.plain, nullptr, small_train(3), Variant::student, &spec);
  std::size_t teacher_rows = 0;
  for (const auto& m : r.trace) teacher_rows += m.split == "teacher";
  EXPECT_EQ(teacher_rows, 2u);
  EXPECT_NE(teacher.params(), before);
}

TEST(Train, RejectsBadSetups) {
  const auto& data = small_data();
  Model m(small_model(data.plain));
  m.initialize(1);
  EXPECT_THROW(train(m, data.plain, nullptr, small_train(1), Variant::student), std::invalid_argument);
  EXPECT_THROW(train(m, data.plain, nullptr, small_train(1), Variant::teacher_attention), std::invalid_argument);
  ModelConfig other = small_model(data.plain);
  other.answers = 5;
  other.vocab = 36;
  Model teacher(other);
  StudentSpec spec;
  spec.teacher = &teacher;
  spec.teacher_view = &data.masked;
  EXPECT_THROW(train(m, data.plain, nullptr, small_train(1), Variant::student, &spec), std::invalid_argument);
  TrainConfig bad = small_train(1);
  bad.lr = 0.0;
  EXPECT_THROW(train(m, data.plain, nullptr, bad, Variant::baseline), std::invalid_argument);
  bad = small_train(1);
  bad.batch = 0;
  EXPECT_THROW(train(m, data.plain, nullptr, bad, Variant::baseline), std::invalid_argument);
  EXPECT_THROW(train(m, Dataset{}, nullptr, small_train(1), Variant::baseline), std::invalid_argument);
}

TEST(Train, SgdStepMovesAgainstGradient) {
  const auto& d = small_data().plain;
  Model m(small_model(d));
  m.initialize(1);
  auto tc = small_train(1);
  tc.optimizer = OptimizerKind::sgd;
  tc.batch = static_cast<int>(d.size());
  tc.lr = 1e-6;
  double before = evaluate(m, d).loss;
  train(m, d, nullptr, tc, Variant::baseline);
  EXPECT_LT(evaluate(m, d).loss, before);
}

TEST(Checkpoint, RoundTripsExactly) {
  Model m(tiny_config(true));
  m.initialize(17);
  auto path = std::filesystem::temp_directory_path() / "spsl_ckpt_test.bin";
  save_checkpoint(path, m);
  Model back = load_checkpoint(path);
  EXPECT_EQ(back.config(), m.config());
  EXPECT_EQ(back.params(), m.params());

  std::ifstream in(path, std::ios::binary);
  std::string first;
  std::getline(in, first);
  EXPECT_EQ(first, "spsl-checkpoint 1");
  in.close();
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 8);
  EXPECT_THROW(load_checkpoint(path), std::runtime_error);
  std::filesystem::remove(path);
}

TEST(TraceCsv, RoundTrips) {
  std::vector<EpochMetrics> trace{{1, "train", 0.5, 1.25}, {1, "val", 0.25, 2.0}};
  std::stringstream ss;
  write_trace_csv(ss, trace);
  EXPECT_EQ(ss.str(), "epoch,split,accuracy,loss\n1,train,0.500000,1.250000\n1,val,0.250000,2.000000\n");
  auto back = read_trace_csv(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].split, "val");
  EXPECT_EQ(back[0].loss, 1.25);
  std::stringstream bad("epoch,acc\n");
  EXPECT_THROW(read_trace_csv(bad), std::runtime_error);
}

TEST(Pipeline, DatasetShapesAndLabels) {
  const auto& d = small_data().plain;
  EXPECT_EQ(d.regions, 16);
  EXPECT_EQ(d.channels, 5);
  EXPECT_EQ(d.vocab, 30);
  EXPECT_EQ(d.answers, 12);
  EXPECT_EQ(d.features.size(), 50u * 80u);
  auto clevr = scene::generate_scene(1, scene::Mode::clevr_lite);
  EXPECT_THROW(harness::build_dataset({clevr}, {}, {}), std::invalid_argument);
}
