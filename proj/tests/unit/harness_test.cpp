#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "spsl/harness/commands.hpp"

using namespace spsl;
using namespace spsl::harness;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::path(::testing::TempDir()) / ("spsl_harness_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const fs::path& p) {
  std::string s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.train_scenes = 10;
  c.val_scenes = 2;
  c.test_scenes = 2;
  c.seed = 11;
  c.train.epochs = 2;
  c.train.lr = 1e-3;
  c.train.batch = 16;
  return c;
}

std::string config_field_error(const std::string& text) {
  try {
    experiment_from(parse_config(text));
  } catch (const ConfigError& e) {
    return e.field();
  }
  ADD_FAILURE() << "accepted: " << text;
  return {};
}

}  // namespace

TEST(Config, DefaultsAndOverrides) {
  ExperimentConfig c = experiment_from(parse_config("[data]\ntrain_scenes = 5 ; five\n# comment\n[distill]\npi = 0.575\n"));
  EXPECT_EQ(c.train_scenes, 5);
  EXPECT_EQ(c.val_scenes, 200);
  EXPECT_DOUBLE_EQ(c.distill.pi, 0.575);
  EXPECT_EQ(c.run_name(), "baseline");
}

TEST(Config, FieldLevelErrors) {
  EXPECT_EQ(config_field_error("[data]\nnope = 1\n"), "data.nope");
  EXPECT_EQ(config_field_error("[data]\ntrain_scenes = 0\n"), "data.train_scenes");
  EXPECT_EQ(config_field_error("[data]\ntrain_scenes = many\n"), "data.train_scenes");
  EXPECT_EQ(config_field_error("[distill]\npi = 1.5\n"), "distill.pi");
  EXPECT_EQ(config_field_error("[train]\nvariant = wizard\n"), "train.variant");
  EXPECT_THROW(parse_config("[data]\ntrain_scenes = 1\ntrain_scenes = 2\n"), ConfigError);
  EXPECT_THROW(parse_config("[data\n"), ConfigError);
  EXPECT_THROW(parse_config("orphan line\n"), ConfigError);
}

TEST(Config, FormatRoundTrips) {
  ExperimentConfig c = small_config();
  c.variant = nn::Variant::student;
  c.teacher = "teacher-attention";
  c.distill.pi = 0.3;
  c.distill.mode = nn::DistillMode::iterative;
  c.features.encoding = QuestionEncoding::onehot;
  c.sweep_pis = {0.2, 0.575};
  c.match.w_relation = 0.25;
  const std::string text = format_config(c);
  ExperimentConfig back = experiment_from(parse_config(text));
  EXPECT_EQ(format_config(back), text);
  EXPECT_EQ(back.run_name(), "student-teacher-attention-pi0.3-iterative");
  EXPECT_EQ(back.sweep_pis, c.sweep_pis);

  const std::string defaults = format_config(ExperimentConfig{});
  EXPECT_EQ(format_config(experiment_from(parse_config(defaults))), defaults);
}

TEST(Commands, GenWritesEverySplit) {
  fs::path out = fresh_dir("gen");
  std::ostringstream log;
  cmd_gen(small_config(), out, log);
  std::size_t scenes = 0, questions = 0, images = 0;
  for (const auto& split : kSplits) {
    scenes += line_count(out / "data" / split / "scenes.jsonl");
    questions += line_count(out / "data" / split / "questions.jsonl");
    for (const auto& e : fs::directory_iterator(out / "data" / split / "images")) images += e.path().extension() == ".ppm";
  }
  EXPECT_EQ(scenes, 14u);
  EXPECT_EQ(questions, 140u);
  EXPECT_EQ(images, 14u);
  SplitData val = load_split(out, "val");
  EXPECT_EQ(val.scenes.size(), 2u);
  EXPECT_EQ(val.scenes[0].scene_id, "000010");
}

TEST(Commands, GenIsByteIdentical) {
  fs::path a = fresh_dir("gen_a"), b = fresh_dir("gen_b");
  std::ostringstream log;
  cmd_gen(small_config(), a, log);
  cmd_gen(small_config(), b, log);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    EXPECT_EQ(slurp(e.path()), slurp(b / fs::relative(e.path(), a))) << e.path();
  }
  EXPECT_GT(files, 14u);
  ExperimentConfig other = small_config();
  other.seed = 12;
  cmd_gen(other, b, log);
  EXPECT_NE(slurp(a / "data/train/scenes.jsonl"), slurp(b / "data/train/scenes.jsonl"));
}

TEST(Commands, SchemaMismatchRejected) {
  fs::path out = fresh_dir("schema");
  std::ostringstream log;
  cmd_gen(small_config(), out, log);
  std::string m = slurp(out / "data/manifest.json");
  m.replace(m.find("\"schema\": 1"), 11, "\"schema\": 9");
  std::ofstream(out / "data/manifest.json") << m;
  EXPECT_THROW(load_split(out, "train"), InputError);
  EXPECT_THROW(load_split(fresh_dir("empty"), "train"), InputError);
}

TEST(Commands, TruncatedSplitRejected) {
  fs::path out = fresh_dir("truncated");
  std::ostringstream log;
  cmd_gen(small_config(), out, log);
  std::ofstream(out / "data/test/questions.jsonl", std::ios::trunc) << "";
  EXPECT_THROW(load_split(out, "test"), InputError);
}

TEST(Commands, MasksFromTruthScorePerfectly) {
  fs::path out = fresh_dir("masks");
  ExperimentConfig c = small_config();
  c.masks = MaskOrigin::truth;
  std::ostringstream log;
  cmd_gen(c, out, log);
  match::MatchScore s = cmd_masks(c, out, log);
  EXPECT_DOUBLE_EQ(s.precision, 1.0);
  EXPECT_DOUBLE_EQ(s.recall, 1.0);
  SplitData d = load_split(out, "test");
  EXPECT_TRUE(fs::exists(mask_path(out, "test", d.questions.back())));
  EXPECT_EQ(line_count(out / "masks/train/matching.csv") > 100u, true);
}

TEST(Commands, StrictModeRaisesNonConvergence) {
  fs::path out = fresh_dir("strict");
  ExperimentConfig c = small_config();
  c.train_scenes = 1;
  c.val_scenes = c.test_scenes = 1;
  c.strict = true;
  c.match.solver.max_iters = 1;
  c.match.solver.patience = 1;
  std::ostringstream log;
  cmd_gen(c, out, log);
  try {
    cmd_masks(c, out, log);
    FAIL() << "expected NonConvergence";
  } catch (const NonConvergence& e) {
    EXPECT_EQ(exit_code_for(e), kExitNonConvergence);
  }
}

TEST(Commands, ReportDeltaIsZeroWhenStudentMatchesBaseline) {
  fs::path out = fresh_dir("report");
  ExperimentConfig c = small_config();
  c.masks = MaskOrigin::truth;
  std::ostringstream log;
  cmd_gen(c, out, log);
  cmd_masks(c, out, log);
  TrainSummary base = cmd_train(c, out, log);
  c.variant = nn::Variant::teacher_external_mask;
  cmd_train(c, out, log);
  c.variant = nn::Variant::student;
  c.teacher = "teacher-external-mask";
  c.distill.pi = 0.0;
  TrainSummary student = cmd_train(c, out, log);
  EXPECT_EQ(student.test_accuracy, base.test_accuracy);
  EXPECT_EQ(slurp(out / "train/baseline/model.ckpt"), slurp(out / "train" / student.run / "model.ckpt"));

  auto lines = cmd_report(out, log);
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0].row, "baseline");
  EXPECT_EQ(*lines[0].delta, 0.0);
  EXPECT_EQ(lines[3].run, student.run);
  EXPECT_EQ(*lines[3].delta, 0.0);
  EXPECT_FALSE(lines[4].accuracy.has_value());
  EXPECT_NE(slurp(out / "report.csv").find("student-attention,,,"), std::string::npos);
}

TEST(Commands, StudentNeedsTeacherCheckpoint) {
  fs::path out = fresh_dir("no_teacher");
  ExperimentConfig c = small_config();
  std::ostringstream log;
  cmd_gen(c, out, log);
  c.variant = nn::Variant::student;
  c.teacher = "teacher-attention";
  EXPECT_THROW(cmd_train(c, out, log), InputError);
}

TEST(Commands, PslSolvesWeightedFixture) {
  fs::path dir = fresh_dir("psl");
  fs::create_directories(dir);
  std::ofstream(dir / "f.psl") << "predicate y() open.\n2: y().\n1: !y().\n";
  std::ofstream(dir / "f.evd") << "";
  auto r = cmd_psl(dir / "f.psl", dir / "f.evd", dir / "interp.txt", {}, false);
  EXPECT_NEAR(r.objective, 1.0, 1e-3);
  EXPECT_EQ(slurp(dir / "interp.txt"), "y() 1\n");

  std::ofstream(dir / "bad.psl") << "predicate y() open.\n2: y(.\n";
  try {
    cmd_psl(dir / "bad.psl", dir / "f.evd", dir / "x.txt", {}, false);
    FAIL();
  } catch (const std::exception& e) {
    EXPECT_EQ(exit_code_for(e), kExitInput);
  }
  EXPECT_THROW(cmd_psl(dir / "missing.psl", dir / "f.evd", dir / "x.txt", {}, false), InputError);
}

TEST(Commands, PslOutputIsSorted) {
  fs::path dir = fresh_dir("psl_sorted");
  fs::create_directories(dir);
  std::ofstream(dir / "p.psl") << "predicate e(t) closed.\npredicate y(t) open.\n1: y(X) <- e(X).\n";
  std::ofstream(dir / "p.evd") << "e(c) = 1\ne(a) = 1\ne(b) = 0.5\n";
  cmd_psl(dir / "p.psl", dir / "p.evd", dir / "out.txt", {}, false);
  std::istringstream in(slurp(dir / "out.txt"));
  std::vector<std::string> atoms;
  for (std::string a, v; in >> a >> v;) atoms.push_back(a);
  EXPECT_TRUE(std::is_sorted(atoms.begin(), atoms.end()));
  EXPECT_GE(atoms.size(), 2u);
}

TEST(Commands, OutputLockIsExclusive) {
  fs::path dir = fresh_dir("lock");
  {
    OutputLock first(dir);
    EXPECT_THROW(OutputLock second(dir), InputError);
  }
  EXPECT_NO_THROW(OutputLock again(dir));
}

TEST(Commands, ExitCodesPerErrorClass) {
  EXPECT_EQ(exit_code_for(ConfigError("data.seed", "bad")), kExitConfig);
  EXPECT_EQ(exit_code_for(InputError("x")), kExitInput);
  EXPECT_EQ(exit_code_for(NonConvergence("x")), kExitNonConvergence);
  EXPECT_EQ(exit_code_for(std::runtime_error("x")), kExitFailure);
}
