#include "spsl/harness/commands.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "spsl/grounder.hpp"
#include "spsl/rng.hpp"
#include "spsl/rule_lang.hpp"

namespace spsl::harness {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const NonConvergence*>(&e)) return kExitNonConvergence;
  if (dynamic_cast<const InputError*>(&e) || dynamic_cast<const rules::ParseError*>(&e) ||
      dynamic_cast<const ImageFormatError*>(&e) || dynamic_cast<const ground::GroundingError*>(&e) ||
      dynamic_cast<const json::exception*>(&e))
    return kExitInput;
  return kExitFailure;
}

OutputLock::OutputLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) throw InputError("output directory " + dir.string() + " is locked by another run (" + path_.string() + ")");
  ::close(fd);
}

OutputLock::~OutputLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

json read_manifest(const fs::path& path) {
  json m;
  try {
    m = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  if (m.value("schema", -1) != kManifestSchemaVersion)
    throw InputError(path.string() + ": unsupported manifest schema " + m.value("schema", json(-1)).dump());
  return m;
}

std::string scene_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d", index);
  return buf;
}

}  // namespace

void cmd_gen(const ExperimentConfig& config, const fs::path& out, std::ostream& log) {
  config.validate();
  const fs::path data = out / "data";
  fs::remove_all(data);
  const bool images = config.mode == scene::Mode::sort_of_clevr;
  const std::uint64_t scene_base = derive_seed(config.seed, 1), question_base = derive_seed(config.seed, 2);

  json manifest;
  manifest["schema"] = kManifestSchemaVersion;
  manifest["mode"] = std::string(scene::to_string(config.mode));
  manifest["seed"] = config.seed;
  manifest["questions_per_scene"] = config.questions_per_scene;
  manifest["image_size"] = config.scene.image_size;
  manifest["question_vocabulary"] = images ? qa::sort_of_clevr_vocabulary().size() : qa::clevr_lite_vocabulary().size();
  if (images) manifest["onehot_size"] = qa::kOneHotSize;
  manifest["answer_vocabulary"] = images ? json(qa::kAnswers.size()) : json(nullptr);

  const int counts[] = {config.train_scenes, config.val_scenes, config.test_scenes};
  int index = 0;
  for (std::size_t s = 0; s < kSplits.size(); ++s) {
    const fs::path dir = data / kSplits[s];
    fs::create_directories(dir);
    if (images) fs::create_directories(dir / "images");
    std::ofstream scenes_out(dir / "scenes.jsonl", std::ios::binary), questions_out(dir / "questions.jsonl", std::ios::binary);
    std::size_t n_questions = 0;
    for (int i = 0; i < counts[s]; ++i, ++index) {
      const auto u = static_cast<std::uint64_t>(index);
      scene::Scene sc = scene::generate_scene(derive_seed(scene_base, u), config.mode, config.scene, scene_id(index));
      auto qs = images ? qa::generate_questions(sc, derive_seed(question_base, u), config.questions_per_scene)
                       : qa::generate_clevr_lite_questions(sc, derive_seed(question_base, u), config.questions_per_scene);
      scenes_out << scene::to_json(sc).dump() << '\n';
      qa::write_questions_jsonl(questions_out, qs);
      n_questions += qs.size();
      if (images) save_ppm(dir / "images" / (sc.scene_id + ".ppm"), scene::render(sc));
    }
    if (!scenes_out || !questions_out) throw std::runtime_error("failed writing " + dir.string());
    manifest["splits"][kSplits[s]] = {{"scenes", counts[s]}, {"questions", n_questions}};
    log << "gen: " << kSplits[s] << " " << counts[s] << " scenes, " << n_questions << " questions\n";
  }
  write_file(data / "manifest.json", manifest.dump(2) + "\n");
}

SplitData load_split(const fs::path& out, const std::string& split) {
  const fs::path data = out / "data";
  json manifest = read_manifest(data / "manifest.json");
  if (!manifest["splits"].contains(split)) throw InputError("manifest has no split " + split);
  SplitData d;
  try {
    std::ifstream sin(data / split / "scenes.jsonl"), qin(data / split / "questions.jsonl");
    if (!sin || !qin) throw InputError("missing scene or question file for split " + split + " (run gen first)");
    d.scenes = scene::read_scenes_jsonl(sin);
    d.questions = qa::read_questions_jsonl(qin);
  } catch (const InputError&) {
    throw;
  } catch (const std::exception& e) {
    throw InputError("split " + split + ": " + e.what());
  }
  const auto& counts = manifest["splits"][split];
  if (d.scenes.size() != counts.value("scenes", std::size_t{0}) ||
      d.questions.size() != counts.value("questions", std::size_t{0}))
    throw InputError("split " + split + " does not match its manifest counts");
  return d;
}

fs::path mask_path(const fs::path& out, const std::string& split, const qa::QuestionRecord& q) {
  return out / "masks" / split / (q.scene_id + "_q" + std::to_string(q.index) + ".pgm");
}

match::MatchScore cmd_masks(const ExperimentConfig& config, const fs::path& out, std::ostream& log) {
  config.validate();
  fs::remove_all(out / "masks");
  std::vector<match::MatchOutcome> all;
  std::size_t unconverged = 0;
  json manifest;
  manifest["schema"] = kManifestSchemaVersion;
  manifest["source"] = config.masks == MaskOrigin::truth ? "truth" : "matched";
  manifest["decay_scale"] = config.mask.decay_scale;
  for (const auto& split : kSplits) {
    SplitData d = load_split(out, split);
    std::map<std::string, const scene::Scene*> by_id;
    for (const auto& s : d.scenes) by_id[s.scene_id] = &s;
    fs::create_directories(out / "masks" / split);
    std::vector<match::ReportRow> rows;
    std::vector<match::MatchOutcome> outcomes;
    for (const auto& q : d.questions) {
      auto it = by_id.find(q.scene_id);
      if (it == by_id.end()) throw InputError("question refers to unknown scene " + q.scene_id);
      const scene::Scene& sc = *it->second;
      match::ReportRow row{q.scene_id, q.index, {}, q.relevant_objects, {}};
      if (config.masks == MaskOrigin::truth) {
        row.selected = q.relevant_objects;
        row.confidences.assign(row.selected.size(), 1.0);
      } else {
        match::MatchResult r = match::match_question(q, sc, config.match);
        if (!r.report.converged) {
          ++unconverged;
          if (config.strict)
            throw NonConvergence("MAP inference did not converge for scene " + q.scene_id + " question " +
                                 std::to_string(q.index));
        }
        row.selected = r.selected_objects();
        for (const auto& id : row.selected) {
          auto col = static_cast<std::size_t>(std::find(r.object_ids.begin(), r.object_ids.end(), id) - r.object_ids.begin());
          double best = 0.0;
          for (const auto& m : r.confidence) best = std::max(best, m[col]);
          row.confidences.push_back(best);
        }
      }
      save_pgm(mask_path(out, split, q), match::to_gray(match::render_mask(sc, row.selected, config.mask)));
      outcomes.push_back({row.selected, row.relevant});
      rows.push_back(std::move(row));
    }
    match::MatchScore score = match::evaluate_matching(outcomes);
    std::ofstream csv(out / "masks" / split / "matching.csv", std::ios::binary);
    match::write_match_report(csv, rows, score);
    all.insert(all.end(), outcomes.begin(), outcomes.end());
    manifest["splits"][split] = {{"questions", d.questions.size()}, {"precision", score.precision}, {"recall", score.recall}};
    log << "masks: " << split << " " << d.questions.size() << " masks, precision " << score.precision << ", recall "
        << score.recall << "\n";
  }
  manifest["unconverged"] = unconverged;
  if (unconverged) log << "masks: " << unconverged << " solves hit the iteration cap\n";
  write_file(out / "masks" / "manifest.json", manifest.dump(2) + "\n");
  return match::evaluate_matching(all);
}

namespace {

MaskSource file_masks(const fs::path& out, const std::string& split) {
  return [out, split](const scene::Scene&, const qa::QuestionRecord& q) {
    const fs::path p = mask_path(out, split, q);
    if (!fs::exists(p)) throw InputError("missing mask " + p.string() + " (run masks first)");
    GrayImage g = load_pgm(p);
    match::MaskGrid m{g.width, g.height, std::vector<double>(g.pixels.size())};
    for (std::size_t i = 0; i < g.pixels.size(); ++i) m.values[i] = g.pixels[i] / 255.0;
    return m;
  };
}

struct Splits {
  nn::Dataset train, val, test;
};

Splits build_splits(const fs::path& out, const FeatureConfig& features, bool masked) {
  Splits s;
  nn::Dataset* targets[] = {&s.train, &s.val, &s.test};
  for (std::size_t i = 0; i < kSplits.size(); ++i) {
    SplitData d = load_split(out, kSplits[i]);
    if (!d.scenes.empty() && d.scenes.front().mode != scene::Mode::sort_of_clevr)
      throw ConfigError("data.mode", "training needs sort-of-clevr data");
    *targets[i] = build_dataset(d.scenes, d.questions, features, masked ? file_masks(out, kSplits[i]) : MaskSource{});
  }
  return s;
}

}  // namespace

TrainSummary cmd_train(const ExperimentConfig& config, const fs::path& out, std::ostream& log) {
  config.validate();
  const std::string run = config.run_name();
  const bool masked = config.variant == nn::Variant::teacher_external_mask;
  Splits data = build_splits(out, config.features, masked);

  nn::ModelConfig mc = model_for(data.train, config.model);
  mc.attention = config.variant == nn::Variant::teacher_attention;
  nn::Model model(mc);
  model.initialize(config.train.seed);

  std::optional<nn::Model> teacher;
  std::optional<nn::Dataset> teacher_view;
  nn::StudentSpec spec;
  if (config.variant == nn::Variant::student) {
    const fs::path ckpt = out / "train" / config.teacher / "model.ckpt";
    if (!fs::exists(ckpt)) throw InputError("teacher checkpoint " + ckpt.string() + " not found (train the teacher first)");
    try {
      teacher.emplace(nn::load_checkpoint(ckpt));
    } catch (const std::runtime_error& e) {
      throw InputError(e.what());
    }
    if (teacher->config().attention) {
      teacher_view = data.train;
    } else {
      teacher_view = build_splits(out, config.features, true).train;
    }
    spec.distill = config.distill;
    spec.teacher = &*teacher;
    spec.teacher_view = &*teacher_view;
    spec.teacher_pi = config.teacher_pi;
  }

  log << "train: " << run << " on " << data.train.size() << " samples, " << config.train.epochs << " epochs\n";
  nn::TrainResult result = nn::train(model, data.train, &data.val, config.train, config.variant,
                                     config.variant == nn::Variant::student ? &spec : nullptr);
  const nn::Metrics val = nn::evaluate(model, data.val), test = nn::evaluate(model, data.test);

  const fs::path dir = out / "train" / run;
  fs::remove_all(dir);
  fs::create_directories(dir);
  nn::save_checkpoint(dir / "model.ckpt", model);
  if (config.variant == nn::Variant::student && config.distill.mode == nn::DistillMode::iterative)
    nn::save_checkpoint(dir / "teacher.ckpt", *teacher);
  {
    std::ofstream trace(dir / "trace.csv", std::ios::binary);
    nn::write_trace_csv(trace, result.trace);
  }
  write_file(dir / "config.ini", format_config(config));
  json metrics;
  metrics["schema"] = kManifestSchemaVersion;
  metrics["run"] = run;
  metrics["variant"] = nn::to_string(config.variant);
  metrics["teacher"] = config.teacher;
  metrics["pi"] = config.distill.pi;
  metrics["train_seed"] = config.train.seed;
  metrics["epochs"] = config.train.epochs;
  metrics["val_accuracy"] = val.accuracy;
  metrics["test_accuracy"] = test.accuracy;
  metrics["test_loss"] = test.loss;
  write_file(dir / "metrics.json", metrics.dump(2) + "\n");
  log << "train: " << run << " val " << val.accuracy << " test " << test.accuracy << "\n";
  return {run, val.accuracy, test.accuracy};
}

std::vector<ReportLine> cmd_report(const fs::path& out, std::ostream& log) {
  const fs::path root = out / "train";
  if (!fs::is_directory(root)) throw InputError("no training runs under " + root.string());
  std::vector<fs::path> runs;
  for (const auto& e : fs::directory_iterator(root))
    if (fs::exists(e.path() / "metrics.json")) runs.push_back(e.path());
  std::sort(runs.begin(), runs.end());

  struct Run {
    std::string name, variant, teacher;
    double val, test;
  };
  std::vector<Run> all;
  for (const auto& p : runs) {
    json m = read_manifest(p / "metrics.json");
    all.push_back({m.at("run"), m.at("variant"), m.value("teacher", ""), m.at("val_accuracy"), m.at("test_accuracy")});
  }
  auto pick = [&](const std::string& variant, const std::string& teacher) -> const Run* {
    const Run* best = nullptr;
    for (const auto& r : all)
      if (r.variant == variant && (teacher.empty() || r.teacher == teacher) && (!best || r.val > best->val)) best = &r;
    return best;
  };
  const std::pair<std::string, const Run*> rows[] = {
      {"baseline", pick("baseline", "")},
      {"teacher-external", pick("teacher-external-mask", "")},
      {"teacher-attention", pick("teacher-attention", "")},
      {"student-external", pick("student", "teacher-external-mask")},
      {"student-attention", pick("student", "teacher-attention")},
  };
  std::vector<ReportLine> lines;
  const Run* base = rows[0].second;
  for (const auto& [name, r] : rows) {
    ReportLine line{name, r ? r->name : "", std::nullopt, std::nullopt};
    if (r) line.accuracy = r->test;
    if (r && base) line.delta = r->test - base->test;
    lines.push_back(line);
  }
  std::ostringstream csv;
  csv << "row,run,test_accuracy,delta\n" << std::fixed << std::setprecision(4);
  for (const auto& l : lines) {
    csv << l.row << ',' << l.run << ',';
    if (l.accuracy) csv << *l.accuracy;
    csv << ',';
    if (l.delta) csv << *l.delta;
    csv << '\n';
  }
  write_file(out / "report.csv", csv.str());
  write_report_markdown(log, lines);
  return lines;
}

void write_report_markdown(std::ostream& out, const std::vector<ReportLine>& lines) {
  out << "| model | run | test accuracy | delta vs baseline |\n|---|---|---|---|\n";
  std::ostringstream num;
  for (const auto& l : lines) {
    auto f = [](std::optional<double> v, bool sign) {
      if (!v) return std::string("n/a");
      char buf[32];
      std::snprintf(buf, sizeof buf, sign ? "%+.1f" : "%.1f", 100.0 * *v);
      return std::string(buf);
    };
    out << "| " << l.row << " | " << (l.run.empty() ? "-" : l.run) << " | " << f(l.accuracy, false) << " | "
        << f(l.delta, true) << " |\n";
  }
}

infer::SolveReport cmd_psl(const fs::path& program_path, const fs::path& evidence_path, const fs::path& out,
                           const infer::SolverConfig& solver, bool strict) {
  rules::Program program = rules::parse_program(read_file(program_path));
  rules::EvidenceSet evidence = rules::parse_evidence(read_file(evidence_path));
  ground::PotentialSet set = ground::ground(program, evidence);
  infer::MapResult r = infer::solve_map(set, solver);
  if (strict && !r.report.converged)
    throw NonConvergence("MAP inference stopped after " + std::to_string(r.report.iterations) +
                         " iterations without converging");
  std::vector<std::pair<std::string, double>> atoms;
  for (std::size_t i = 0; i < set.n_free(); ++i)
    atoms.emplace_back(rules::to_string(set.atoms().at(i)), r.interpretation[i]);
  std::sort(atoms.begin(), atoms.end());
  std::ostringstream text;
  for (const auto& [atom, value] : atoms) text << atom << ' ' << rules::format_number(value) << '\n';
  write_file(out, text.str());
  return r.report;
}

std::vector<SweepPoint> cmd_sweep(const ExperimentConfig& config, const fs::path& out, std::ostream& log) {
  config.validate();
  if (config.teacher.empty()) throw ConfigError("train.teacher", "the sweep needs a teacher run name");
  std::vector<SweepPoint> points;
  for (double pi : config.sweep_pis) {
    ExperimentConfig c = config;
    c.variant = nn::Variant::student;
    c.distill.pi = pi;
    points.push_back({pi, cmd_train(c, out, log)});
  }
  std::stable_sort(points.begin(), points.end(),
                   [](const SweepPoint& a, const SweepPoint& b) { return a.summary.val_accuracy > b.summary.val_accuracy; });
  std::ostringstream csv;
  csv << "pi,run,val_accuracy,test_accuracy\n";
  for (const auto& p : points)
    csv << rules::format_number(p.pi) << ',' << p.summary.run << ',' << std::fixed << std::setprecision(4)
        << p.summary.val_accuracy << ',' << p.summary.test_accuracy << std::defaultfloat << '\n';
  write_file(out / "sweep.csv", csv.str());
  return points;
}

}  // namespace spsl::harness
