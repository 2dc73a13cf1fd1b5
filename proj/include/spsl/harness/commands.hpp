#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spsl/harness/config.hpp"

namespace spsl::harness {

/// Missing, malformed or mismatched input files.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A MAP solve hit its iteration cap while strict mode was on.
class NonConvergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum ExitCode { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitInput = 3, kExitNonConvergence = 4 };
/// Exit code for an exception escaping a command.
int exit_code_for(const std::exception& e);

/// Exclusive writer lock on an output directory (created if missing).
/// Throws InputError when another process holds it.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::filesystem::path path_;
};

inline constexpr int kManifestSchemaVersion = 1;
inline const std::vector<std::string> kSplits{"train", "val", "test"};

/// Scenes, questions and (sort-of-clevr) PPM images for every split under
/// out/data, plus out/data/manifest.json.
void cmd_gen(const ExperimentConfig& config, const std::filesystem::path& out, std::ostream& log);

struct SplitData {
  std::vector<scene::Scene> scenes;
  std::vector<qa::QuestionRecord> questions;
};
/// Reads one split written by cmd_gen, checking it against the manifest.
SplitData load_split(const std::filesystem::path& out, const std::string& split);

/// Matcher masks as PGMs under out/masks/<split>/, a matching CSV per split
/// and out/masks/manifest.json. Returns the score over all splits.
match::MatchScore cmd_masks(const ExperimentConfig& config, const std::filesystem::path& out, std::ostream& log);
std::filesystem::path mask_path(const std::filesystem::path& out, const std::string& split,
                                const qa::QuestionRecord& q);

struct TrainSummary {
  std::string run;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
};
/// Trains the configured variant into out/train/<run>/ (model.ckpt,
/// trace.csv, metrics.json, config.ini).
TrainSummary cmd_train(const ExperimentConfig& config, const std::filesystem::path& out, std::ostream& log);

struct ReportLine {
  std::string row;  // baseline, teacher-external, ...
  std::string run;  // run directory it came from, empty when missing
  std::optional<double> accuracy;
  std::optional<double> delta;  // accuracy - baseline accuracy
};
/// Collects out/train/*/metrics.json into the five-row table and writes
/// out/report.csv. Students are picked by validation accuracy.
std::vector<ReportLine> cmd_report(const std::filesystem::path& out, std::ostream& log);
void write_report_markdown(std::ostream& out, const std::vector<ReportLine>& lines);

/// Solves a rule program over an evidence file and writes the free atoms as
/// sorted `atom value` lines.
infer::SolveReport cmd_psl(const std::filesystem::path& program, const std::filesystem::path& evidence,
                           const std::filesystem::path& out, const infer::SolverConfig& solver, bool strict);

struct SweepPoint {
  double pi = 0.0;
  TrainSummary summary;
};
/// One student per configured pi; writes out/sweep.csv and returns the
/// points with the best-by-validation one first.
std::vector<SweepPoint> cmd_sweep(const ExperimentConfig& config, const std::filesystem::path& out, std::ostream& log);

}  // namespace spsl::harness
