#pragma once

#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "spsl/image.hpp"
#include "spsl/map_infer.hpp"
#include "spsl/question.hpp"
#include "spsl/rule_lang.hpp"
#include "spsl/scene.hpp"

namespace spsl::match {

using scene::Scene;

struct MentionRelation {
  std::string name;    // closest, furthest, same_shape, left, right, front, behind
  std::string target;  // id of the other mention
  friend bool operator==(const MentionRelation&, const MentionRelation&) = default;
};

struct Mention {
  std::string id;  // x0, x1, ...
  std::vector<std::pair<std::string, std::string>> constraints;
  std::vector<MentionRelation> relations;
  bool set_valued = false;  // refers to every satisfying object (count questions)
  friend bool operator==(const Mention&, const Mention&) = default;
};

class MatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inverts the question templates on the question text. Throws MatchError for
/// text no template produces.
std::vector<Mention> extract_mentions(const qa::QuestionRecord& q);
std::vector<Mention> extract_mentions(std::string_view text);

struct MatchConfig {
  double w_attribute = 1.0;    // candidate from agreeing attributes
  double w_relation = 1.0;     // candidate from a consistent related candidate
  double w_inconsistent = 5.0; // !candidate from an inconsistent related candidate
  double w_prior = 0.1;        // !candidate
  bool hard_filter = true;     // clamp candidates with a conflicting attribute to 0
  bool negatives = true;       // emit consistent(...) = 0 tuples
  bool inverse_relations = true;
  double select_threshold = 0.5;
  double tie_tolerance = 1e-4;
  infer::SolverConfig solver;

  void validate() const;
};

struct MatchProblem {
  std::vector<Mention> mentions;
  std::vector<std::string> objects;
  rules::Program program;
  rules::EvidenceSet evidence;
};

/// Rule program text for a configuration.
std::string matcher_program_text(const MatchConfig& config);

/// Truth of relation `name` from object a (the mention's object) to b.
bool relation_value(const scene::RelationTable& table, const Scene& scene, std::string_view name,
                    std::size_t a, std::size_t b);

MatchProblem build_psl_problem(const std::vector<Mention>& mentions, const Scene& scene,
                               const MatchConfig& config = {});

struct MatchResult {
  std::vector<std::string> mention_ids;
  std::vector<std::string> object_ids;
  std::vector<std::vector<double>> confidence;  // [mention][object]
  std::map<std::string, std::vector<std::string>> selected;
  infer::SolveReport report;

  /// Union of all mention selections, in object order.
  std::vector<std::string> selected_objects() const;
};

MatchResult match(const MatchProblem& problem, const MatchConfig& config = {});

/// Convenience: extract, build and match.
MatchResult match_question(const qa::QuestionRecord& q, const Scene& scene, const MatchConfig& config = {});

struct MaskGrid {
  int width = 0, height = 0;
  std::vector<double> values;  // row-major
  double at(int x, int y) const { return values.at(static_cast<std::size_t>(y) * width + x); }
};

struct MaskParams {
  double decay_scale = 1.0;  // sigma = decay_scale * radius
};

/// Union (pointwise max) of Gaussian heatmaps centred on the selected objects.
MaskGrid render_mask(const Scene& scene, const std::vector<std::string>& selected, const MaskParams& params = {});
RgbImage apply_mask(const RgbImage& image, const MaskGrid& mask);
GrayImage to_gray(const MaskGrid& mask);

struct MatchScore {
  double precision = 0.0;
  double recall = 0.0;
  std::size_t true_positives = 0;
  std::size_t selected = 0;
  std::size_t relevant = 0;
};

struct MatchOutcome {
  std::vector<std::string> selected;
  std::vector<std::string> relevant;
};

/// Micro-averaged over all outcomes. Precision is 0 when nothing is selected.
MatchScore evaluate_matching(const std::vector<MatchOutcome>& outcomes);

struct ReportRow {
  std::string scene_id;
  int question = 0;
  std::vector<std::string> selected;
  std::vector<std::string> relevant;
  std::vector<double> confidences;  // of the selected objects
};

void write_match_report(std::ostream& out, const std::vector<ReportRow>& rows, const MatchScore& score);

}  // namespace spsl::match
