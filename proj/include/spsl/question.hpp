#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "spsl/scene.hpp"

namespace spsl::qa {

using scene::RelationTable;
using scene::Scene;

/// Question families. The first six are the sort-of-clevr templates; chain
/// questions belong to clevr-lite.
enum class Family { shape_of, horizontal, vertical, closest, furthest, count, chain };

inline constexpr std::array<Family, 6> kSortFamilies = {Family::shape_of, Family::horizontal,
                                                        Family::vertical, Family::closest,
                                                        Family::furthest, Family::count};

std::string_view to_string(Family family);
Family parse_family(std::string_view text);
bool is_relational(Family family);

inline constexpr std::array<std::string_view, 12> kAnswers = {
    "circle", "rectangle", "1", "2", "3", "4", "5", "6", "left", "right", "top", "bottom"};
/// Class id of a sort-of-clevr answer; throws std::invalid_argument.
std::size_t answer_index(std::string_view answer);

inline constexpr std::array<std::string_view, 4> kChainRelations = {"left", "right", "front",
                                                                    "behind"};
/// Attributes a chain mention may name besides its shape, in phrase order.
inline constexpr std::array<std::string_view, 3> kChainAttributes = {"size", "color", "material"};

/// One noun phrase of a chain: (attribute, value) pairs in phrase order,
/// always ending with the shape.
struct MentionSpec {
  std::vector<std::pair<std::string, std::string>> attributes;
  friend bool operator==(const MentionSpec&, const MentionSpec&) = default;
};

/// x0 rel[0] x1 rel[1] x2 ...; `query` names the asked attribute of x0.
struct ChainSpec {
  std::vector<MentionSpec> mentions;
  std::vector<std::string> relations;
  std::string query;
  friend bool operator==(const ChainSpec&, const ChainSpec&) = default;
};

struct QuestionRecord {
  std::string scene_id;
  int index = 0;
  Family family = Family::shape_of;
  std::string text;
  std::string anchor_color;  // sort-of-clevr families
  ChainSpec chain;           // chain family
  std::string answer;
  std::vector<std::string> relevant_objects;  // ordered by scene index

  bool relational() const { return is_relational(family); }
  /// color * 6 + family for sort-of-clevr records; -1 for chains.
  int onehot_index() const;
  friend bool operator==(const QuestionRecord&, const QuestionRecord&) = default;
};

inline constexpr std::size_t kOneHotSize = 36;
std::vector<float> onehot(const QuestionRecord& q);

class QuestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Evaluation {
  std::string answer;
  std::vector<std::string> relevant_objects;
  friend bool operator==(const Evaluation&, const Evaluation&) = default;
};

/// Functional program for a sort-of-clevr family. Throws QuestionError when the
/// anchor color is absent or the referenced neighbor is tied.
Evaluation evaluate(const Scene& scene, Family family, std::string_view anchor_color);
/// Throws QuestionError unless the chain has exactly one referent tuple.
Evaluation evaluate_chain(const Scene& scene, const ChainSpec& chain);
Evaluation evaluate(const Scene& scene, const QuestionRecord& q);

std::string question_text(Family family, std::string_view anchor_color);
std::string chain_text(const ChainSpec& chain);

/// Does directional relation `rel` hold from object a to object b?
/// front means nearer the viewer (larger y), behind means smaller y.
bool relation_holds(const RelationTable& table, std::string_view rel, std::size_t a, std::size_t b);
bool mention_matches(const scene::SceneObject& object, const MentionSpec& mention);
/// Every object tuple (one per mention) satisfying the chain.
std::vector<std::vector<std::size_t>> chain_assignments(const Scene& scene, const RelationTable& table,
                                                        const ChainSpec& chain);

/// k sort-of-clevr records, alternating non-relational and relational.
std::vector<QuestionRecord> generate_questions(const Scene& scene, std::uint64_t seed, int k = 10);
/// k clevr-lite chain records with 2-3 mentions and minimal attribute sets.
std::vector<QuestionRecord> generate_clevr_lite_questions(const Scene& scene, std::uint64_t seed,
                                                          int k = 10, int max_retries = 200);

/// Lowercased whitespace split with '?' as its own token.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  explicit Vocabulary(std::vector<std::string> tokens);
  std::size_t size() const noexcept { return tokens_.size(); }
  /// Throws QuestionError for an out-of-vocabulary token.
  std::size_t id(std::string_view token) const;
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t, std::less<>> ids_;
};

/// Sorted token set of every template instance.
Vocabulary sort_of_clevr_vocabulary();
Vocabulary clevr_lite_vocabulary();

struct Encoding {
  std::vector<std::size_t> ids;
  std::vector<float> bow;  // token counts divided by sequence length
};
Encoding encode_question(std::string_view text, const Vocabulary& vocab);

inline constexpr int kQuestionSchemaVersion = 1;
nlohmann::json to_json(const QuestionRecord& q);
QuestionRecord question_from_json(const nlohmann::json& j);
void write_questions_jsonl(std::ostream& out, const std::vector<QuestionRecord>& questions);
std::vector<QuestionRecord> read_questions_jsonl(std::istream& in);

}  // namespace spsl::qa
