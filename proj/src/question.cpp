#include "spsl/question.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <numeric>
#include <ostream>
#include <bit>
#include <optional>

#include "spsl/rng.hpp"

namespace spsl::qa {

using nlohmann::json;
using scene::SceneObject;

namespace {

constexpr std::array<std::string_view, 7> kFamilyNames = {
    "shape_of", "horizontal", "vertical", "closest", "furthest", "count", "chain"};

std::string relation_phrase(std::string_view rel) {
  if (rel == "left") return "left of";
  if (rel == "right") return "right of";
  if (rel == "front") return "in front of";
  if (rel == "behind") return "behind";
  throw QuestionError("unknown relation '" + std::string(rel) + "'");
}

std::vector<std::string> ids_of(const Scene& scene, std::vector<std::size_t> indices) {
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
  std::vector<std::string> out;
  for (auto i : indices) out.push_back(scene.objects[i].id);
  return out;
}

std::size_t anchor_index(const Scene& scene, std::string_view color) {
  std::size_t found = scene.objects.size();
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    if (scene.objects[i].color != color) continue;
    if (found != scene.objects.size()) throw QuestionError("anchor color is not unique");
    found = i;
  }
  if (found == scene.objects.size())
    throw QuestionError("no " + std::string(color) + " object in scene " + scene.scene_id);
  return found;
}

}  // namespace

std::string_view to_string(Family family) { return kFamilyNames[static_cast<std::size_t>(family)]; }

Family parse_family(std::string_view text) {
  for (std::size_t i = 0; i < kFamilyNames.size(); ++i)
    if (kFamilyNames[i] == text) return static_cast<Family>(i);
  throw std::invalid_argument("unknown question family '" + std::string(text) + "'");
}

bool is_relational(Family family) {
  return family == Family::closest || family == Family::furthest || family == Family::count ||
         family == Family::chain;
}

std::size_t answer_index(std::string_view answer) {
  auto it = std::find(kAnswers.begin(), kAnswers.end(), answer);
  if (it == kAnswers.end()) throw std::invalid_argument("answer '" + std::string(answer) + "' not in vocabulary");
  return static_cast<std::size_t>(it - kAnswers.begin());
}

int QuestionRecord::onehot_index() const {
  if (family == Family::chain) return -1;
  return static_cast<int>(scene::color_index(anchor_color) * 6 + static_cast<std::size_t>(family));
}

std::vector<float> onehot(const QuestionRecord& q) {
  int i = q.onehot_index();
  if (i < 0) throw QuestionError("chain questions have no one-hot encoding");
  std::vector<float> v(kOneHotSize, 0.0f);
  v[static_cast<std::size_t>(i)] = 1.0f;
  return v;
}

std::string question_text(Family family, std::string_view c) {
  const std::string color(c);
  switch (family) {
    case Family::shape_of: return "What is the shape of the " + color + " object?";
    case Family::horizontal: return "Is the " + color + " object on the left or right of the image?";
    case Family::vertical: return "Is the " + color + " object on the top or bottom of the image?";
    case Family::closest: return "What is the shape of the object closest to the " + color + " object?";
    case Family::furthest: return "What is the shape of the object furthest from the " + color + " object?";
    case Family::count: return "How many objects have the same shape as the " + color + " object?";
    case Family::chain: break;
  }
  throw QuestionError("chain questions use chain_text");
}

std::string chain_text(const ChainSpec& chain) {
  if (chain.mentions.size() < 2 || chain.relations.size() + 1 != chain.mentions.size())
    throw QuestionError("malformed chain");
  std::string text = "What is the " + chain.query + " of";
  for (std::size_t m = 0; m < chain.mentions.size(); ++m) {
    if (m > 0) text += " " + relation_phrase(chain.relations[m - 1]);
    text += " the";
    for (const auto& [attr, value] : chain.mentions[m].attributes) text += " " + value;
  }
  return text + "?";
}

Evaluation evaluate(const Scene& scene, Family family, std::string_view anchor_color) {
  if (scene.mode != scene::Mode::sort_of_clevr) throw QuestionError("not a sort-of-clevr scene");
  const std::size_t a = anchor_index(scene, anchor_color);
  const SceneObject& anchor = scene.objects[a];
  const int mid = scene.image_size / 2;
  RelationTable table(scene);
  switch (family) {
    case Family::shape_of:
      return {anchor.shape, ids_of(scene, {a})};
    case Family::horizontal:
      return {anchor.x < mid ? "left" : "right", ids_of(scene, {a})};
    case Family::vertical:
      return {anchor.y < mid ? "top" : "bottom", ids_of(scene, {a})};
    case Family::closest:
      if (table.closest_tied(a)) throw QuestionError("closest object is tied");
      return {scene.objects[table.closest(a)].shape, ids_of(scene, {a, table.closest(a)})};
    case Family::furthest:
      if (table.furthest_tied(a)) throw QuestionError("furthest object is tied");
      return {scene.objects[table.furthest(a)].shape, ids_of(scene, {a, table.furthest(a)})};
    case Family::count: {
      std::vector<std::size_t> same;
      for (std::size_t i = 0; i < scene.objects.size(); ++i)
        if (scene.objects[i].shape == anchor.shape) same.push_back(i);
      return {std::to_string(same.size()), ids_of(scene, same)};
    }
    case Family::chain:
      break;
  }
  throw QuestionError("chain family needs a chain spec");
}

bool relation_holds(const RelationTable& table, std::string_view rel, std::size_t a, std::size_t b) {
  if (rel == "left") return table.left_of(a, b);
  if (rel == "right") return table.right_of(a, b);
  if (rel == "front") return table.below(a, b);
  if (rel == "behind") return table.above(a, b);
  throw QuestionError("unknown relation '" + std::string(rel) + "'");
}

bool mention_matches(const SceneObject& object, const MentionSpec& mention) {
  return std::all_of(mention.attributes.begin(), mention.attributes.end(),
                     [&](const auto& av) { return object.attribute(av.first) == av.second; });
}

std::vector<std::vector<std::size_t>> chain_assignments(const Scene& scene, const RelationTable& table,
                                                        const ChainSpec& chain) {
  const std::size_t m = chain.mentions.size();
  std::vector<std::vector<std::size_t>> candidates(m);
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t i = 0; i < scene.objects.size(); ++i)
      if (mention_matches(scene.objects[i], chain.mentions[k])) candidates[k].push_back(i);

  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> current;
  auto extend = [&](auto& self) -> void {
    std::size_t k = current.size();
    if (k == m) {
      out.push_back(current);
      return;
    }
    for (std::size_t i : candidates[k]) {
      if (k > 0 && !relation_holds(table, chain.relations[k - 1], current[k - 1], i)) continue;
      current.push_back(i);
      self(self);
      current.pop_back();
    }
  };
  extend(extend);
  return out;
}

Evaluation evaluate_chain(const Scene& scene, const ChainSpec& chain) {
  RelationTable table(scene);
  auto found = chain_assignments(scene, table, chain);
  if (found.size() != 1)
    throw QuestionError("chain has " + std::to_string(found.size()) + " referents, expected 1");
  const auto& tuple = found.front();
  return {scene.objects[tuple[0]].attribute(chain.query), ids_of(scene, tuple)};
}

Evaluation evaluate(const Scene& scene, const QuestionRecord& q) {
  if (q.family == Family::chain) return evaluate_chain(scene, q.chain);
  return evaluate(scene, q.family, q.anchor_color);
}

std::vector<QuestionRecord> generate_questions(const Scene& scene, std::uint64_t seed, int k) {
  if (scene.mode != scene::Mode::sort_of_clevr) throw QuestionError("not a sort-of-clevr scene");
  if (k < 0) throw std::invalid_argument("question count must be >= 0");
  for (auto c : scene::kColors) anchor_index(scene, c);

  Rng rng(seed);
  std::vector<QuestionRecord> out;
  for (int i = 0; i < k; ++i) {
    const bool relational = i % 2 == 1;
    for (int attempt = 0;; ++attempt) {
      if (attempt == 100) throw QuestionError("no untied relational question in scene " + scene.scene_id);
      Family family = kSortFamilies[(relational ? 3 : 0) + uniform_index(rng, 3)];
      std::string color(scene::kColors[uniform_index(rng, scene::kColors.size())]);
      Evaluation ev;
      try {
        ev = evaluate(scene, family, color);
      } catch (const QuestionError&) {
        continue;  // tied neighbor
      }
      QuestionRecord q;
      q.scene_id = scene.scene_id;
      q.index = i;
      q.family = family;
      q.text = question_text(family, color);
      q.anchor_color = color;
      q.answer = std::move(ev.answer);
      q.relevant_objects = std::move(ev.relevant_objects);
      out.push_back(std::move(q));
      break;
    }
  }
  return out;
}

namespace {

MentionSpec make_mention(const SceneObject& o, unsigned mask) {
  MentionSpec m;
  for (std::size_t a = 0; a < kChainAttributes.size(); ++a)
    if (mask & (1u << a)) m.attributes.emplace_back(kChainAttributes[a], o.attribute(kChainAttributes[a]));
  m.attributes.emplace_back("shape", o.shape);
  return m;
}

// Walks a random relation chain of distinct objects; empty on a dead end.
std::vector<std::pair<std::size_t, std::string>> random_walk(Rng& rng, const Scene& scene,
                                                            const RelationTable& table,
                                                            std::size_t length) {
  std::vector<std::pair<std::size_t, std::string>> walk;
  walk.emplace_back(uniform_index(rng, scene.objects.size()), "");
  while (walk.size() < length) {
    std::vector<std::pair<std::size_t, std::string>> next;
    for (auto rel : kChainRelations)
      for (std::size_t b = 0; b < scene.objects.size(); ++b) {
        bool used = std::any_of(walk.begin(), walk.end(), [&](const auto& w) { return w.first == b; });
        if (!used && relation_holds(table, rel, walk.back().first, b)) next.emplace_back(b, rel);
      }
    if (next.empty()) return {};
    walk.push_back(next[uniform_index(rng, next.size())]);
  }
  return walk;
}

// Fewest extra attributes across all mentions that make the walk the only
// satisfying tuple; ties go to the first combination in mask order.
std::optional<ChainSpec> minimal_chain(const Scene& scene, const RelationTable& table,
                                       const std::vector<std::pair<std::size_t, std::string>>& walk) {
  const std::size_t m = walk.size();
  std::size_t combos = 1;
  for (std::size_t i = 0; i < m; ++i) combos *= 8;
  std::vector<std::size_t> order(combos);
  std::iota(order.begin(), order.end(), 0);
  auto bits = [&](std::size_t combo) {
    int total = 0;
    for (std::size_t i = 0; i < m; ++i, combo /= 8) total += std::popcount(combo % 8);
    return total;
  };
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return bits(a) < bits(b); });

  std::vector<std::size_t> target;
  for (const auto& w : walk) target.push_back(w.first);
  for (std::size_t combo : order) {
    ChainSpec chain;
    std::size_t c = combo;
    for (std::size_t i = 0; i < m; ++i, c /= 8) {
      chain.mentions.push_back(make_mention(scene.objects[walk[i].first], static_cast<unsigned>(c % 8)));
      if (i > 0) chain.relations.push_back(walk[i].second);
    }
    auto found = chain_assignments(scene, table, chain);
    if (found.size() == 1 && found.front() == target) return chain;
  }
  return std::nullopt;
}

}  // namespace

std::vector<QuestionRecord> generate_clevr_lite_questions(const Scene& scene, std::uint64_t seed, int k,
                                                          int max_retries) {
  if (scene.mode != scene::Mode::clevr_lite) throw QuestionError("not a clevr-lite scene");
  if (scene.objects.size() < 2) throw QuestionError("chains need at least two objects");
  if (k < 0 || max_retries < 1) throw std::invalid_argument("bad question count or retry budget");
  RelationTable table(scene);
  Rng rng(seed);
  std::vector<QuestionRecord> out;
  for (int i = 0; i < k; ++i) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == max_retries)
        throw QuestionError("no unambiguous chain in scene " + scene.scene_id + " after " +
                            std::to_string(max_retries) + " attempts");
      std::size_t length = 2 + uniform_index(rng, 2);
      auto walk = random_walk(rng, scene, table, length);
      if (walk.empty()) continue;
      auto chain = minimal_chain(scene, table, walk);
      if (!chain) continue;
      std::vector<std::string> open;
      for (auto attr : kChainAttributes) {
        bool named = std::any_of(chain->mentions[0].attributes.begin(), chain->mentions[0].attributes.end(),
                                 [&](const auto& av) { return av.first == attr; });
        if (!named) open.emplace_back(attr);
      }
      if (open.empty()) continue;
      chain->query = open[uniform_index(rng, open.size())];

      Evaluation ev = evaluate_chain(scene, *chain);
      QuestionRecord q;
      q.scene_id = scene.scene_id;
      q.index = i;
      q.family = Family::chain;
      q.text = chain_text(*chain);
      q.chain = std::move(*chain);
      q.answer = std::move(ev.answer);
      q.relevant_objects = std::move(ev.relevant_objects);
      out.push_back(std::move(q));
      break;
    }
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&]() {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      flush();
    } else if (ch == '?') {
      flush();
      out.emplace_back("?");
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  flush();
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  std::sort(tokens_.begin(), tokens_.end());
  tokens_.erase(std::unique(tokens_.begin(), tokens_.end()), tokens_.end());
  for (std::size_t i = 0; i < tokens_.size(); ++i) ids_.emplace(tokens_[i], i);
}

std::size_t Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) throw QuestionError("out-of-vocabulary token '" + std::string(token) + "'");
  return it->second;
}

Vocabulary sort_of_clevr_vocabulary() {
  std::vector<std::string> tokens;
  for (Family f : kSortFamilies)
    for (auto c : scene::kColors)
      for (auto& t : tokenize(question_text(f, c))) tokens.push_back(std::move(t));
  return Vocabulary(std::move(tokens));
}

Vocabulary clevr_lite_vocabulary() {
  std::vector<std::string> tokens = {"what", "is", "the", "of", "?"};
  auto add_all = [&](const auto& words) {
    for (auto w : words)
      for (auto& t : tokenize(w)) tokens.push_back(std::move(t));
  };
  add_all(kChainAttributes);
  add_all(scene::kClevrShapes);
  add_all(scene::kColors);
  add_all(scene::kSizes);
  add_all(scene::kMaterials);
  for (auto rel : kChainRelations) add_all(std::array{relation_phrase(rel)});
  return Vocabulary(std::move(tokens));
}

Encoding encode_question(std::string_view text, const Vocabulary& vocab) {
  Encoding e;
  e.bow.assign(vocab.size(), 0.0f);
  for (const auto& t : tokenize(text)) e.ids.push_back(vocab.id(t));
  if (e.ids.empty()) throw QuestionError("empty question");
  const float w = 1.0f / static_cast<float>(e.ids.size());
  for (auto id : e.ids) e.bow[id] += w;
  return e;
}

json to_json(const QuestionRecord& q) {
  json j = {{"schema", kQuestionSchemaVersion},
            {"scene_id", q.scene_id},
            {"index", q.index},
            {"family", to_string(q.family)},
            {"kind", q.relational() ? "relational" : "non-relational"},
            {"text", q.text},
            {"answer", q.answer},
            {"relevant_objects", q.relevant_objects}};
  if (q.family == Family::chain) {
    json mentions = json::array();
    for (const auto& m : q.chain.mentions) {
      json attrs = json::array();
      for (const auto& [a, v] : m.attributes) attrs.push_back({a, v});
      mentions.push_back(std::move(attrs));
    }
    j["chain"] = {{"mentions", std::move(mentions)}, {"relations", q.chain.relations}, {"query", q.chain.query}};
  } else {
    j["anchor_color"] = q.anchor_color;
    j["onehot"] = q.onehot_index();
  }
  return j;
}

QuestionRecord question_from_json(const json& j) {
  if (j.at("schema").get<int>() != kQuestionSchemaVersion)
    throw std::invalid_argument("unsupported question schema version");
  QuestionRecord q;
  q.scene_id = j.at("scene_id").get<std::string>();
  q.index = j.at("index").get<int>();
  q.family = parse_family(j.at("family").get<std::string>());
  q.text = j.at("text").get<std::string>();
  q.answer = j.at("answer").get<std::string>();
  q.relevant_objects = j.at("relevant_objects").get<std::vector<std::string>>();
  if (q.family == Family::chain) {
    const json& c = j.at("chain");
    for (const auto& jm : c.at("mentions")) {
      MentionSpec m;
      for (const auto& av : jm) m.attributes.emplace_back(av.at(0).get<std::string>(), av.at(1).get<std::string>());
      q.chain.mentions.push_back(std::move(m));
    }
    q.chain.relations = c.at("relations").get<std::vector<std::string>>();
    q.chain.query = c.at("query").get<std::string>();
  } else {
    q.anchor_color = j.at("anchor_color").get<std::string>();
  }
  return q;
}

void write_questions_jsonl(std::ostream& out, const std::vector<QuestionRecord>& questions) {
  for (const auto& q : questions) out << to_json(q).dump() << '\n';
}

std::vector<QuestionRecord> read_questions_jsonl(std::istream& in) {
  std::vector<QuestionRecord> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(question_from_json(json::parse(line)));
  return out;
}

}  // namespace spsl::qa
