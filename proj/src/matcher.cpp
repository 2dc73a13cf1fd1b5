#include "spsl/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "spsl/grounder.hpp"

namespace spsl::match {

using rules::AtomKey;
using scene::RelationTable;

namespace {

std::string mention_id(std::size_t i) { return "x" + std::to_string(i); }

// Attribute name owning a chain value word, or "" if none.
std::string attribute_of(std::string_view word) {
  auto in = [&](const auto& list) { return std::find(list.begin(), list.end(), word) != list.end(); };
  if (in(scene::kClevrShapes) || in(scene::kSortShapes)) return "shape";
  if (in(scene::kColors)) return "color";
  if (in(scene::kSizes)) return "size";
  if (in(scene::kMaterials)) return "material";
  return {};
}

std::vector<Mention> parse_chain(const std::vector<std::string>& tokens, std::string_view text) {
  auto fail = [&]() -> MatchError { return MatchError("no template produces '" + std::string(text) + "'"); };
  std::size_t i = 0;
  auto expect = [&](std::string_view word) {
    if (i >= tokens.size() || tokens[i] != word) throw fail();
    ++i;
  };
  expect("what");
  expect("is");
  expect("the");
  if (i >= tokens.size() ||
      std::find(qa::kChainAttributes.begin(), qa::kChainAttributes.end(), tokens[i]) == qa::kChainAttributes.end())
    throw fail();
  ++i;
  expect("of");

  std::vector<Mention> mentions;
  for (;;) {
    expect("the");
    Mention m;
    m.id = mention_id(mentions.size());
    while (i < tokens.size()) {
      std::string attr = attribute_of(tokens[i]);
      if (attr.empty()) break;
      m.constraints.emplace_back(attr, tokens[i]);
      ++i;
    }
    if (m.constraints.empty()) throw fail();
    mentions.push_back(std::move(m));
    if (i < tokens.size() && tokens[i] == "?" && i + 1 == tokens.size()) break;

    std::string rel;
    if (i < tokens.size() && (tokens[i] == "left" || tokens[i] == "right")) {
      rel = tokens[i++];
      expect("of");
    } else if (i < tokens.size() && tokens[i] == "in") {
      ++i;
      expect("front");
      expect("of");
      rel = "front";
    } else if (i < tokens.size() && tokens[i] == "behind") {
      ++i;
      rel = "behind";
    } else {
      throw fail();
    }
    mentions.back().relations.push_back({rel, mention_id(mentions.size())});
  }
  if (mentions.size() < 2) throw fail();
  return mentions;
}

std::string inverse(std::string_view rel) {
  if (rel == "left") return "right";
  if (rel == "right") return "left";
  if (rel == "front") return "behind";
  if (rel == "behind") return "front";
  if (rel == "same_shape") return "same_shape";
  if (rel.ends_with("_inv")) return std::string(rel.substr(0, rel.size() - 4));
  return std::string(rel) + "_inv";
}

}  // namespace

std::vector<Mention> extract_mentions(const qa::QuestionRecord& q) { return extract_mentions(q.text); }

std::vector<Mention> extract_mentions(std::string_view text) {
  for (qa::Family f : qa::kSortFamilies) {
    for (auto color : scene::kColors) {
      if (qa::question_text(f, color) != text) continue;
      Mention anchor{"", {{"color", std::string(color)}}, {}, false};
      switch (f) {
        case qa::Family::closest:
        case qa::Family::furthest:
        case qa::Family::count: {
          Mention target{"x0", {}, {{std::string(qa::to_string(f)), "x1"}}, f == qa::Family::count};
          if (f == qa::Family::count) target.relations[0].name = "same_shape";
          anchor.id = "x1";
          return {target, anchor};
        }
        default:
          anchor.id = "x0";
          return {anchor};
      }
    }
  }
  return parse_chain(qa::tokenize(text), text);
}

void MatchConfig::validate() const {
  for (double w : {w_attribute, w_relation, w_inconsistent, w_prior})
    if (!(w >= 0.0) || std::isinf(w)) throw std::invalid_argument("matcher weights must be finite and >= 0");
  if (!(select_threshold >= 0.0 && select_threshold <= 1.0))
    throw std::invalid_argument("select_threshold must lie in [0,1]");
  if (!(tie_tolerance >= 0.0)) throw std::invalid_argument("tie_tolerance must be >= 0");
  solver.validate();
}

std::string matcher_program_text(const MatchConfig& c) {
  std::ostringstream out;
  out << "predicate object(obj) closed.\n"
         "predicate mention(men) closed.\n"
         "predicate attr_o(obj, attr, val) closed.\n"
         "predicate attr_m(men, attr, val) closed.\n"
         "predicate related(rel, men, men) closed.\n"
         "predicate conflict(men, obj) closed.\n"
         "predicate consistent(rel, obj, obj, men, men) open.\n"
         "predicate candidate(men, obj) open.\n";
  auto fmt = rules::format_number;
  if (c.w_attribute > 0)
    out << fmt(c.w_attribute)
        << ": candidate(M, O) <- object(O) & mention(M) & attr_o(O, A, V) & attr_m(M, A, V).\n";
  if (c.w_relation > 0)
    out << fmt(c.w_relation)
        << ": candidate(M, O) <- object(O) & mention(M) & related(R, M, M1) & object(O1) & "
           "candidate(M1, O1) & consistent(R, O, O1, M, M1) & !conflict(M, O).\n";
  if (c.w_inconsistent > 0)
    out << fmt(c.w_inconsistent)
        << ": !candidate(M, O) <- object(O) & mention(M) & related(R, M, M1) & object(O1) & "
           "candidate(M1, O1) & !consistent(R, O, O1, M, M1).\n";
  if (c.w_prior > 0) out << fmt(c.w_prior) << ": !candidate(M, O) <- object(O) & mention(M).\n";
  if (c.hard_filter) out << "inf: !candidate(M, O) <- conflict(M, O).\n";
  return out.str();
}

bool relation_value(const RelationTable& table, const Scene& scene, std::string_view name, std::size_t a,
                    std::size_t b) {
  if (name.ends_with("_inv")) return relation_value(table, scene, name.substr(0, name.size() - 4), b, a);
  if (name == "closest") return a != b && table.closest(b) == a;
  if (name == "furthest") return a != b && table.furthest(b) == a;
  if (name == "same_shape") return scene.objects[a].shape == scene.objects[b].shape;
  return qa::relation_holds(table, name, a, b);
}

MatchProblem build_psl_problem(const std::vector<Mention>& mentions, const Scene& scene, const MatchConfig& config) {
  config.validate();
  if (mentions.empty()) throw MatchError("no mentions");
  MatchProblem p;
  p.mentions = mentions;
  p.program = rules::parse_program(matcher_program_text(config));
  auto& e = p.evidence;

  for (const auto& o : scene.objects) {
    p.objects.push_back(o.id);
    e.set({"object", {o.id}}, 1.0);
    for (auto attr : {"shape", "color", "size", "material"}) {
      const std::string& v = o.attribute(attr);
      if (!v.empty()) e.set({"attr_o", {o.id, attr, v}}, 1.0);
    }
  }

  RelationTable table(scene);
  auto emit_relation = [&](const std::string& rel, const std::string& m, const std::string& m1) {
    e.set({"related", {rel, m, m1}}, 1.0);
    for (std::size_t a = 0; a < scene.objects.size(); ++a) {
      for (std::size_t b = 0; b < scene.objects.size(); ++b) {
        bool holds = relation_value(table, scene, rel, a, b);
        if (holds || config.negatives)
          e.set({"consistent", {rel, scene.objects[a].id, scene.objects[b].id, m, m1}}, holds ? 1.0 : 0.0);
      }
    }
  };

  for (const auto& m : mentions) {
    e.set({"mention", {m.id}}, 1.0);
    for (const auto& [attr, value] : m.constraints) {
      e.set({"attr_m", {m.id, attr, value}}, 1.0);
      for (const auto& o : scene.objects) {
        const std::string& held = o.attribute(attr);
        if (!held.empty() && held != value) e.set({"conflict", {m.id, o.id}}, 1.0);
      }
    }
    for (const auto& r : m.relations) {
      bool known = std::any_of(mentions.begin(), mentions.end(), [&](const Mention& x) { return x.id == r.target; });
      if (!known) throw MatchError("mention " + m.id + " relates to missing mention " + r.target);
      emit_relation(r.name, m.id, r.target);
      if (config.inverse_relations) emit_relation(inverse(r.name), r.target, m.id);
    }
  }
  return p;
}

std::vector<std::string> MatchResult::selected_objects() const {
  std::vector<std::string> out;
  for (const auto& id : object_ids) {
    bool any = std::any_of(selected.begin(), selected.end(), [&](const auto& kv) {
      return std::find(kv.second.begin(), kv.second.end(), id) != kv.second.end();
    });
    if (any) out.push_back(id);
  }
  return out;
}

MatchResult match(const MatchProblem& problem, const MatchConfig& config) {
  config.validate();
  auto potentials = ground::ground(problem.program, problem.evidence);
  auto solved = infer::solve_map(potentials, config.solver);

  MatchResult r;
  r.object_ids = problem.objects;
  r.report = std::move(solved.report);
  for (const auto& m : problem.mentions) {
    r.mention_ids.push_back(m.id);
    std::vector<double> row;
    for (const auto& o : problem.objects) {
      auto idx = potentials.atoms().find({"candidate", {m.id, o}});
      row.push_back(idx ? std::clamp(solved.interpretation[*idx], 0.0, 1.0) : 0.0);
    }
    std::vector<std::string> chosen;
    if (!row.empty()) {
      double best = *std::max_element(row.begin(), row.end());
      for (std::size_t j = 0; j < row.size(); ++j) {
        bool pick = m.set_valued ? row[j] >= config.select_threshold
                                 : best >= config.select_threshold && row[j] >= best - config.tie_tolerance;
        if (pick) chosen.push_back(problem.objects[j]);
      }
    }
    r.selected.emplace(m.id, std::move(chosen));
    r.confidence.push_back(std::move(row));
  }
  return r;
}

MatchResult match_question(const qa::QuestionRecord& q, const Scene& scene, const MatchConfig& config) {
  return match(build_psl_problem(extract_mentions(q), scene, config), config);
}

MaskGrid render_mask(const Scene& scene, const std::vector<std::string>& selected, const MaskParams& params) {
  if (!(params.decay_scale > 0.0)) throw std::invalid_argument("decay_scale must be > 0");
  MaskGrid g{scene.image_size, scene.image_size, {}};
  g.values.assign(static_cast<std::size_t>(g.width) * g.height, 0.0);
  for (const auto& id : selected) {
    const auto& o = scene.objects.at(scene.index_of(id));
    const double sigma = params.decay_scale * o.radius;
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) {
        double dx = x - o.x, dy = y - o.y;
        double& v = g.values[static_cast<std::size_t>(y) * g.width + x];
        v = std::max(v, std::exp(-(dx * dx + dy * dy) * inv));
      }
    }
  }
  return g;
}

RgbImage apply_mask(const RgbImage& image, const MaskGrid& mask) {
  if (image.width() != mask.width || image.height() != mask.height)
    throw std::invalid_argument("mask and image dimensions differ");
  RgbImage out = image;
  auto bytes = out.bytes();
  for (std::size_t p = 0; p < mask.values.size(); ++p) {
    double m = std::clamp(mask.values[p], 0.0, 1.0);
    for (std::size_t c = 0; c < 3; ++c) {
      auto& b = bytes[p * 3 + c];
      b = static_cast<std::uint8_t>(std::lround(b * m));
    }
  }
  return out;
}

GrayImage to_gray(const MaskGrid& mask) {
  GrayImage g{mask.width, mask.height, {}};
  g.pixels.reserve(mask.values.size());
  for (double v : mask.values) g.pixels.push_back(static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0))));
  return g;
}

MatchScore evaluate_matching(const std::vector<MatchOutcome>& outcomes) {
  if (outcomes.empty()) throw std::invalid_argument("evaluate_matching needs at least one question");
  MatchScore s;
  for (const auto& o : outcomes) {
    s.selected += o.selected.size();
    s.relevant += o.relevant.size();
    for (const auto& id : o.selected)
      if (std::find(o.relevant.begin(), o.relevant.end(), id) != o.relevant.end()) ++s.true_positives;
  }
  s.precision = s.selected ? static_cast<double>(s.true_positives) / s.selected : 0.0;
  s.recall = s.relevant ? static_cast<double>(s.true_positives) / s.relevant : 0.0;
  return s;
}

void write_match_report(std::ostream& out, const std::vector<ReportRow>& rows, const MatchScore& score) {
  auto join = [](const auto& items, auto&& fmt) {
    std::string s;
    for (std::size_t i = 0; i < items.size(); ++i) s += (i ? ";" : "") + fmt(items[i]);
    return s;
  };
  auto id = [](const std::string& s) { return s; };
  auto num = [](double v) { return rules::format_number(v); };
  out << "scene_id,question,selected,relevant,confidences\n";
  for (const auto& r : rows)
    out << r.scene_id << ',' << r.question << ',' << join(r.selected, id) << ',' << join(r.relevant, id) << ','
        << join(r.confidences, num) << '\n';
  out << "summary,precision=" << num(score.precision) << ",recall=" << num(score.recall)
      << ",true_positives=" << score.true_positives << ",selected=" << score.selected << '\n';
}

}  // namespace spsl::match
