#include "spsl/harness/pipeline.hpp"

#include <map>
#include <stdexcept>

#include "spsl/nn/tensor.hpp"

namespace spsl::harness {

QuestionEncoding parse_encoding(const std::string& s) {
  if (s == "bow") return QuestionEncoding::bow;
  if (s == "onehot") return QuestionEncoding::onehot;
  throw std::invalid_argument("unknown question encoding '" + s + "' (bow|onehot)");
}

std::string to_string(QuestionEncoding e) { return e == QuestionEncoding::bow ? "bow" : "onehot"; }

int question_width(QuestionEncoding encoding) {
  return encoding == QuestionEncoding::bow ? static_cast<int>(qa::sort_of_clevr_vocabulary().size())
                                           : static_cast<int>(qa::kOneHotSize);
}

std::vector<double> question_vector(const qa::QuestionRecord& q, QuestionEncoding encoding) {
  if (q.family == qa::Family::chain) throw std::invalid_argument("chain questions have no model encoding");
  if (encoding == QuestionEncoding::onehot) {
    auto v = qa::onehot(q);
    return {v.begin(), v.end()};
  }
  static const qa::Vocabulary vocab = qa::sort_of_clevr_vocabulary();
  auto bow = qa::encode_question(q.text, vocab).bow;
  return {bow.begin(), bow.end()};
}

match::MaskGrid matched_mask(const scene::Scene& scene, const qa::QuestionRecord& q,
                             const match::MatchConfig& match_config, const match::MaskParams& params) {
  return match::render_mask(scene, match::match_question(q, scene, match_config).selected_objects(), params);
}

nn::Dataset build_dataset(const std::vector<scene::Scene>& scenes, const std::vector<qa::QuestionRecord>& questions,
                          const FeatureConfig& features, const MaskSource& mask) {
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    if (scenes[i].mode != scene::Mode::sort_of_clevr)
      throw std::invalid_argument("only sort-of-clevr scenes can be turned into training data");
    by_id.emplace(scenes[i].scene_id, i);
  }
  nn::Dataset data;
  data.regions = features.grid * features.grid;
  data.channels = static_cast<int>(nn::kFeatureChannels);
  data.vocab = question_width(features.encoding);
  data.answers = static_cast<int>(qa::kAnswers.size());

  std::size_t cached = SIZE_MAX;
  RgbImage image(1, 1);
  nn::TensorGrid plain;
  for (const auto& q : questions) {
    auto it = by_id.find(q.scene_id);
    if (it == by_id.end()) throw std::invalid_argument("question refers to unknown scene " + q.scene_id);
    const scene::Scene& s = scenes[it->second];
    if (it->second != cached) {
      image = scene::render(s);
      plain = nn::extract_object_features(image, features.grid);
      cached = it->second;
    }
    const int label = static_cast<int>(qa::answer_index(q.answer));
    if (mask) {
      match::MaskGrid m = mask(s, q);
      data.add(nn::extract_object_features(image, features.grid, &m).data, question_vector(q, features.encoding),
               label);
    } else {
      data.add(plain.data, question_vector(q, features.encoding), label);
    }
  }
  return data;
}

nn::ModelConfig model_for(const nn::Dataset& data, nn::ModelConfig base) {
  base.regions = data.regions;
  base.channels = data.channels;
  base.vocab = data.vocab;
  base.answers = data.answers;
  return base;
}

}  // namespace spsl::harness
