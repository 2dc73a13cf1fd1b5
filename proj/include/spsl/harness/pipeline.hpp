#pragma once

#include <functional>
#include <string>
#include <vector>

#include "spsl/matcher.hpp"
#include "spsl/nn/train.hpp"
#include "spsl/question.hpp"
#include "spsl/scene.hpp"

namespace spsl::harness {

enum class QuestionEncoding { bow, onehot };
QuestionEncoding parse_encoding(const std::string& s);
std::string to_string(QuestionEncoding e);

struct FeatureConfig {
  int grid = 4;
  QuestionEncoding encoding = QuestionEncoding::bow;
};

/// Model input width for sort-of-clevr questions.
int question_width(QuestionEncoding encoding);
std::vector<double> question_vector(const qa::QuestionRecord& q, QuestionEncoding encoding);

/// Mask for one question, or none.
using MaskSource = std::function<match::MaskGrid(const scene::Scene&, const qa::QuestionRecord&)>;

/// Mask of the objects the matcher selects for the question.
match::MaskGrid matched_mask(const scene::Scene& scene, const qa::QuestionRecord& q,
                             const match::MatchConfig& match_config, const match::MaskParams& params);

/// One sample per question, in question order. Questions must refer to
/// scenes in `scenes`; only sort-of-clevr data can be encoded. Throws
/// std::invalid_argument otherwise.
nn::Dataset build_dataset(const std::vector<scene::Scene>& scenes, const std::vector<qa::QuestionRecord>& questions,
                          const FeatureConfig& features, const MaskSource& mask = {});

/// Model shape for a dataset, with the remaining fields from `base`.
nn::ModelConfig model_for(const nn::Dataset& data, nn::ModelConfig base);

}  // namespace spsl::harness
