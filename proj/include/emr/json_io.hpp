#pragma once

#include <span>

#include <json.hpp>

#include "emr/feedback.hpp"
#include "emr/learner.hpp"
#include "emr/wordtree.hpp"

namespace emr {

using json = nlohmann::json;

json to_json(const FeedbackItem& item);
FeedbackItem feedback_item_from_json(const json& j);
json to_json(const Conflict& conflict);
json to_json(const std::vector<Conflict>& conflicts);

json to_json(const DiffEntry& entry);
json to_json(const DiffReport& report);
json to_json(const Metrics& metrics);
json to_json(const Histogram& histogram);
json to_json(const TermWeight& term);

inline constexpr int kModelSchema = 1;

json to_json(const VariableModel& model);
VariableModel variable_model_from_json(const json& j);

// Word-tree payload:
//   { "root": [tokens], "coverage": {"docs", "percent"}, "forward": node, "backward": node }
// node = { "token", "weight", "scale", "gradient": {"t","f","u"}, "children": [...] }
json tree_payload(const WordTree& tree, const Corpus& corpus, std::span<const Prediction> predictions);

}  // namespace emr
