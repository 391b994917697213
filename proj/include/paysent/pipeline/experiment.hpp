#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "paysent/blockfeat.hpp"
#include "paysent/ingest.hpp"
#include "paysent/pipeline/train.hpp"

namespace paysent::pipeline {

struct SplitViews {
    std::vector<PayloadSample> train, validation, test;
};

inline SplitViews materialize_split(const std::vector<PayloadSample>& samples, const DatasetSplit& split) {
    std::unordered_map<std::int64_t, const PayloadSample*> by_id;
    for (const auto& s : samples) by_id[s.id] = &s;
    auto pick = [&by_id](const std::vector<std::int64_t>& ids) {
        std::vector<PayloadSample> out;
        out.reserve(ids.size());
        for (auto id : ids) out.push_back(*by_id.at(id));
        return out;
    };
    return {pick(split.train), pick(split.validation), pick(split.test)};
}

inline std::vector<std::pair<TokenSequence, int>> tokenize_all(const std::vector<PayloadSample>& samples,
                                                               const BlockDictionary& dict) {
    std::vector<std::pair<TokenSequence, int>> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.emplace_back(tokenize(s.payload, dict, s.id), s.label);
    return out;
}

struct ExperimentOutcome {
    BlockDictionary dict;
    TrainResult training;
    MetricsReport test_metrics;
};

// fit dictionary on the train split, train, evaluate on the test split
inline ExperimentOutcome run_experiment(const SplitViews& views, const TrainRunConfig& cfg) {
    ExperimentOutcome out;
    out.dict = BlockDictionary::fit(views.train, cfg.block);
    auto train_toks = tokenize_all(views.train, out.dict);
    auto val_toks = tokenize_all(views.validation, out.dict);
    out.training = train(train_toks, val_toks, out.dict.size(), cfg);
    out.test_metrics = evaluate(out.training.best_params, out.dict, views.test);
    return out;
}

}  // namespace paysent::pipeline
