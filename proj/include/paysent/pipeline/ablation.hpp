#pragma once

#include <string>
#include <vector>

#include "paysent/pipeline/experiment.hpp"

namespace paysent::pipeline {

struct AblationCell {
    nn::Variant variant = nn::Variant::full;
    bool block_features = true;  // false = raw byte stream (L=1, S=1)
    MetricsReport metrics;
};

// {full, lstm_only, cnn_only} x {block features, raw bytes}. Raw mode uses
// the degenerate L=1 tokenization of the same code path.
inline std::vector<AblationCell> run_ablation(const SplitViews& views, const TrainRunConfig& base) {
    std::vector<AblationCell> table;
    for (nn::Variant variant : {nn::Variant::full, nn::Variant::lstm_only, nn::Variant::cnn_only}) {
        for (bool blocks : {true, false}) {
            TrainRunConfig cfg = base;
            cfg.model.variant = variant;
            if (!blocks) {
                cfg.block.block_length = 1;
                cfg.block.stride = 1;
            }
            AblationCell cell;
            cell.variant = variant;
            cell.block_features = blocks;
            cell.metrics = run_experiment(views, cfg).test_metrics;
            table.push_back(cell);
        }
    }
    return table;
}

}  // namespace paysent::pipeline
