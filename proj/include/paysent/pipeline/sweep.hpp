#pragma once

#include <string>
#include <vector>

#include "paysent/pipeline/experiment.hpp"

namespace paysent::pipeline {

enum class SweepAxis { block_length, stride, dict_size, chosen_states };

inline SweepAxis sweep_axis_from_string(const std::string& s) {
    if (s == "block_length") return SweepAxis::block_length;
    if (s == "stride") return SweepAxis::stride;
    if (s == "dict_size") return SweepAxis::dict_size;
    if (s == "chosen_states") return SweepAxis::chosen_states;
    throw UsageError("unknown sweep axis: " + s);
}

inline std::string to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::block_length: return "block_length";
        case SweepAxis::stride: return "stride";
        case SweepAxis::dict_size: return "dict_size";
        case SweepAxis::chosen_states: return "chosen_states";
    }
    return "";
}

struct SweepRow {
    std::size_t value = 0;
    MetricsReport metrics;
};

// one train+evaluate per axis value; everything else stays at the defaults
inline std::vector<SweepRow> run_sweep(const SplitViews& views, const TrainRunConfig& base, SweepAxis axis,
                                       const std::vector<std::size_t>& values) {
    std::vector<SweepRow> rows;
    for (std::size_t value : values) {
        if (value < 1) throw UsageError("sweep: axis values must be >= 1");
        TrainRunConfig cfg = base;
        switch (axis) {
            case SweepAxis::block_length: cfg.block.block_length = value; break;
            case SweepAxis::stride: cfg.block.stride = value; break;
            case SweepAxis::dict_size: cfg.block.dict_size = value; break;
            case SweepAxis::chosen_states: cfg.model.chosen_states = value; break;
        }
        SweepRow row;
        row.value = value;
        row.metrics = run_experiment(views, cfg).test_metrics;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace paysent::pipeline
