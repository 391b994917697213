#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "paysent/blockfeat.hpp"
#include "paysent/common.hpp"
#include "paysent/ingest.hpp"
#include "paysent/nn/adam.hpp"
#include "paysent/nn/model.hpp"
#include "paysent/pipeline/metrics.hpp"

namespace paysent::pipeline {

struct TrainRunConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    double lr = 1e-4;
    std::uint64_t seed = 0;
    std::size_t early_stop_patience = 5;
    nn::ModelConfig model;
    BlockConfig block;

    void validate() const {
        if (epochs < 1 || batch_size < 1 || early_stop_patience < 1)
            throw UsageError("train config: epochs, batch size and patience must be >= 1");
        model.validate();
        block.validate();
    }
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0;
    MetricsReport validation;
};

struct TrainResult {
    nn::ModelParams<float> best_params;
    double best_val_f1 = -1.0;
    std::size_t best_epoch = 0;
    std::vector<EpochLog> log;
    bool diverged = false;
};

inline MetricsReport evaluate_tokens(const nn::ModelParams<float>& params,
                                     const std::vector<std::pair<TokenSequence, int>>& samples) {
    if (samples.empty()) throw DataError("evaluate: empty sample list");
    ConfusionCounts c;
    for (const auto& [seq, label] : samples) {
        auto res = nn::forward(seq, params, /*training=*/false, /*dropout_seed=*/0);
        if (res.label == 1)
            (label == 1 ? c.tp : c.fp)++;
        else
            (label == 1 ? c.fn : c.tn)++;
    }
    return compute_metrics(c);
}

inline MetricsReport evaluate(const nn::ModelParams<float>& params, const BlockDictionary& dict,
                              const std::vector<PayloadSample>& samples) {
    if (samples.empty()) throw DataError("evaluate: empty sample list");
    std::vector<std::pair<TokenSequence, int>> toks;
    toks.reserve(samples.size());
    for (const auto& s : samples) toks.emplace_back(tokenize(s.payload, dict, s.id), s.label);
    return evaluate_tokens(params, toks);
}

// Epochs of seeded shuffled mini-batches; tracks the checkpoint with the best
// validation F1 and stops early once `patience` epochs pass without
// improvement. A non-finite loss aborts with the last good checkpoint.
inline TrainResult train(const std::vector<std::pair<TokenSequence, int>>& train_set,
                         const std::vector<std::pair<TokenSequence, int>>& val_set, std::size_t vocab,
                         const TrainRunConfig& cfg) {
    cfg.validate();
    if (train_set.empty() || val_set.empty()) throw DataError("train: empty train or validation set");

    TrainResult result;
    nn::ModelParams<float> params;
    params.init(cfg.model, vocab, cfg.seed);
    result.best_params = params;
    nn::AdamOptimizer<float> opt(params, cfg.lr);

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::size_t stale = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng rng(mix_seed(cfg.seed, 0x65706f636800ULL + epoch));
        rng.shuffle(order);

        double loss_sum = 0;
        std::size_t batches = 0;
        try {
            for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
                std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
                std::vector<std::pair<TokenSequence, int>> batch;
                batch.reserve(hi - lo);
                for (std::size_t i = lo; i < hi; ++i) batch.push_back(train_set[order[i]]);
                auto lr = nn::loss_and_gradients(batch, params, mix_seed(cfg.seed, epoch * 1000003 + lo));
                opt.step(params, lr.grads);
                loss_sum += double(lr.loss);
                ++batches;
            }
        } catch (const DivergenceError&) {
            result.diverged = true;
            break;
        }

        EpochLog entry;
        entry.epoch = epoch;
        entry.train_loss = batches ? loss_sum / double(batches) : 0.0;
        entry.validation = evaluate_tokens(params, val_set);
        result.log.push_back(entry);

        if (entry.validation.f1 > result.best_val_f1) {
            result.best_val_f1 = entry.validation.f1;
            result.best_epoch = epoch;
            result.best_params = params;
            stale = 0;
        } else if (++stale >= cfg.early_stop_patience) {
            break;
        }
    }
    return result;
}

}  // namespace paysent::pipeline
