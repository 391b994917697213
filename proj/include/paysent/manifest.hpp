#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "paysent/blockfeat.hpp"
#include "paysent/common.hpp"
#include "paysent/pipeline/train.hpp"

namespace paysent {

inline constexpr const char* kToolVersion = "0.1.0";

inline Bytes read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path);
    Bytes data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return data;
}

inline void write_file(const std::string& path, const Bytes& data) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size()));
    if (!f) throw DataError("write failed for " + path);
}

inline nlohmann::json config_to_json(const pipeline::TrainRunConfig& cfg) {
    return {
        {"epochs", cfg.epochs},
        {"batch_size", cfg.batch_size},
        {"lr", cfg.lr},
        {"seed", cfg.seed},
        {"early_stop_patience", cfg.early_stop_patience},
        {"variant", nn::to_string(cfg.model.variant)},
        {"block", {{"block_length", cfg.block.block_length}, {"stride", cfg.block.stride}, {"dict_size", cfg.block.dict_size}}},
        {"model",
         {{"embed_dim", cfg.model.embed_dim},
          {"lstm_hidden", cfg.model.lstm_hidden},
          {"chosen_states", cfg.model.chosen_states},
          {"conv1_filters", cfg.model.conv1_filters},
          {"conv2_filters", cfg.model.conv2_filters},
          {"filter_size", {cfg.model.filter_h, cfg.model.filter_w}},
          {"pool_size", {cfg.model.pool_h, cfg.model.pool_w}},
          {"mlp_hidden", cfg.model.mlp_hidden},
          {"dropout_rate", cfg.model.dropout_rate}}},
    };
}

// A manifest plus the referenced inputs is enough to reproduce a run
// bit-for-bit on the same platform.
struct RunManifest {
    pipeline::TrainRunConfig config;
    std::string input_path;
    std::uint64_t input_digest = 0;
    std::uint64_t dict_fingerprint = 0;
    std::uint64_t seed = 0;
    std::string checkpoint_path, dictionary_path, log_path;

    nlohmann::json to_json() const {
        return {
            {"tool_version", kToolVersion},
            {"config", config_to_json(config)},
            {"input", {{"path", input_path}, {"fnv1a", input_digest}}},
            {"dictionary_fingerprint", dict_fingerprint},
            {"seed", seed},
            {"artifacts",
             {{"checkpoint", checkpoint_path}, {"dictionary", dictionary_path}, {"log", log_path}}},
        };
    }

    void save(const std::string& path) const {
        std::ofstream f(path);
        if (!f) throw DataError("cannot open " + path + " for writing");
        f << to_json().dump(2) << "\n";
    }
};

}  // namespace paysent
