#pragma once

#include <cstddef>
#include <string>

#include "paysent/common.hpp"

namespace paysent::nn {

enum class Variant { full, lstm_only, cnn_only };

inline std::string to_string(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::lstm_only: return "lstm_only";
        case Variant::cnn_only: return "cnn_only";
    }
    return "full";
}

inline Variant variant_from_string(const std::string& s) {
    if (s == "full") return Variant::full;
    if (s == "lstm_only") return Variant::lstm_only;
    if (s == "cnn_only") return Variant::cnn_only;
    throw UsageError("unknown model variant: " + s);
}

struct ModelConfig {
    std::size_t embed_dim = 64;
    std::size_t lstm_hidden = 128;
    std::size_t chosen_states = 50;  // m
    std::size_t conv1_filters = 32;
    std::size_t conv2_filters = 64;
    std::size_t filter_h = 4, filter_w = 4;
    std::size_t pool_h = 2, pool_w = 2;
    std::size_t mlp_hidden = 128;
    static constexpr std::size_t classes = 2;
    double dropout_rate = 0.1;
    Variant variant = Variant::full;

    void validate() const {
        if (embed_dim < 1 || lstm_hidden < 1 || chosen_states < 1 || conv1_filters < 1 || conv2_filters < 1 ||
            filter_h < 1 || filter_w < 1 || pool_h < 1 || pool_w < 1 || mlp_hidden < 1)
            throw UsageError("model config: all dimensions must be strictly positive");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw UsageError("model config: dropout rate must be in [0,1)");
    }

    // grid the CNN sees: rows x cols, one channel
    std::size_t cnn_rows() const { return chosen_states; }
    std::size_t cnn_cols() const { return variant == Variant::cnn_only ? embed_dim : lstm_hidden; }

    // flattened feature length entering the MLP
    std::size_t mlp_input_dim() const {
        if (variant == Variant::lstm_only) return chosen_states * lstm_hidden;
        std::size_t h = cnn_rows(), w = cnn_cols();
        h /= pool_h;  // after pool1 (floor)
        w /= pool_w;
        h /= pool_h;  // after pool2
        w /= pool_w;
        if (h == 0 || w == 0)
            throw UsageError("model config: CNN grid collapses to zero after pooling");
        return h * w * conv2_filters;
    }
};

}  // namespace paysent::nn
