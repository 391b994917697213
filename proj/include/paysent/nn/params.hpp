#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "paysent/common.hpp"
#include "paysent/nn/config.hpp"

namespace paysent::nn {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// All learnable tensors. Row 0 of the embedding is the PAD row and stays
// exactly zero through initialization and every optimizer step.
template <typename Scalar>
struct ModelParams {
    ModelConfig config;
    std::size_t vocab = 0;  // dictionary entries, excluding PAD

    Mat<Scalar> embedding;  // (vocab+1) x embed_dim

    // LSTM gate weights, each lstm_hidden x (lstm_hidden + embed_dim), layout [W_h | W_x]
    Mat<Scalar> w_f, w_i, w_o, w_c;
    Vec<Scalar> b_f, b_i, b_o, b_c;

    // conv filter banks as (filter_h*filter_w*in_channels) x out_channels
    Mat<Scalar> conv1_filters, conv2_filters;
    Vec<Scalar> conv1_bias, conv2_bias;

    Mat<Scalar> mlp1_w;  // mlp_hidden x mlp_input_dim
    Vec<Scalar> mlp1_b;
    Mat<Scalar> mlp2_w;  // classes x mlp_hidden
    Vec<Scalar> mlp2_b;

    void allocate(const ModelConfig& cfg, std::size_t vocab_size) {
        cfg.validate();
        config = cfg;
        vocab = vocab_size;
        std::size_t E = cfg.embed_dim, H = cfg.lstm_hidden;
        std::size_t fhw = cfg.filter_h * cfg.filter_w;
        embedding = Mat<Scalar>::Zero(Eigen::Index(vocab + 1), Eigen::Index(E));
        w_f = Mat<Scalar>::Zero(Eigen::Index(H), Eigen::Index(H + E));
        w_i = w_f; w_o = w_f; w_c = w_f;
        b_f = Vec<Scalar>::Zero(Eigen::Index(H));
        b_i = b_f; b_o = b_f; b_c = b_f;
        conv1_filters = Mat<Scalar>::Zero(Eigen::Index(fhw), Eigen::Index(cfg.conv1_filters));
        conv1_bias = Vec<Scalar>::Zero(Eigen::Index(cfg.conv1_filters));
        conv2_filters = Mat<Scalar>::Zero(Eigen::Index(fhw * cfg.conv1_filters), Eigen::Index(cfg.conv2_filters));
        conv2_bias = Vec<Scalar>::Zero(Eigen::Index(cfg.conv2_filters));
        mlp1_w = Mat<Scalar>::Zero(Eigen::Index(cfg.mlp_hidden), Eigen::Index(cfg.mlp_input_dim()));
        mlp1_b = Vec<Scalar>::Zero(Eigen::Index(cfg.mlp_hidden));
        mlp2_w = Mat<Scalar>::Zero(Eigen::Index(ModelConfig::classes), Eigen::Index(cfg.mlp_hidden));
        mlp2_b = Vec<Scalar>::Zero(Eigen::Index(ModelConfig::classes));
    }

    // Glorot-uniform weights, zero biases except the forget gate bias (1.0),
    // PAD embedding row forced to zero.
    void init(const ModelConfig& cfg, std::size_t vocab_size, std::uint64_t seed) {
        allocate(cfg, vocab_size);
        Rng rng(mix_seed(seed, 0x696e6974ULL));  // "init"
        auto fill = [&rng](Mat<Scalar>& m, std::size_t fan_in, std::size_t fan_out) {
            double r = std::sqrt(6.0 / double(fan_in + fan_out));
            for (Eigen::Index i = 0; i < m.rows(); ++i)
                for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = Scalar(rng.uniform(-r, r));
        };
        std::size_t E = cfg.embed_dim, H = cfg.lstm_hidden;
        fill(embedding, vocab + 1, E);
        embedding.row(0).setZero();
        fill(w_f, H + E, H);
        fill(w_i, H + E, H);
        fill(w_o, H + E, H);
        fill(w_c, H + E, H);
        b_f.setConstant(Scalar(1));
        std::size_t fhw = cfg.filter_h * cfg.filter_w;
        fill(conv1_filters, fhw, fhw * cfg.conv1_filters);
        fill(conv2_filters, fhw * cfg.conv1_filters, fhw * cfg.conv2_filters);
        fill(mlp1_w, cfg.mlp_input_dim(), cfg.mlp_hidden);
        fill(mlp2_w, cfg.mlp_hidden, ModelConfig::classes);
    }

    template <typename F>
    void for_each_tensor(F&& fn) {
        fn("embedding", embedding);
        fn("lstm.w_f", w_f); fn("lstm.w_i", w_i); fn("lstm.w_o", w_o); fn("lstm.w_c", w_c);
        fn("lstm.b_f", b_f); fn("lstm.b_i", b_i); fn("lstm.b_o", b_o); fn("lstm.b_c", b_c);
        fn("conv1.filters", conv1_filters); fn("conv1.bias", conv1_bias);
        fn("conv2.filters", conv2_filters); fn("conv2.bias", conv2_bias);
        fn("mlp1.w", mlp1_w); fn("mlp1.b", mlp1_b);
        fn("mlp2.w", mlp2_w); fn("mlp2.b", mlp2_b);
    }

    bool all_finite() {
        bool ok = true;
        for_each_tensor([&ok](const char*, auto& t) { ok = ok && t.allFinite(); });
        return ok;
    }
};

// Gradients mirror the parameter layout exactly.
template <typename Scalar>
struct Gradients : ModelParams<Scalar> {
    void zero_like(const ModelParams<Scalar>& p) {
        this->allocate(p.config, p.vocab);
    }

    void add(const Gradients<Scalar>& o) {
        Gradients<Scalar>& self = *this;
        // tensor-wise sum in fixed declaration order
        self.embedding += o.embedding;
        self.w_f += o.w_f; self.w_i += o.w_i; self.w_o += o.w_o; self.w_c += o.w_c;
        self.b_f += o.b_f; self.b_i += o.b_i; self.b_o += o.b_o; self.b_c += o.b_c;
        self.conv1_filters += o.conv1_filters; self.conv1_bias += o.conv1_bias;
        self.conv2_filters += o.conv2_filters; self.conv2_bias += o.conv2_bias;
        self.mlp1_w += o.mlp1_w; self.mlp1_b += o.mlp1_b;
        self.mlp2_w += o.mlp2_w; self.mlp2_b += o.mlp2_b;
    }

    void scale(Scalar s) {
        this->for_each_tensor([s](const char*, auto& t) { t *= s; });
    }
};

namespace detail {

inline void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = (unsigned char)(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

inline void write_str(std::ostream& os, const std::string& s) {
    write_u64(os, s.size());
    os.write(s.data(), std::streamsize(s.size()));
}

inline std::string read_str(std::istream& is) {
    std::uint64_t n = read_u64(is);
    std::string s(n, '\0');
    is.read(s.data(), std::streamsize(n));
    return s;
}

}  // namespace detail

// Checkpoint: versioned header (config + dictionary fingerprint), then the
// tensors in a fixed order as little-endian float32 with name/shape records.
inline void save_checkpoint(const std::string& path, ModelParams<float>& params, std::uint64_t dict_fingerprint) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("checkpoint: cannot open " + path + " for writing");
    f.write("PSCKPT01", 8);
    const ModelConfig& c = params.config;
    detail::write_u64(f, c.embed_dim);
    detail::write_u64(f, c.lstm_hidden);
    detail::write_u64(f, c.chosen_states);
    detail::write_u64(f, c.conv1_filters);
    detail::write_u64(f, c.conv2_filters);
    detail::write_u64(f, c.filter_h);
    detail::write_u64(f, c.filter_w);
    detail::write_u64(f, c.pool_h);
    detail::write_u64(f, c.pool_w);
    detail::write_u64(f, c.mlp_hidden);
    double dr = c.dropout_rate;
    std::uint64_t dr_bits;
    std::memcpy(&dr_bits, &dr, 8);
    detail::write_u64(f, dr_bits);
    detail::write_str(f, to_string(c.variant));
    detail::write_u64(f, params.vocab);
    detail::write_u64(f, dict_fingerprint);

    std::uint64_t count = 0;
    params.for_each_tensor([&count](const char*, auto&) { ++count; });
    detail::write_u64(f, count);
    params.for_each_tensor([&f](const char* name, auto& t) {
        detail::write_str(f, name);
        detail::write_u64(f, std::uint64_t(t.rows()));
        detail::write_u64(f, std::uint64_t(t.cols()));
        for (Eigen::Index i = 0; i < t.rows(); ++i)
            for (Eigen::Index j = 0; j < t.cols(); ++j) {
                float v = float(t(i, j));
                std::uint32_t bits;
                std::memcpy(&bits, &v, 4);
                unsigned char b[4] = {(unsigned char)bits, (unsigned char)(bits >> 8), (unsigned char)(bits >> 16),
                                      (unsigned char)(bits >> 24)};
                f.write(reinterpret_cast<const char*>(b), 4);
            }
    });
    if (!f) throw DataError("checkpoint: write failed for " + path);
}

struct Checkpoint {
    ModelParams<float> params;
    std::uint64_t dict_fingerprint = 0;
};

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("checkpoint: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::string(magic, 8) != "PSCKPT01") throw DataError("checkpoint: bad magic in " + path);

    ModelConfig c;
    c.embed_dim = detail::read_u64(f);
    c.lstm_hidden = detail::read_u64(f);
    c.chosen_states = detail::read_u64(f);
    c.conv1_filters = detail::read_u64(f);
    c.conv2_filters = detail::read_u64(f);
    c.filter_h = detail::read_u64(f);
    c.filter_w = detail::read_u64(f);
    c.pool_h = detail::read_u64(f);
    c.pool_w = detail::read_u64(f);
    c.mlp_hidden = detail::read_u64(f);
    std::uint64_t dr_bits = detail::read_u64(f);
    std::memcpy(&c.dropout_rate, &dr_bits, 8);
    c.variant = variant_from_string(detail::read_str(f));
    std::uint64_t vocab = detail::read_u64(f);

    Checkpoint ck;
    ck.dict_fingerprint = detail::read_u64(f);
    ck.params.allocate(c, vocab);

    std::uint64_t count = detail::read_u64(f);
    std::uint64_t seen = 0;
    ck.params.for_each_tensor([&](const char* name, auto& t) {
        std::string got = detail::read_str(f);
        if (got != name) throw DataError("checkpoint: tensor order mismatch, expected " + std::string(name));
        std::uint64_t rows = detail::read_u64(f), cols = detail::read_u64(f);
        if (rows != std::uint64_t(t.rows()) || cols != std::uint64_t(t.cols()))
            throw DataError("checkpoint: shape mismatch for " + std::string(name));
        for (Eigen::Index i = 0; i < t.rows(); ++i)
            for (Eigen::Index j = 0; j < t.cols(); ++j) {
                unsigned char b[4];
                f.read(reinterpret_cast<char*>(b), 4);
                std::uint32_t bits = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
                                     (std::uint32_t(b[3]) << 24);
                float v;
                std::memcpy(&v, &bits, 4);
                t(i, j) = v;
            }
        ++seen;
    });
    if (!f || seen != count) throw DataError("checkpoint: truncated file " + path);
    return ck;
}

}  // namespace paysent::nn
