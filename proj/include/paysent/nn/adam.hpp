#pragma once

#include <cmath>
#include <cstdint>

#include "paysent/nn/params.hpp"

namespace paysent::nn {

// Adam with bias correction; beta1=0.9, beta2=0.999, eps=1e-8.
template <typename Scalar>
class AdamOptimizer {
public:
    explicit AdamOptimizer(const ModelParams<Scalar>& params, double lr = 1e-4)
        : lr_(lr) {
        m_.zero_like(params);
        v_.zero_like(params);
    }

    double learning_rate() const { return lr_; }

    void step(ModelParams<Scalar>& params, const Gradients<Scalar>& grads) {
        ++t_;
        const Scalar b1 = Scalar(0.9), b2 = Scalar(0.999), eps = Scalar(1e-8);
        const Scalar c1 = Scalar(1) - Scalar(std::pow(0.9, double(t_)));
        const Scalar c2 = Scalar(1) - Scalar(std::pow(0.999, double(t_)));
        const Scalar lr = Scalar(lr_);

        auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
            m = b1 * m + (Scalar(1) - b1) * g;
            v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
            auto mhat = (m / c1).eval();
            auto vhat = (v / c2).eval();
            p -= lr * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + eps).matrix());
        };

        const auto& gr = grads;
        update(params.embedding, gr.embedding, m_.embedding, v_.embedding);
        update(params.w_f, gr.w_f, m_.w_f, v_.w_f);
        update(params.w_i, gr.w_i, m_.w_i, v_.w_i);
        update(params.w_o, gr.w_o, m_.w_o, v_.w_o);
        update(params.w_c, gr.w_c, m_.w_c, v_.w_c);
        update(params.b_f, gr.b_f, m_.b_f, v_.b_f);
        update(params.b_i, gr.b_i, m_.b_i, v_.b_i);
        update(params.b_o, gr.b_o, m_.b_o, v_.b_o);
        update(params.b_c, gr.b_c, m_.b_c, v_.b_c);
        update(params.conv1_filters, gr.conv1_filters, m_.conv1_filters, v_.conv1_filters);
        update(params.conv1_bias, gr.conv1_bias, m_.conv1_bias, v_.conv1_bias);
        update(params.conv2_filters, gr.conv2_filters, m_.conv2_filters, v_.conv2_filters);
        update(params.conv2_bias, gr.conv2_bias, m_.conv2_bias, v_.conv2_bias);
        update(params.mlp1_w, gr.mlp1_w, m_.mlp1_w, v_.mlp1_w);
        update(params.mlp1_b, gr.mlp1_b, m_.mlp1_b, v_.mlp1_b);
        update(params.mlp2_w, gr.mlp2_w, m_.mlp2_w, v_.mlp2_w);
        update(params.mlp2_b, gr.mlp2_b, m_.mlp2_b, v_.mlp2_b);

        // PAD embedding row is frozen
        params.embedding.row(0).setZero();
        m_.embedding.row(0).setZero();
        v_.embedding.row(0).setZero();
    }

private:
    double lr_;
    std::uint64_t t_ = 0;
    Gradients<Scalar> m_, v_;
};

}  // namespace paysent::nn
