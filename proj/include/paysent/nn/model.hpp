#pragma once

#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

#include "paysent/blockfeat.hpp"
#include "paysent/common.hpp"
#include "paysent/nn/config.hpp"
#include "paysent/nn/params.hpp"

namespace paysent::nn {

template <typename Scalar>
struct LstmState {
    Vec<Scalar> h;
    Vec<Scalar> c;

    static LstmState zero(std::size_t hidden) {
        LstmState s;
        s.h = Vec<Scalar>::Zero(Eigen::Index(hidden));
        s.c = Vec<Scalar>::Zero(Eigen::Index(hidden));
        return s;
    }
};

namespace detail {

template <typename Scalar>
Scalar sigmoid(Scalar x) {
    return Scalar(1) / (Scalar(1) + std::exp(-x));
}

}  // namespace detail

// token ids -> embedded vectors, one row per step; PAD (0) is the zero row
template <typename Scalar>
Mat<Scalar> embed(const std::vector<std::int32_t>& tokens, const ModelParams<Scalar>& params) {
    Mat<Scalar> v(Eigen::Index(tokens.size()), params.embedding.cols());
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        if (tokens[t] < 0 || std::size_t(tokens[t]) > params.vocab)
            throw DataError("embed: token id out of range: " + std::to_string(tokens[t]));
        v.row(Eigen::Index(t)) = params.embedding.row(tokens[t]);
    }
    return v;
}

// single recurrence step; the unrolled training path uses lstm_forward below
template <typename Scalar>
LstmState<Scalar> lstm_step(const LstmState<Scalar>& state, const Vec<Scalar>& v_t,
                            const ModelParams<Scalar>& params) {
    std::size_t H = params.config.lstm_hidden, E = params.config.embed_dim;
    if (std::size_t(state.h.size()) != H || std::size_t(v_t.size()) != E)
        throw DataError("lstm_step: dimension mismatch");
    Vec<Scalar> hv(Eigen::Index(H + E));
    hv << state.h, v_t;
    Vec<Scalar> f = (params.w_f * hv + params.b_f).unaryExpr([](Scalar x) { return detail::sigmoid(x); });
    Vec<Scalar> i = (params.w_i * hv + params.b_i).unaryExpr([](Scalar x) { return detail::sigmoid(x); });
    Vec<Scalar> o = (params.w_o * hv + params.b_o).unaryExpr([](Scalar x) { return detail::sigmoid(x); });
    Vec<Scalar> g = (params.w_c * hv + params.b_c).array().tanh();
    LstmState<Scalar> next;
    next.c = f.cwiseProduct(state.c) + i.cwiseProduct(g);
    next.h = o.cwiseProduct(next.c.array().tanh().matrix());
    return next;
}

template <typename Scalar>
struct LstmCache {
    // all n x H, rows indexed by time step
    Mat<Scalar> f, i, o, g, c, h, h_prev;
};

template <typename Scalar>
LstmCache<Scalar> lstm_forward(const Mat<Scalar>& v, const ModelParams<Scalar>& params) {
    const std::size_t H = params.config.lstm_hidden, E = params.config.embed_dim;
    const Eigen::Index n = v.rows(), Hi = Eigen::Index(H);

    auto wh = [&](const Mat<Scalar>& w) { return w.leftCols(Eigen::Index(H)); };
    auto wx = [&](const Mat<Scalar>& w) { return w.rightCols(Eigen::Index(E)); };

    // input projections for the whole sequence at once
    Mat<Scalar> xf = v * wx(params.w_f).transpose();
    Mat<Scalar> xi = v * wx(params.w_i).transpose();
    Mat<Scalar> xo = v * wx(params.w_o).transpose();
    Mat<Scalar> xg = v * wx(params.w_c).transpose();

    LstmCache<Scalar> cc;
    cc.f.resize(n, Hi); cc.i.resize(n, Hi); cc.o.resize(n, Hi); cc.g.resize(n, Hi);
    cc.c.resize(n, Hi); cc.h.resize(n, Hi); cc.h_prev.resize(n, Hi);

    Vec<Scalar> h = Vec<Scalar>::Zero(Hi), c = Vec<Scalar>::Zero(Hi);
    for (Eigen::Index t = 0; t < n; ++t) {
        cc.h_prev.row(t) = h.transpose();
        Vec<Scalar> f = (wh(params.w_f) * h + xf.row(t).transpose() + params.b_f)
                            .unaryExpr([](Scalar x) { return detail::sigmoid(x); });
        Vec<Scalar> i = (wh(params.w_i) * h + xi.row(t).transpose() + params.b_i)
                            .unaryExpr([](Scalar x) { return detail::sigmoid(x); });
        Vec<Scalar> o = (wh(params.w_o) * h + xo.row(t).transpose() + params.b_o)
                            .unaryExpr([](Scalar x) { return detail::sigmoid(x); });
        Vec<Scalar> g = (wh(params.w_c) * h + xg.row(t).transpose() + params.b_c).array().tanh();
        c = f.cwiseProduct(c) + i.cwiseProduct(g);
        h = o.cwiseProduct(c.array().tanh().matrix());
        cc.f.row(t) = f.transpose(); cc.i.row(t) = i.transpose(); cc.o.row(t) = o.transpose();
        cc.g.row(t) = g.transpose(); cc.c.row(t) = c.transpose(); cc.h.row(t) = h.transpose();
    }
    return cc;
}

// BPTT. dh_ext holds the external gradient arriving at each h_t (n x H).
// Accumulates parameter grads into `grads` and returns dV (n x E).
template <typename Scalar>
Mat<Scalar> lstm_backward(const Mat<Scalar>& v, const LstmCache<Scalar>& cc, const Mat<Scalar>& dh_ext,
                          const ModelParams<Scalar>& params, Gradients<Scalar>& grads) {
    const std::size_t H = params.config.lstm_hidden, E = params.config.embed_dim;
    const Eigen::Index n = v.rows(), Hi = Eigen::Index(H);

    auto wh = [&](const Mat<Scalar>& w) { return w.leftCols(Eigen::Index(H)); };
    auto wx = [&](const Mat<Scalar>& w) { return w.rightCols(Eigen::Index(E)); };

    Mat<Scalar> dzf(n, Hi), dzi(n, Hi), dzo(n, Hi), dzg(n, Hi);
    Vec<Scalar> dh_next = Vec<Scalar>::Zero(Hi), dc_next = Vec<Scalar>::Zero(Hi);

    for (Eigen::Index t = n - 1; t >= 0; --t) {
        Vec<Scalar> dh = dh_ext.row(t).transpose() + dh_next;
        Vec<Scalar> f = cc.f.row(t).transpose(), i = cc.i.row(t).transpose(), o = cc.o.row(t).transpose();
        Vec<Scalar> g = cc.g.row(t).transpose(), c = cc.c.row(t).transpose();
        Vec<Scalar> c_prev = (t > 0) ? Vec<Scalar>(cc.c.row(t - 1).transpose()) : Vec<Scalar>(Vec<Scalar>::Zero(Hi));

        Vec<Scalar> tc = c.array().tanh();
        Vec<Scalar> dzo_t = dh.cwiseProduct(tc).cwiseProduct(o).cwiseProduct(Vec<Scalar>::Ones(Hi) - o);
        Vec<Scalar> dc = dc_next + dh.cwiseProduct(o).cwiseProduct(
                                       (Vec<Scalar>::Ones(Hi) - tc.cwiseProduct(tc)));
        Vec<Scalar> dzf_t = dc.cwiseProduct(c_prev).cwiseProduct(f).cwiseProduct(Vec<Scalar>::Ones(Hi) - f);
        Vec<Scalar> dzi_t = dc.cwiseProduct(g).cwiseProduct(i).cwiseProduct(Vec<Scalar>::Ones(Hi) - i);
        Vec<Scalar> dzg_t = dc.cwiseProduct(i).cwiseProduct(Vec<Scalar>::Ones(Hi) - g.cwiseProduct(g));

        dzf.row(t) = dzf_t.transpose(); dzi.row(t) = dzi_t.transpose();
        dzo.row(t) = dzo_t.transpose(); dzg.row(t) = dzg_t.transpose();

        dc_next = dc.cwiseProduct(f);
        dh_next = wh(params.w_f).transpose() * dzf_t + wh(params.w_i).transpose() * dzi_t +
                  wh(params.w_o).transpose() * dzo_t + wh(params.w_c).transpose() * dzg_t;
    }

    grads.w_f.leftCols(Hi) += dzf.transpose() * cc.h_prev;
    grads.w_i.leftCols(Hi) += dzi.transpose() * cc.h_prev;
    grads.w_o.leftCols(Hi) += dzo.transpose() * cc.h_prev;
    grads.w_c.leftCols(Hi) += dzg.transpose() * cc.h_prev;
    grads.w_f.rightCols(Eigen::Index(E)) += dzf.transpose() * v;
    grads.w_i.rightCols(Eigen::Index(E)) += dzi.transpose() * v;
    grads.w_o.rightCols(Eigen::Index(E)) += dzo.transpose() * v;
    grads.w_c.rightCols(Eigen::Index(E)) += dzg.transpose() * v;
    grads.b_f += dzf.colwise().sum().transpose();
    grads.b_i += dzi.colwise().sum().transpose();
    grads.b_o += dzo.colwise().sum().transpose();
    grads.b_c += dzg.colwise().sum().transpose();

    return dzf * wx(params.w_f) + dzi * wx(params.w_i) + dzo * wx(params.w_o) + dzg * wx(params.w_c);
}

// Equally spaced hidden-state selection. With n >= m the 1-based indices are
// floor((i+1)*n/m); with n < m all states are taken and zero rows pad the tail.
inline std::vector<std::size_t> select_indices(std::size_t n, std::size_t m) {
    std::vector<std::size_t> idx;
    if (n >= m) {
        idx.reserve(m);
        for (std::size_t i = 0; i < m; ++i) idx.push_back((i + 1) * n / m - 1);  // 0-based
    } else {
        idx.reserve(n);
        for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
    }
    return idx;
}

template <typename Scalar>
Mat<Scalar> select_states(const Mat<Scalar>& hidden, std::size_t m) {
    if (hidden.rows() == 0) throw DataError("select_states: empty state sequence");
    auto idx = select_indices(std::size_t(hidden.rows()), m);
    Mat<Scalar> out = Mat<Scalar>::Zero(Eigen::Index(m), hidden.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(Eigen::Index(i)) = hidden.row(Eigen::Index(idx[i]));
    return out;
}

// ---- CNN ----

template <typename Scalar>
struct ConvLayerCache {
    Mat<Scalar> patches;  // (h*w) x (fh*fw*cin)
    Mat<Scalar> pre;      // pre-ReLU, (h*w) x cout
    Mat<Scalar> pooled;   // (ho*wo) x cout
    std::vector<std::int32_t> argmax;  // per (pooled pos, channel): input position
    std::size_t h = 0, w = 0, ho = 0, wo = 0;
};

// SAME zero padding, stride 1; even kernels pad one less at top/left
template <typename Scalar>
Mat<Scalar> im2col_same(const Mat<Scalar>& input, std::size_t h, std::size_t w, std::size_t cin,
                        std::size_t fh, std::size_t fw) {
    const std::ptrdiff_t pt = std::ptrdiff_t((fh - 1) / 2), pl = std::ptrdiff_t((fw - 1) / 2);
    Mat<Scalar> patches = Mat<Scalar>::Zero(Eigen::Index(h * w), Eigen::Index(fh * fw * cin));
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t u = 0; u < fh; ++u) {
            std::ptrdiff_t ir = std::ptrdiff_t(r) - pt + std::ptrdiff_t(u);
            if (ir < 0 || ir >= std::ptrdiff_t(h)) continue;
            for (std::size_t v = 0; v < fw; ++v) {
                // contiguous run of valid columns for this (u,v) offset
                std::ptrdiff_t c0 = std::max<std::ptrdiff_t>(0, pl - std::ptrdiff_t(v));
                std::ptrdiff_t c1 = std::min<std::ptrdiff_t>(std::ptrdiff_t(w),
                                                             std::ptrdiff_t(w) + pl - std::ptrdiff_t(v));
                for (std::ptrdiff_t c = c0; c < c1; ++c) {
                    std::ptrdiff_t ic = c - pl + std::ptrdiff_t(v);
                    patches.block(Eigen::Index(r * w) + Eigen::Index(c), Eigen::Index((u * fw + v) * cin), 1,
                                  Eigen::Index(cin)) = input.row(Eigen::Index(std::size_t(ir) * w) + Eigen::Index(ic));
                }
            }
        }
    }
    return patches;
}

template <typename Scalar>
void col2im_same(const Mat<Scalar>& dpatches, std::size_t h, std::size_t w, std::size_t cin, std::size_t fh,
                 std::size_t fw, Mat<Scalar>& dinput) {
    const std::ptrdiff_t pt = std::ptrdiff_t((fh - 1) / 2), pl = std::ptrdiff_t((fw - 1) / 2);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t u = 0; u < fh; ++u) {
            std::ptrdiff_t ir = std::ptrdiff_t(r) - pt + std::ptrdiff_t(u);
            if (ir < 0 || ir >= std::ptrdiff_t(h)) continue;
            for (std::size_t v = 0; v < fw; ++v) {
                std::ptrdiff_t c0 = std::max<std::ptrdiff_t>(0, pl - std::ptrdiff_t(v));
                std::ptrdiff_t c1 = std::min<std::ptrdiff_t>(std::ptrdiff_t(w),
                                                             std::ptrdiff_t(w) + pl - std::ptrdiff_t(v));
                for (std::ptrdiff_t c = c0; c < c1; ++c) {
                    std::ptrdiff_t ic = c - pl + std::ptrdiff_t(v);
                    dinput.row(Eigen::Index(std::size_t(ir) * w) + Eigen::Index(ic)) +=
                        dpatches.block(Eigen::Index(r * w) + Eigen::Index(c), Eigen::Index((u * fw + v) * cin), 1,
                                       Eigen::Index(cin));
                }
            }
        }
    }
}

template <typename Scalar>
ConvLayerCache<Scalar> conv_relu_pool_forward(const Mat<Scalar>& input, std::size_t h, std::size_t w,
                                              std::size_t cin, const Mat<Scalar>& filters, const Vec<Scalar>& bias,
                                              const ModelConfig& cfg) {
    ConvLayerCache<Scalar> cc;
    cc.h = h;
    cc.w = w;
    const std::size_t cout = std::size_t(filters.cols());
    cc.patches = im2col_same(input, h, w, cin, cfg.filter_h, cfg.filter_w);
    cc.pre = cc.patches * filters;
    cc.pre.rowwise() += bias.transpose();

    cc.ho = h / cfg.pool_h;
    cc.wo = w / cfg.pool_w;
    if (cc.ho == 0 || cc.wo == 0) throw DataError("cnn: grid collapsed to zero during pooling");
    cc.pooled.resize(Eigen::Index(cc.ho * cc.wo), Eigen::Index(cout));
    cc.argmax.assign(cc.ho * cc.wo * cout, 0);

    for (std::size_t r = 0; r < cc.ho; ++r) {
        for (std::size_t c = 0; c < cc.wo; ++c) {
            for (std::size_t k = 0; k < cout; ++k) {
                Scalar best = std::numeric_limits<Scalar>::lowest();
                std::int32_t best_pos = 0;
                for (std::size_t u = 0; u < cfg.pool_h; ++u) {
                    for (std::size_t v = 0; v < cfg.pool_w; ++v) {
                        std::size_t pos = (r * cfg.pool_h + u) * w + (c * cfg.pool_w + v);
                        // ReLU before pooling; max of non-negative values
                        Scalar val = std::max(Scalar(0), cc.pre(Eigen::Index(pos), Eigen::Index(k)));
                        if (val > best) {
                            best = val;
                            best_pos = std::int32_t(pos);
                        }
                    }
                }
                cc.pooled(Eigen::Index(r * cc.wo + c), Eigen::Index(k)) = best;
                cc.argmax[(r * cc.wo + c) * cout + k] = best_pos;
            }
        }
    }
    return cc;
}

// returns d(input); accumulates dfilters/dbias
template <typename Scalar>
Mat<Scalar> conv_relu_pool_backward(const Mat<Scalar>& dpooled, const ConvLayerCache<Scalar>& cc,
                                    const Mat<Scalar>& filters, std::size_t cin, const ModelConfig& cfg,
                                    Mat<Scalar>& dfilters, Vec<Scalar>& dbias) {
    const std::size_t cout = std::size_t(filters.cols());
    Mat<Scalar> dpre = Mat<Scalar>::Zero(cc.pre.rows(), cc.pre.cols());
    for (std::size_t p = 0; p < cc.ho * cc.wo; ++p) {
        for (std::size_t k = 0; k < cout; ++k) {
            std::int32_t pos = cc.argmax[p * cout + k];
            // gradient flows only where the pre-activation was positive
            if (cc.pre(pos, Eigen::Index(k)) > Scalar(0))
                dpre(pos, Eigen::Index(k)) += dpooled(Eigen::Index(p), Eigen::Index(k));
        }
    }
    dfilters += cc.patches.transpose() * dpre;
    dbias += dpre.colwise().sum().transpose();
    Mat<Scalar> dpatches = dpre * filters.transpose();
    Mat<Scalar> dinput = Mat<Scalar>::Zero(Eigen::Index(cc.h * cc.w), Eigen::Index(cin));
    col2im_same(dpatches, cc.h, cc.w, cin, cfg.filter_h, cfg.filter_w, dinput);
    return dinput;
}

template <typename Scalar>
struct CnnCache {
    ConvLayerCache<Scalar> layer1, layer2;
};

// states: rows x cols grid, single channel; output: flattened (h,w,c) row-major
template <typename Scalar>
Vec<Scalar> cnn_forward(const Mat<Scalar>& states, const ModelParams<Scalar>& params, CnnCache<Scalar>* cache) {
    const ModelConfig& cfg = params.config;
    std::size_t h = std::size_t(states.rows()), w = std::size_t(states.cols());

    // grid values as (h*w) x 1 channel-last layout
    Mat<Scalar> input(Eigen::Index(h * w), 1);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) input(Eigen::Index(r * w + c), 0) = states(Eigen::Index(r), Eigen::Index(c));

    CnnCache<Scalar> local;
    CnnCache<Scalar>& cc = cache ? *cache : local;
    cc.layer1 = conv_relu_pool_forward(input, h, w, 1, params.conv1_filters, params.conv1_bias, cfg);
    cc.layer2 = conv_relu_pool_forward(cc.layer1.pooled, cc.layer1.ho, cc.layer1.wo, cfg.conv1_filters,
                                       params.conv2_filters, params.conv2_bias, cfg);

    // (ho*wo) x cout row-major flatten == (h, w, c) row-major flatten
    Vec<Scalar> feat(cc.layer2.pooled.size());
    Eigen::Index idx = 0;
    for (Eigen::Index i = 0; i < cc.layer2.pooled.rows(); ++i)
        for (Eigen::Index j = 0; j < cc.layer2.pooled.cols(); ++j) feat(idx++) = cc.layer2.pooled(i, j);
    return feat;
}

template <typename Scalar>
Mat<Scalar> cnn_backward(const Vec<Scalar>& dfeat, const CnnCache<Scalar>& cc, const ModelParams<Scalar>& params,
                         std::size_t rows, std::size_t cols, Gradients<Scalar>& grads) {
    const ModelConfig& cfg = params.config;
    Mat<Scalar> dpooled2(cc.layer2.pooled.rows(), cc.layer2.pooled.cols());
    Eigen::Index idx = 0;
    for (Eigen::Index i = 0; i < dpooled2.rows(); ++i)
        for (Eigen::Index j = 0; j < dpooled2.cols(); ++j) dpooled2(i, j) = dfeat(idx++);

    Mat<Scalar> dpooled1 = conv_relu_pool_backward(dpooled2, cc.layer2, params.conv2_filters, cfg.conv1_filters, cfg,
                                                   grads.conv2_filters, grads.conv2_bias);
    Mat<Scalar> dinput = conv_relu_pool_backward(dpooled1, cc.layer1, params.conv1_filters, 1, cfg,
                                                 grads.conv1_filters, grads.conv1_bias);

    Mat<Scalar> dstates{Eigen::Index(rows), Eigen::Index(cols)};
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) dstates(Eigen::Index(r), Eigen::Index(c)) = dinput(Eigen::Index(r * cols + c), 0);
    return dstates;
}

// ---- classifier ----

template <typename Scalar>
struct MlpCache {
    Vec<Scalar> features;
    Vec<Scalar> pre;       // before ReLU
    Vec<Scalar> hidden;    // after ReLU + dropout
    Vec<Scalar> mask;      // dropout scaling per unit (1/(1-rate) or 0)
    Vec<Scalar> probs;
    int label = 0;
};

struct ScoreDistribution {
    double s0 = 0.5, s1 = 0.5;
};

template <typename Scalar>
MlpCache<Scalar> classify(const Vec<Scalar>& features, const ModelParams<Scalar>& params, bool training,
                          std::uint64_t dropout_seed) {
    const ModelConfig& cfg = params.config;
    if (std::size_t(features.size()) != cfg.mlp_input_dim()) throw DataError("classify: feature length mismatch");

    MlpCache<Scalar> cc;
    cc.features = features;
    cc.pre = params.mlp1_w * features + params.mlp1_b;
    Vec<Scalar> act = cc.pre.cwiseMax(Scalar(0));

    cc.mask = Vec<Scalar>::Ones(act.size());
    if (training && cfg.dropout_rate > 0.0) {
        Rng rng(mix_seed(dropout_seed, 0x64726f70ULL));  // "drop"
        Scalar scale = Scalar(1.0 / (1.0 - cfg.dropout_rate));
        for (Eigen::Index i = 0; i < cc.mask.size(); ++i)
            cc.mask(i) = (rng.uniform() < cfg.dropout_rate) ? Scalar(0) : scale;
    }
    cc.hidden = act.cwiseProduct(cc.mask);

    Vec<Scalar> z = params.mlp2_w * cc.hidden + params.mlp2_b;
    Scalar zmax = z.maxCoeff();
    Vec<Scalar> e = (z.array() - zmax).exp();
    cc.probs = e / e.sum();
    // argmax label; exact tie goes to normal (0)
    cc.label = (cc.probs(1) > cc.probs(0)) ? 1 : 0;
    return cc;
}

// dz -> grads + d(features)
template <typename Scalar>
Vec<Scalar> classify_backward(const Vec<Scalar>& dz, const MlpCache<Scalar>& cc, const ModelParams<Scalar>& params,
                              Gradients<Scalar>& grads) {
    grads.mlp2_w += dz * cc.hidden.transpose();
    grads.mlp2_b += dz;
    Vec<Scalar> dhidden = params.mlp2_w.transpose() * dz;
    Vec<Scalar> dact = dhidden.cwiseProduct(cc.mask);
    Vec<Scalar> dpre = (cc.pre.array() > Scalar(0)).select(dact, Vec<Scalar>::Zero(dact.size()));
    grads.mlp1_w += dpre * cc.features.transpose();
    grads.mlp1_b += dpre;
    return params.mlp1_w.transpose() * dpre;
}

// ---- whole-model forward / backward ----

template <typename Scalar>
struct ForwardCache {
    std::vector<std::int32_t> tokens;  // after empty -> [PAD] substitution
    Mat<Scalar> v;                     // n x E
    LstmCache<Scalar> lstm;
    std::vector<std::size_t> sel;      // selected time-step indices
    Mat<Scalar> grid;                  // matrix fed to the CNN (or flattened for lstm_only)
    CnnCache<Scalar> cnn;
    MlpCache<Scalar> mlp;
};

template <typename Scalar>
struct ForwardResult {
    ScoreDistribution scores;
    int label = 0;
};

template <typename Scalar>
ForwardResult<Scalar> forward(const TokenSequence& tokens, const ModelParams<Scalar>& params, bool training,
                              std::uint64_t dropout_seed, ForwardCache<Scalar>* cache = nullptr) {
    const ModelConfig& cfg = params.config;
    ForwardCache<Scalar> local;
    ForwardCache<Scalar>& cc = cache ? *cache : local;

    cc.tokens = tokens.tokens;
    if (cc.tokens.empty()) cc.tokens.push_back(0);  // empty sequences become [PAD]

    cc.v = embed(cc.tokens, params);
    const std::size_t n = cc.tokens.size(), m = cfg.chosen_states;

    Vec<Scalar> feat;
    if (cfg.variant == Variant::cnn_only) {
        // first m embedded vectors, zero-padded, as the CNN grid
        cc.grid = Mat<Scalar>::Zero(Eigen::Index(m), Eigen::Index(cfg.embed_dim));
        std::size_t take = std::min(n, m);
        cc.grid.topRows(Eigen::Index(take)) = cc.v.topRows(Eigen::Index(take));
        feat = cnn_forward(cc.grid, params, &cc.cnn);
    } else {
        cc.lstm = lstm_forward(cc.v, params);
        cc.sel = select_indices(n, m);
        cc.grid = Mat<Scalar>::Zero(Eigen::Index(m), Eigen::Index(cfg.lstm_hidden));
        for (std::size_t i = 0; i < cc.sel.size(); ++i)
            cc.grid.row(Eigen::Index(i)) = cc.lstm.h.row(Eigen::Index(cc.sel[i]));
        if (cfg.variant == Variant::full) {
            feat = cnn_forward(cc.grid, params, &cc.cnn);
        } else {  // lstm_only: flattened selected states straight into the MLP
            feat.resize(cc.grid.size());
            Eigen::Index idx = 0;
            for (Eigen::Index i = 0; i < cc.grid.rows(); ++i)
                for (Eigen::Index j = 0; j < cc.grid.cols(); ++j) feat(idx++) = cc.grid(i, j);
        }
    }

    cc.mlp = classify(feat, params, training, dropout_seed);

    ForwardResult<Scalar> res;
    res.scores.s0 = double(cc.mlp.probs(0));
    res.scores.s1 = double(cc.mlp.probs(1));
    res.label = cc.mlp.label;
    return res;
}

// cross-entropy backward for one sample; accumulates into grads
template <typename Scalar>
void backward(const ForwardCache<Scalar>& cc, int label, const ModelParams<Scalar>& params,
              Gradients<Scalar>& grads) {
    const ModelConfig& cfg = params.config;
    Vec<Scalar> dz = cc.mlp.probs;
    dz(label) -= Scalar(1);

    Vec<Scalar> dfeat = classify_backward(dz, cc.mlp, params, grads);

    Mat<Scalar> dgrid;
    if (cfg.variant == Variant::full || cfg.variant == Variant::cnn_only) {
        dgrid = cnn_backward(dfeat, cc.cnn, params, std::size_t(cc.grid.rows()), std::size_t(cc.grid.cols()), grads);
    } else {
        dgrid.resize(cc.grid.rows(), cc.grid.cols());
        Eigen::Index idx = 0;
        for (Eigen::Index i = 0; i < dgrid.rows(); ++i)
            for (Eigen::Index j = 0; j < dgrid.cols(); ++j) dgrid(i, j) = dfeat(idx++);
    }

    const std::size_t n = cc.tokens.size();
    Mat<Scalar> dv;
    if (cfg.variant == Variant::cnn_only) {
        std::size_t take = std::min(n, cfg.chosen_states);
        dv = Mat<Scalar>::Zero(Eigen::Index(n), Eigen::Index(cfg.embed_dim));
        dv.topRows(Eigen::Index(take)) = dgrid.topRows(Eigen::Index(take));
    } else {
        // route grid-row gradients to the selected hidden states only
        Mat<Scalar> dh_ext = Mat<Scalar>::Zero(Eigen::Index(n), Eigen::Index(cfg.lstm_hidden));
        for (std::size_t i = 0; i < cc.sel.size(); ++i)
            dh_ext.row(Eigen::Index(cc.sel[i])) += dgrid.row(Eigen::Index(i));
        dv = lstm_backward(cc.v, cc.lstm, dh_ext, params, grads);
    }

    // scatter-add into used embedding rows; PAD row stays zero
    for (std::size_t t = 0; t < n; ++t)
        if (cc.tokens[t] != 0) grads.embedding.row(cc.tokens[t]) += dv.row(Eigen::Index(t));
}

template <typename Scalar>
struct LossResult {
    Scalar loss = 0;
    Gradients<Scalar> grads;
};

// mean cross-entropy over the batch with exact reverse-mode gradients
template <typename Scalar>
LossResult<Scalar> loss_and_gradients(const std::vector<std::pair<TokenSequence, int>>& batch,
                                      const ModelParams<Scalar>& params, std::uint64_t seed) {
    if (batch.empty()) throw DataError("loss_and_gradients: empty batch");

    LossResult<Scalar> res;
    res.grads.zero_like(params);

    unsigned workers = std::min<unsigned>(worker_count(), unsigned(batch.size()));
    if (workers <= 1) {
        Scalar total = 0;
        ForwardCache<Scalar> cc;
        for (std::size_t b = 0; b < batch.size(); ++b) {
            forward(batch[b].first, params, true, mix_seed(seed, b), &cc);
            total += -std::log(std::max(cc.mlp.probs(batch[b].second), std::numeric_limits<Scalar>::min()));
            backward(cc, batch[b].second, params, res.grads);
        }
        res.loss = total / Scalar(batch.size());
    } else {
        // contiguous chunks per worker; chunk partials reduced in fixed order
        std::vector<Gradients<Scalar>> partial(workers);
        std::vector<Scalar> losses(workers, Scalar(0));
        std::vector<std::thread> threads;
        std::size_t chunk = (batch.size() + workers - 1) / workers;
        for (unsigned w = 0; w < workers; ++w) {
            threads.emplace_back([&, w]() {
                partial[w].zero_like(params);
                std::size_t lo = w * chunk, hi = std::min(batch.size(), lo + chunk);
                ForwardCache<Scalar> cc;
                for (std::size_t b = lo; b < hi; ++b) {
                    forward(batch[b].first, params, true, mix_seed(seed, b), &cc);
                    losses[w] += -std::log(std::max(cc.mlp.probs(batch[b].second), std::numeric_limits<Scalar>::min()));
                    backward(cc, batch[b].second, params, partial[w]);
                }
            });
        }
        for (auto& t : threads) t.join();
        Scalar total = 0;
        for (unsigned w = 0; w < workers; ++w) {
            total += losses[w];
            res.grads.add(partial[w]);
        }
        res.loss = total / Scalar(batch.size());
    }

    res.grads.scale(Scalar(1) / Scalar(batch.size()));
    res.grads.embedding.row(0).setZero();

    if (!std::isfinite(double(res.loss))) throw DivergenceError("loss is not finite");
    return res;
}

}  // namespace paysent::nn
