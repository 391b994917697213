#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "paysent/nn/model.hpp"
#include "support/oracles.hpp"

using namespace paysent;
using namespace paysent::nn;

namespace {

ModelConfig tiny_config(Variant variant = Variant::full) {
    ModelConfig c;
    c.embed_dim = 4;
    c.lstm_hidden = 4;
    c.chosen_states = 4;
    c.conv1_filters = 2;
    c.conv2_filters = 2;
    c.filter_h = c.filter_w = 2;
    c.mlp_hidden = 6;
    c.dropout_rate = 0.0;
    c.variant = variant;
    return c;
}

TokenSequence seq_of(std::vector<std::int32_t> ids) {
    TokenSequence s;
    s.tokens = std::move(ids);
    return s;
}

}  // namespace

TEST_CASE("embed: PAD row is zero, lookups repeat") {
    ModelParams<float> p;
    p.init(tiny_config(), 10, 1);

    CHECK(embed<float>({}, p).rows() == 0);

    auto pad = embed<float>({0}, p);
    CHECK(pad.row(0).norm() == 0.0f);

    auto two = embed<float>({3, 3}, p);
    CHECK((two.row(0) - two.row(1)).norm() == 0.0f);
    CHECK(two.row(0).norm() > 0.0f);

    CHECK_THROWS_AS(embed<float>({11}, p), DataError);
}

TEST_CASE("lstm_step: analytic zero case") {
    ModelParams<float> p;
    p.allocate(tiny_config(), 10);  // all weights and biases zero
    auto s0 = LstmState<float>::zero(4);
    Vec<float> v = Vec<float>::Ones(4);
    auto s1 = lstm_step(s0, v, p);
    CHECK(s1.h.norm() == 0.0f);
    CHECK(s1.c.norm() == 0.0f);
}

TEST_CASE("lstm_step: saturated output gate forces h to zero") {
    ModelParams<float> p;
    p.allocate(tiny_config(), 10);
    p.b_o.setConstant(-1000.0f);
    p.b_i.setConstant(10.0f);   // let some cell state build up
    p.b_c.setConstant(2.0f);
    auto s = LstmState<float>::zero(4);
    Vec<float> v = Vec<float>::Ones(4);
    for (int t = 0; t < 3; ++t) s = lstm_step(s, v, p);
    CHECK(s.c.cwiseAbs().maxCoeff() > 0.1f);
    CHECK(s.h.cwiseAbs().maxCoeff() < 1e-6f);
}

TEST_CASE("lstm: random cell matches the straight-line oracle over 3 steps") {
    const std::size_t H = 2, E = 3;
    ModelConfig cfg = tiny_config(Variant::lstm_only);  // avoids the CNN grid-size constraint
    cfg.lstm_hidden = H;
    cfg.embed_dim = E;
    ModelParams<double> p;
    p.init(cfg, 5, 123);

    oracle::LstmOracleWeights w;
    auto to_rows = [&](const Mat<double>& m) {
        std::vector<std::vector<double>> rows;
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            std::vector<double> row;
            for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
            rows.push_back(row);
        }
        return rows;
    };
    auto to_vec = [](const Vec<double>& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    w.wf = to_rows(p.w_f); w.wi = to_rows(p.w_i); w.wo = to_rows(p.w_o); w.wc = to_rows(p.w_c);
    w.bf = to_vec(p.b_f); w.bi = to_vec(p.b_i); w.bo = to_vec(p.b_o); w.bc = to_vec(p.b_c);

    Rng rng(9);
    Mat<double> v(3, Eigen::Index(E));
    for (Eigen::Index t = 0; t < 3; ++t)
        for (Eigen::Index j = 0; j < Eigen::Index(E); ++j) v(t, j) = rng.uniform(-1, 1);

    // library path: both the step function and the unrolled batch version
    auto cache = lstm_forward(v, p);
    auto state = LstmState<double>::zero(H);
    std::vector<double> oh(H, 0.0), oc(H, 0.0);
    for (Eigen::Index t = 0; t < 3; ++t) {
        state = lstm_step(state, Vec<double>(v.row(t).transpose()), p);
        std::vector<double> vt(v.row(t).data(), v.row(t).data() + E);
        std::tie(oh, oc) = oracle::lstm_oracle_step(oh, oc, vt, w);
        for (std::size_t r = 0; r < H; ++r) {
            CHECK(state.h(Eigen::Index(r)) == doctest::Approx(oh[r]).epsilon(1e-12));
            CHECK(cache.h(t, Eigen::Index(r)) == doctest::Approx(oh[r]).epsilon(1e-12));
            CHECK(cache.c(t, Eigen::Index(r)) == doctest::Approx(oc[r]).epsilon(1e-12));
        }
    }
}

TEST_CASE("lstm: gates bounded, h in (-1,1)") {
    ModelConfig cfg = tiny_config();
    Rng rng(41);
    for (int iter = 0; iter < 20; ++iter) {
        ModelParams<float> p;
        p.init(cfg, 8, rng.next_u64());
        // exaggerate weights to push toward saturation
        p.w_f *= 10.0f; p.w_i *= 10.0f; p.w_o *= 10.0f; p.w_c *= 10.0f;
        Mat<float> v(6, Eigen::Index(cfg.embed_dim));
        for (Eigen::Index t = 0; t < v.rows(); ++t)
            for (Eigen::Index j = 0; j < v.cols(); ++j) v(t, j) = float(rng.uniform(-5, 5));
        auto cache = lstm_forward(v, p);
        // saturated sigmoids round to exactly 0/1 in float, so closed bounds
        CHECK(cache.f.minCoeff() >= 0.0f);
        CHECK(cache.f.maxCoeff() <= 1.0f);
        CHECK(cache.i.minCoeff() >= 0.0f);
        CHECK(cache.i.maxCoeff() <= 1.0f);
        CHECK(cache.o.minCoeff() >= 0.0f);
        CHECK(cache.o.maxCoeff() <= 1.0f);
        CHECK(cache.g.cwiseAbs().maxCoeff() <= 1.0f);
        CHECK(cache.h.cwiseAbs().maxCoeff() <= 1.0f);
    }
}

TEST_CASE("select_states: stated examples and monotonicity") {
    auto idx = select_indices(10, 5);
    CHECK(idx == std::vector<std::size_t>{1, 3, 5, 7, 9});  // 1-based 2,4,6,8,10

    auto identity = select_indices(7, 7);
    for (std::size_t i = 0; i < 7; ++i) CHECK(identity[i] == i);

    Mat<float> h(3, 4);
    h.setRandom();
    auto padded = select_states(h, 5);
    CHECK(padded.rows() == 5);
    CHECK((padded.row(0) - h.row(0)).norm() == 0.0f);
    CHECK((padded.row(2) - h.row(2)).norm() == 0.0f);
    CHECK(padded.row(3).norm() == 0.0f);
    CHECK(padded.row(4).norm() == 0.0f);

    Rng rng(3);
    for (int iter = 0; iter < 200; ++iter) {
        std::size_t m = 1 + std::size_t(rng.below(8));
        std::size_t n = m + std::size_t(rng.below(40));
        auto sel = select_indices(n, m);
        REQUIRE(sel.size() == m);
        CHECK(sel.back() == n - 1);  // always includes the last state
        for (std::size_t i = 1; i < sel.size(); ++i) CHECK(sel[i] > sel[i - 1]);
    }
}

TEST_CASE("cnn_forward: zero input gives zero features") {
    ModelParams<float> p;
    p.init(tiny_config(), 10, 7);
    p.conv1_bias.setZero();
    p.conv2_bias.setZero();
    Mat<float> zeros = Mat<float>::Zero(6, 8);
    auto feat = cnn_forward(zeros, p, static_cast<CnnCache<float>*>(nullptr));
    CHECK(feat.cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("cnn: SAME conv of all-ones 4x4 filter over all-ones 4x4 input peaks at 16") {
    ModelConfig cfg = tiny_config();
    cfg.filter_h = cfg.filter_w = 4;
    cfg.conv1_filters = 1;
    ModelParams<float> p;
    p.allocate(cfg, 4);
    p.conv1_filters.setOnes();

    Mat<float> input = Mat<float>::Ones(16, 1);
    auto cache = conv_relu_pool_forward(input, 4, 4, 1, p.conv1_filters, p.conv1_bias, cfg);
    // full-overlap position is (1,1) with top/left padding of 1
    CHECK(cache.pre(1 * 4 + 1, 0) == doctest::Approx(16.0));
    CHECK(cache.pre.maxCoeff() == doctest::Approx(16.0));
}

TEST_CASE("cnn pipeline matches the naive nested-loop oracle") {
    ModelConfig cfg = tiny_config();
    cfg.chosen_states = 8;
    cfg.lstm_hidden = 8;  // 8x8 grid
    cfg.conv1_filters = 2;
    cfg.conv2_filters = 3;
    cfg.filter_h = 3;
    cfg.filter_w = 2;

    Rng rng(77);
    for (int iter = 0; iter < 10; ++iter) {
        ModelParams<double> p;
        p.init(cfg, 4, rng.next_u64());
        Mat<double> grid(8, 8);
        for (Eigen::Index i = 0; i < 8; ++i)
            for (Eigen::Index j = 0; j < 8; ++j) grid(i, j) = rng.uniform(-2, 2);

        CnnCache<double> cache;
        auto feat = cnn_forward(grid, p, &cache);

        // oracle path in plain vectors
        auto mat_to_rows = [](const Mat<double>& m) {
            std::vector<std::vector<double>> rows;
            for (Eigen::Index i = 0; i < m.rows(); ++i)
                rows.emplace_back(m.row(i).data(), m.row(i).data() + m.cols());
            return rows;
        };
        std::vector<std::vector<double>> input;
        for (Eigen::Index i = 0; i < 8; ++i)
            for (Eigen::Index j = 0; j < 8; ++j) input.push_back({grid(i, j)});

        auto bias1 = std::vector<double>(p.conv1_bias.data(), p.conv1_bias.data() + p.conv1_bias.size());
        auto bias2 = std::vector<double>(p.conv2_bias.data(), p.conv2_bias.data() + p.conv2_bias.size());
        auto c1 = oracle::naive_maxpool(
            oracle::naive_relu(oracle::naive_conv_same(input, 8, 8, 1, mat_to_rows(p.conv1_filters), bias1, 3, 2)),
            8, 8, 2, 2);
        auto c2 = oracle::naive_maxpool(
            oracle::naive_relu(oracle::naive_conv_same(c1, 4, 4, 2, mat_to_rows(p.conv2_filters), bias2, 3, 2)),
            4, 4, 2, 2);

        std::size_t idx = 0;
        for (const auto& pos : c2)
            for (double v : pos) {
                CHECK(feat(Eigen::Index(idx)) == doctest::Approx(v).epsilon(1e-10));
                ++idx;
            }
        CHECK(idx == std::size_t(feat.size()));
    }
}

TEST_CASE("classify: softmax behavior and tie rule") {
    ModelConfig cfg = tiny_config();
    ModelParams<float> p;
    p.allocate(cfg, 4);  // zero weights: z = (0,0)
    Vec<float> feat = Vec<float>::Ones(Eigen::Index(cfg.mlp_input_dim()));
    auto res = classify(feat, p, false, 0);
    CHECK(res.probs(0) == doctest::Approx(0.5));
    CHECK(res.probs(1) == doctest::Approx(0.5));
    CHECK(res.label == 0);  // tie goes to normal

    // bias the logits: z = (1,3) means anomalous wins
    p.mlp2_b << 1.0f, 3.0f;
    auto res2 = classify(feat, p, false, 0);
    CHECK(res2.probs(1) > res2.probs(0));
    CHECK(res2.label == 1);
    CHECK(double(res2.probs(0) + res2.probs(1)) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("classify: dropout disabled means training flag is irrelevant") {
    ModelConfig cfg = tiny_config();
    cfg.dropout_rate = 0.0;
    ModelParams<float> p;
    p.init(cfg, 4, 3);
    Vec<float> feat = Vec<float>::Ones(Eigen::Index(cfg.mlp_input_dim()));
    auto a = classify(feat, p, true, 99);
    auto b = classify(feat, p, false, 0);
    CHECK((a.probs - b.probs).norm() == 0.0f);
}

TEST_CASE("softmax normalization holds under random logits") {
    ModelConfig cfg = tiny_config();
    Rng rng(55);
    for (int iter = 0; iter < 100; ++iter) {
        ModelParams<float> p;
        p.init(cfg, 4, rng.next_u64());
        p.mlp2_b << float(rng.uniform(-30, 30)), float(rng.uniform(-30, 30));
        Vec<float> feat(Eigen::Index(cfg.mlp_input_dim()));
        for (Eigen::Index i = 0; i < feat.size(); ++i) feat(i) = float(rng.uniform(-3, 3));
        auto res = classify(feat, p, false, 0);
        CHECK(double(res.probs(0) + res.probs(1)) == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(res.probs(0) > 0.0f);
        CHECK(res.probs(1) > 0.0f);
        // argmax(s) == argmax(z)
        Vec<float> z = p.mlp2_w * (p.mlp1_w * feat + p.mlp1_b).cwiseMax(0.0f) + p.mlp2_b;
        CHECK((res.probs(1) > res.probs(0)) == (z(1) > z(0)));
    }
}

TEST_CASE("forward: zero params, empty tokens, and purity") {
    for (Variant variant : {Variant::full, Variant::lstm_only, Variant::cnn_only}) {
        CAPTURE(nn::to_string(variant));
        ModelParams<float> zero;
        zero.allocate(tiny_config(variant), 10);
        auto res = forward(seq_of({}), zero, false, 0);
        CHECK(res.scores.s0 == doctest::Approx(0.5));
        CHECK(res.scores.s1 == doctest::Approx(0.5));

        ModelParams<float> p;
        p.init(tiny_config(variant), 10, 17);
        auto a = forward(seq_of({1, 2, 3, 4, 5, 1}), p, false, 0);
        auto b = forward(seq_of({1, 2, 3, 4, 5, 1}), p, false, 0);
        CHECK(a.scores.s0 == b.scores.s0);
        CHECK(a.scores.s1 == b.scores.s1);

        // single token: exercises the n < m padding path end to end
        auto one = forward(seq_of({2}), p, false, 0);
        CHECK(one.scores.s0 + one.scores.s1 == doctest::Approx(1.0));
    }
}

TEST_CASE("variant isolation: lstm_only ignores conv params, cnn_only ignores lstm params") {
    ModelParams<float> p;
    p.init(tiny_config(Variant::lstm_only), 10, 5);
    auto base = forward(seq_of({1, 2, 3, 4}), p, false, 0);
    p.conv1_filters.setConstant(99.0f);
    p.conv2_filters.setConstant(-99.0f);
    auto perturbed = forward(seq_of({1, 2, 3, 4}), p, false, 0);
    CHECK(base.scores.s0 == perturbed.scores.s0);
    CHECK(base.scores.s1 == perturbed.scores.s1);

    ModelParams<float> q;
    q.init(tiny_config(Variant::cnn_only), 10, 5);
    auto base2 = forward(seq_of({1, 2, 3, 4}), q, false, 0);
    q.w_f.setConstant(7.0f);
    q.w_c.setConstant(-7.0f);
    q.b_o.setConstant(3.0f);
    auto perturbed2 = forward(seq_of({1, 2, 3, 4}), q, false, 0);
    CHECK(base2.scores.s0 == perturbed2.scores.s0);
    CHECK(base2.scores.s1 == perturbed2.scores.s1);
}

TEST_CASE("checkpoint round trip reproduces inference bit for bit") {
    ModelConfig cfg = tiny_config();
    cfg.dropout_rate = 0.1;
    ModelParams<float> p;
    p.init(cfg, 12, 21);

    auto path = (std::filesystem::temp_directory_path() / "paysent_ckpt_test.bin").string();
    save_checkpoint(path, p, 0xdeadbeefULL);
    auto loaded = load_checkpoint(path);
    std::filesystem::remove(path);

    CHECK(loaded.dict_fingerprint == 0xdeadbeefULL);
    CHECK(loaded.params.vocab == 12);
    CHECK(loaded.params.config.dropout_rate == cfg.dropout_rate);

    Rng rng(2);
    for (int iter = 0; iter < 20; ++iter) {
        std::vector<std::int32_t> ids;
        for (int j = 0; j < int(1 + rng.below(12)); ++j) ids.push_back(std::int32_t(rng.below(13)));
        auto a = forward(seq_of(ids), p, false, 0);
        auto b = forward(seq_of(ids), loaded.params, false, 0);
        CHECK(a.scores.s0 == b.scores.s0);
        CHECK(a.scores.s1 == b.scores.s1);
        CHECK(a.label == b.label);
    }
}
