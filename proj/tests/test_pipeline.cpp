#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>

#include "paysent/pipeline/ablation.hpp"
#include "paysent/pipeline/perturb.hpp"
#include "paysent/pipeline/sweep.hpp"
#include "support/synth_http.hpp"

using namespace paysent;
using namespace paysent::pipeline;

namespace {

nn::ModelConfig tiny_model(nn::Variant variant = nn::Variant::full) {
    nn::ModelConfig c;
    c.embed_dim = 8;
    c.lstm_hidden = 8;
    c.chosen_states = 8;
    c.conv1_filters = 4;
    c.conv2_filters = 4;
    c.filter_h = c.filter_w = 2;
    c.mlp_hidden = 16;
    c.dropout_rate = 0.0;
    c.variant = variant;
    return c;
}

TrainRunConfig tiny_run(std::uint64_t seed) {
    TrainRunConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.lr = 0.01;
    cfg.seed = seed;
    cfg.early_stop_patience = 3;
    cfg.model = tiny_model();
    cfg.block = BlockConfig{2, 1, 64};
    return cfg;
}

SplitViews synth_views(std::size_t n_normal, std::size_t n_anomalous, std::uint64_t seed) {
    auto samples = synth::make_dataset(n_normal, n_anomalous, seed);
    auto split = split_dataset(samples, seed);
    return materialize_split(samples, split);
}

std::vector<float> flatten(nn::ModelParams<float>& p) {
    std::vector<float> out;
    p.for_each_tensor([&out](const char*, auto& t) {
        for (Eigen::Index i = 0; i < t.size(); ++i) out.push_back(float(t.data()[i]));
    });
    return out;
}

}  // namespace

TEST_CASE("train: epoch log is well formed") {
    auto views = synth_views(40, 40, 5);
    auto outcome = run_experiment(views, tiny_run(5));
    REQUIRE(!outcome.training.log.empty());
    CHECK(outcome.training.log.size() <= 3);
    for (std::size_t i = 0; i < outcome.training.log.size(); ++i) {
        const auto& e = outcome.training.log[i];
        CHECK(e.epoch == i + 1);
        CHECK(e.train_loss > 0.0);
        CHECK(std::isfinite(e.train_loss));
        CHECK(e.validation.counts.total() == views.validation.size());
    }
    CHECK(outcome.training.best_epoch >= 1);
    CHECK(outcome.training.best_val_f1 >= 0.0);
    CHECK(!outcome.training.diverged);
    CHECK(outcome.test_metrics.counts.total() == views.test.size());
}

TEST_CASE("train: bitwise deterministic across reruns") {
    auto views = synth_views(30, 30, 9);
    auto a = run_experiment(views, tiny_run(9));
    auto b = run_experiment(views, tiny_run(9));

    REQUIRE(a.training.log.size() == b.training.log.size());
    for (std::size_t i = 0; i < a.training.log.size(); ++i) {
        CHECK(a.training.log[i].train_loss == b.training.log[i].train_loss);
        CHECK(a.training.log[i].validation.f1 == b.training.log[i].validation.f1);
    }
    CHECK(flatten(a.training.best_params) == flatten(b.training.best_params));
    CHECK(a.test_metrics.accuracy == b.test_metrics.accuracy);

    auto c = run_experiment(views, tiny_run(10));  // different seed changes the run
    CHECK(flatten(a.training.best_params) != flatten(c.training.best_params));
}

TEST_CASE("train: fits a separable toy problem to 100% train accuracy") {
    // class 0 payloads are made of {a,b}, class 1 of {x,y}: disjoint bigrams
    std::vector<std::pair<TokenSequence, int>> train_set, val_set;
    std::vector<PayloadSample> corpus;
    Rng rng(13);
    for (int i = 0; i < 60; ++i) {
        PayloadSample s;
        s.id = i;
        int label = i % 2;
        const char* alpha = label ? "xy" : "ab";
        for (int j = 0; j < 24; ++j) s.payload.push_back(std::uint8_t(alpha[rng.below(2)]));
        s.label = label;
        corpus.push_back(std::move(s));
    }
    auto dict = BlockDictionary::fit(corpus, BlockConfig{2, 1, 16});
    for (int i = 0; i < 60; ++i) {
        auto seq = tokenize(corpus[std::size_t(i)].payload, dict);
        (i < 48 ? train_set : val_set).emplace_back(seq, corpus[std::size_t(i)].label);
    }

    TrainRunConfig cfg = tiny_run(3);
    cfg.epochs = 30;
    cfg.early_stop_patience = 30;
    auto result = train(train_set, val_set, dict.size(), cfg);
    CHECK(!result.diverged);
    auto on_train = evaluate_tokens(result.best_params, train_set);
    CHECK(on_train.accuracy == 1.0);
    CHECK(result.best_val_f1 == 1.0);
}

TEST_CASE("evaluate: permutation invariant, rejects empty input") {
    auto views = synth_views(25, 25, 21);
    auto outcome = run_experiment(views, tiny_run(21));

    auto shuffled = views.test;
    Rng rng(4);
    rng.shuffle(shuffled);
    auto m1 = evaluate(outcome.training.best_params, outcome.dict, views.test);
    auto m2 = evaluate(outcome.training.best_params, outcome.dict, shuffled);
    CHECK(m1.counts.tp == m2.counts.tp);
    CHECK(m1.counts.fp == m2.counts.fp);
    CHECK(m1.counts.fn == m2.counts.fn);
    CHECK(m1.counts.tn == m2.counts.tn);

    CHECK_THROWS_AS(evaluate(outcome.training.best_params, outcome.dict, {}), DataError);
}

TEST_CASE("random_insertion: stated examples") {
    PayloadSample s;
    s.id = 7;
    s.payload = to_bytes("0123456789");  // len 10 -> 2 noise bytes
    auto p = random_insertion(s, 1);
    CHECK(p.payload.size() == 12);

    s.payload = to_bytes("abcd");  // len 4 -> floor(0.8) = 0, clamped to 1
    auto q = random_insertion(s, 1);
    CHECK(q.payload.size() == 5);

    s.payload.clear();
    CHECK(random_insertion(s, 1).payload.empty());
}

TEST_CASE("random_insertion: contiguous zero run, order preserved, deterministic") {
    Rng rng(31);
    for (int iter = 0; iter < 100; ++iter) {
        PayloadSample s;
        s.id = iter;
        std::size_t len = 1 + std::size_t(rng.below(80));
        for (std::size_t j = 0; j < len; ++j) s.payload.push_back(std::uint8_t(1 + rng.below(255)));

        auto p = random_insertion(s, 77);
        std::size_t noise = std::max<std::size_t>(1, len / 5);
        REQUIRE(p.payload.size() == len + noise);
        CHECK(p.label == s.label);
        CHECK(p.id == s.id);

        // locate the inserted run: remove it and expect the original back
        bool matched = false;
        for (std::size_t idx = 0; idx + noise <= p.payload.size() && !matched; ++idx) {
            bool all_zero = true;
            for (std::size_t j = 0; j < noise; ++j) all_zero = all_zero && p.payload[idx + j] == '0';
            if (!all_zero) continue;
            Bytes rest(p.payload.begin(), p.payload.begin() + std::ptrdiff_t(idx));
            rest.insert(rest.end(), p.payload.begin() + std::ptrdiff_t(idx + noise), p.payload.end());
            matched = rest == s.payload;
        }
        CHECK(matched);

        auto again = random_insertion(s, 77);
        CHECK(again.payload == p.payload);
        // a different sample id moves the insertion point eventually; just
        // confirm the function depends on the seed
    }
}

TEST_CASE("random_insertion: seed changes the insertion point") {
    PayloadSample s;
    s.id = 3;
    for (int j = 0; j < 50; ++j) s.payload.push_back(std::uint8_t('a' + j % 26));
    bool any_differ = false;
    auto base = random_insertion(s, 0).payload;
    for (std::uint64_t seed = 1; seed < 10; ++seed) any_differ = any_differ || random_insertion(s, seed).payload != base;
    CHECK(any_differ);
}

TEST_CASE("sweep: one row per value, rejects zero") {
    auto views = synth_views(25, 25, 41);
    TrainRunConfig cfg = tiny_run(41);
    cfg.epochs = 2;
    auto rows = run_sweep(views, cfg, SweepAxis::block_length, {1, 2});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].value == 1);
    CHECK(rows[1].value == 2);
    for (const auto& r : rows) CHECK(r.metrics.counts.total() == views.test.size());

    CHECK_THROWS_AS(run_sweep(views, cfg, SweepAxis::stride, {0}), UsageError);
    CHECK_THROWS_AS(sweep_axis_from_string("bogus"), UsageError);
    CHECK(sweep_axis_from_string("dict_size") == SweepAxis::dict_size);
}

TEST_CASE("ablation: six cells covering variant x feature mode") {
    auto views = synth_views(25, 25, 51);
    TrainRunConfig cfg = tiny_run(51);
    cfg.epochs = 2;
    auto table = run_ablation(views, cfg);
    REQUIRE(table.size() == 6);

    std::map<std::pair<std::string, bool>, std::size_t> seen;
    for (const auto& cell : table) {
        seen[{nn::to_string(cell.variant), cell.block_features}]++;
        CHECK(cell.metrics.counts.total() == views.test.size());
    }
    CHECK(seen.size() == 6);
    for (const auto& [key, count] : seen) CHECK(count == 1);
}

TEST_CASE("materialize_split: partitions the corpus exactly") {
    auto samples = synth::make_dataset(30, 30, 77);
    auto split = split_dataset(samples, 77);
    auto views = materialize_split(samples, split);
    CHECK(views.train.size() + views.validation.size() + views.test.size() == samples.size());
    for (std::size_t i = 0; i < views.train.size(); ++i) CHECK(views.train[i].id == split.train[i]);
    for (std::size_t i = 0; i < views.test.size(); ++i) CHECK(views.test[i].id == split.test[i]);
}
