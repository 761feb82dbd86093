#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "dualdst/tracker.hpp"
#include "test_util.hpp"

using namespace dualdst;
using dualdst::testing::mini_ontology;
using dualdst::testing::toy5;

namespace {

Tracker::Example make_example(const Dialogue& d, int t, int w) {
    return {build_context_input(d, t, w), serialize_state(d.turns[size_t(t - 1)].gold_state)};
}

}  // namespace

TEST_CASE("encode_context shape contract and unknown-token fallback") {
    TrackerConfig cfg;
    cfg.embed = 8;
    cfg.hidden = 6;
    Tracker tracker(mini_ontology(), cfg, 3);

    Tape t;
    ContextInput one{{"<EOB>"}};
    auto enc = tracker.encode_context(t, one);
    REQUIRE(enc.h.size() == 1);
    CHECK(t.value(enc.h[0]).shape == std::vector<int>{12});  // 2H

    // Out-of-vocabulary tokens map to <UNK> rather than failing.
    Tape t2;
    ContextInput weird{{"zzz-not-in-vocab", "<EOB>"}};
    CHECK(tracker.encode_context(t2, weird).h.size() == 2);

    CHECK_THROWS_AS(tracker.encode_context(t, ContextInput{}), EmptyInput);
}

TEST_CASE("encode_context with zero weights gives zero vectors") {
    TrackerConfig cfg;
    cfg.embed = 8;
    cfg.hidden = 6;
    Tracker tracker(mini_ontology(), cfg, 3);
    for (Parameter* p : tracker.params()) p->tensor.fill(0.0);
    Tape t;
    auto enc = tracker.encode_context(t, ContextInput{{"<alpha>", "<x>", "p", "<EOB>"}});
    for (Var h : enc.h)
        for (double v : t.value(h).data) CHECK(v == 0.0);
}

TEST_CASE("uniform tracker decodes with -ln vocab log-probs") {
    TrackerConfig cfg;
    cfg.embed = 8;
    cfg.hidden = 6;
    Tracker tracker(mini_ontology(), cfg, 3);
    for (Parameter* p : tracker.params()) p->tensor.fill(0.0);

    Tape t;
    auto enc = tracker.encode_context(t, ContextInput{{"<EOB>"}});
    Tokens gold_sketch = split_tokens("<alpha> <x> </alpha> <EOB>");
    auto dec = tracker.decode_sketch(t, enc, DecodeMode::Teacher, &gold_sketch);
    REQUIRE(dec.tokens.size() == 4);  // teacher mode returns gold length
    for (double lp : dec.logp)
        CHECK(lp == Catch::Approx(-std::log(double(tracker.tags().size()))).epsilon(1e-12));
}

TEST_CASE("tracker_loss of the uniform model is ln tags + ln vocab") {
    TrackerConfig cfg;
    cfg.embed = 8;
    cfg.hidden = 6;
    Tracker tracker(mini_ontology(), cfg, 3);
    for (Parameter* p : tracker.params()) p->tensor.fill(0.0);

    auto corpus = generate_corpus(mini_ontology(), 2, 5);
    Tape t;
    Var loss = tracker.batch_loss(t, {make_example(corpus[0], 1, 10)});
    double expect = std::log(double(tracker.tags().size())) +
                    std::log(double(tracker.vocab().size()));
    CHECK(t.value(loss).at(0) == Catch::Approx(expect).epsilon(1e-12));
}

TEST_CASE("greedy prediction is pure and always terminated") {
    TrackerConfig cfg;
    cfg.embed = 8;
    cfg.hidden = 6;
    cfg.sketch_cap = 6;
    cfg.state_cap = 8;
    Tracker tracker(toy5(), cfg, 11);

    auto corpus = generate_corpus(toy5(), 3, 13);
    for (const auto& d : corpus) {
        auto ctx = build_context_input(d, 1, 10);
        TrackerOutput a = tracker.predict(ctx);
        TrackerOutput b = tracker.predict(ctx);
        CHECK(a.sketch == b.sketch);
        CHECK(a.state_seq == b.state_seq);
        CHECK(a.sketch.back() == kEob);
        CHECK(a.state_seq.back() == kEob);
        // Sketch decoder emits only tag-vocabulary tokens.
        for (const auto& tok : a.sketch) CHECK(tracker.tags().contains(tok));
    }
}

TEST_CASE("tiny caps force truncation with a terminator") {
    TrackerConfig cfg;
    cfg.embed = 8;
    cfg.hidden = 6;
    cfg.sketch_cap = 2;
    cfg.state_cap = 2;
    Tracker tracker(toy5(), cfg, 17);
    auto corpus = generate_corpus(toy5(), 2, 19);
    auto out = tracker.predict(build_context_input(corpus[0], 1, 10));
    CHECK(out.sketch.size() <= 2);
    CHECK(out.sketch.back() == kEob);
    CHECK(out.state_seq.back() == kEob);
}

TEST_CASE("state decoder follows the monotone sketch pointer") {
    TrackerConfig cfg;
    cfg.embed = 8;
    cfg.hidden = 6;
    Tracker tracker(toy5(), cfg, 23);

    Tape t;
    ContextInput ctx{split_tokens("<EOB> [SYS] do you want a cheap hotel ? [USR] yes")};
    auto enc = tracker.encode_context(t, ctx);
    Tokens sketch = split_tokens("<hotel> <price> </hotel> <EOB>");
    auto sv = tracker.encode_sketch(t, sketch);
    REQUIRE(sv.size() == 4);
    Tokens gold = split_tokens("<hotel> <price> cheap </hotel> <EOB>");
    auto dec = tracker.decode_state(t, enc, sv, sketch, DecodeMode::Teacher, &gold);

    // Inputs per step: BOS embedding, then v_1 (<hotel>), v_2 (<price>),
    // then the embedding of the value token, then v_3 (</hotel>).
    REQUIRE(dec.align.size() == 5);
    CHECK(dec.align[0] == -1);
    CHECK(dec.align[1] == 0);
    CHECK(dec.align[2] == 1);
    CHECK(dec.align[3] == -1);
    CHECK(dec.align[4] == 2);
}

TEST_CASE("repeated sketch tags consume pointer positions in order") {
    TrackerConfig cfg;
    cfg.embed = 8;
    cfg.hidden = 6;
    Tracker tracker(toy5(), cfg, 29);

    Tape t;
    auto enc = tracker.encode_context(t, ContextInput{{"<EOB>"}});
    // <price> appears in two domains; each occurrence must bind once.
    Tokens sketch = split_tokens("<hotel> <price> </hotel> <restaurant> <price> </restaurant> <EOB>");
    auto sv = tracker.encode_sketch(t, sketch);
    Tokens gold =
        split_tokens("<hotel> <price> cheap </hotel> <restaurant> <price> cheap </restaurant> <EOB>");
    auto dec = tracker.decode_state(t, enc, sv, sketch, DecodeMode::Teacher, &gold);
    REQUIRE(dec.align.size() == 9);
    CHECK(dec.align[1] == 0);  // <hotel>
    CHECK(dec.align[2] == 1);  // first <price>
    CHECK(dec.align[4] == 2);  // </hotel>
    CHECK(dec.align[5] == 3);  // <restaurant>
    CHECK(dec.align[6] == 4);  // second <price> binds the *second* slot vector
    CHECK(dec.align[8] == 5);  // </restaurant>
}

TEST_CASE("full tracker loss passes the gradient check at hidden 8") {
    TrackerConfig cfg;
    cfg.embed = 8;
    cfg.hidden = 8;
    Tracker tracker(mini_ontology(), cfg, 7);
    REQUIRE(tracker.vocab().size() <= 40);
    auto params = tracker.params();
    Rng rng(43);
    for (Parameter* p : params) p->init_uniform(rng, 0.5);

    auto corpus = generate_corpus(mini_ontology(), 2, 31);
    std::vector<Tracker::Example> batch = {make_example(corpus[0], 2, 10),
                                           make_example(corpus[1], 1, 10)};
    double err = gradient_check(
        [&]() {
            Tape t;
            Var loss = tracker.batch_loss(t, batch);
            t.backward(loss);
            return t.value(loss).at(0);
        },
        params);
    CHECK(err < 1e-3);
}

TEST_CASE("policy gradient moves sampled sequences in the reward direction") {
    TrackerConfig cfg;
    cfg.embed = 8;
    cfg.hidden = 8;
    Tracker tracker(mini_ontology(), cfg, 37);
    auto corpus = generate_corpus(mini_ontology(), 1, 41);
    auto ctx = build_context_input(corpus[0], 1, 10);

    SECTION("zero advantage is an exact no-op") {
        std::vector<Tensor> before;
        for (Parameter* p : tracker.params()) before.push_back(p->tensor);
        Rng rng(1);
        auto out = tracker.sample(ctx, rng);
        AdamState opt;
        tracker.pg_update(ctx, out, 0.5, 0.5, opt);
        auto params = tracker.params();
        for (size_t i = 0; i < params.size(); ++i)
            CHECK(params[i]->tensor.data == before[i].data);
    }

    SECTION("positive advantage raises the sampled log-prob") {
        int up = 0, down = 0;
        for (int trial = 0; trial < 10; ++trial) {
            Tracker fresh(mini_ontology(), cfg, uint64_t(100 + trial));
            Rng rng{uint64_t(trial)};
            auto out = fresh.sample(ctx, rng);
            double before = fresh.score(ctx, out);
            AdamState opt;
            opt.lr = 1e-4;
            fresh.pg_update(ctx, out, 1.0, 0.0, opt);
            double after = fresh.score(ctx, out);
            if (after > before) ++up;

            Tracker fresh2(mini_ontology(), cfg, uint64_t(200 + trial));
            Rng rng2{uint64_t(trial)};
            auto out2 = fresh2.sample(ctx, rng2);
            double before2 = fresh2.score(ctx, out2);
            AdamState opt2;
            opt2.lr = 1e-4;
            fresh2.pg_update(ctx, out2, -1.0, 0.0, opt2);
            double after2 = fresh2.score(ctx, out2);
            if (after2 < before2) ++down;
        }
        CHECK(up >= 9);
        CHECK(down >= 9);
    }
}

TEST_CASE("tracker checkpoint round trip preserves predictions") {
    TrackerConfig cfg;
    cfg.embed = 8;
    cfg.hidden = 6;
    Tracker a(mini_ontology(), cfg, 47);
    auto corpus = generate_corpus(mini_ontology(), 1, 49);
    auto ctx = build_context_input(corpus[0], 1, 10);
    auto before = a.predict(ctx);

    auto path = std::filesystem::temp_directory_path() / "dualdst_tracker_test.json";
    a.save(path.string());
    Tracker b(mini_ontology(), cfg, 999);  // different init
    b.load(path.string());
    auto after = b.predict(ctx);
    CHECK(after.state_seq == before.state_seq);
    CHECK(after.sketch == before.sketch);

    // Loading into a differently-shaped model is rejected.
    Tracker wrong(mini_ontology(), TrackerConfig{8, 8, 64, 128}, 1);
    CHECK_THROWS_AS(wrong.load(path.string()), ShapeMismatch);
    std::filesystem::remove(path);
}
