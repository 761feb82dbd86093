#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "dualdst/rewards.hpp"
#include "dualdst/rng.hpp"
#include "dualdst/state.hpp"

using namespace dualdst;

TEST_CASE("bleu identity and disjoint anchors") {
    Tokens a = split_tokens("i want cheap food please .");
    CHECK(bleu(a, a) == 1.0);
    CHECK(bleu(split_tokens("x y z"), split_tokens("p q r")) == 0.0);
    CHECK(bleu({}, a) == 0.0);
    CHECK_THROWS_AS(bleu(a, {}), EmptyReference);
}

TEST_CASE("bleu two-token smoothing case") {
    // p1 = 1/2, p2 smoothed to 1/2, p3 = p4 smoothed to 1, BP = 1.
    double got = bleu(split_tokens("a b"), split_tokens("a c"));
    CHECK(got == Catch::Approx(std::pow(0.25, 0.25)).epsilon(1e-12));
}

TEST_CASE("bleu stays within [0,1] and penalizes brevity") {
    Rng rng(17);
    std::vector<std::string> words = {"a", "b", "c", "d", "e"};
    for (int trial = 0; trial < 300; ++trial) {
        Tokens cand, ref;
        size_t cl = rng.uniform_int(8), rl = 1 + rng.uniform_int(8);
        for (size_t i = 0; i < cl; ++i) cand.push_back(rng.choice(words));
        for (size_t i = 0; i < rl; ++i) ref.push_back(rng.choice(words));
        double s = bleu(cand, ref);
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
    }
    double shorter = bleu(split_tokens("the cat sat"), split_tokens("the cat sat on the mat"));
    CHECK(shorter == Catch::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("bleu golden fixture matches to 1e-9") {
    std::ifstream in(std::string(DUALDST_FIXTURE_DIR) + "/bleu_golden.jsonl");
    REQUIRE(in.good());
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        double got = bleu(split_tokens(j["candidate"].get<std::string>()),
                          split_tokens(j["reference"].get<std::string>()));
        INFO(j["candidate"].get<std::string>() << " | " << j["reference"].get<std::string>());
        CHECK(std::fabs(got - j["expected"].get<double>()) < 1e-9);
        ++n;
    }
    CHECK(n == 20);
}

TEST_CASE("mix_reward arithmetic") {
    CHECK(mix_reward(-2.0, 0.6, 0.5) == Catch::Approx(-0.7).epsilon(1e-15));
    CHECK(mix_reward(-2.0, 0.6, 1.0) == -2.0);
    CHECK(mix_reward(-2.0, 0.6, 0.0) == 0.6);
    CHECK_THROWS_AS(mix_reward(0.0, 0.0, 1.5), std::invalid_argument);

    // Linear in both arguments.
    Rng rng(23);
    for (int i = 0; i < 100; ++i) {
        double rk = rng.uniform_real(-5, 0), rb = rng.uniform_real(0, 1);
        double s = rng.uniform_real(-2, 2);
        CHECK(mix_reward(s * rk, 0.0, 0.5) == Catch::Approx(s * mix_reward(rk, 0.0, 0.5)));
        CHECK(mix_reward(rk, rb, 0.5) == Catch::Approx(mix_reward(rb, rk, 0.5)));  // symmetric
    }
}

TEST_CASE("mixing identity is exact at alpha 0.5") {
    Rng rng(29);
    for (int i = 0; i < 200; ++i) {
        double rk = rng.uniform_real(-5, 0), rb = rng.uniform_real(0, 1);
        double r = mix_reward(rk, rb, 0.5);
        CHECK(std::fabs(r - (0.5 * rk + 0.5 * rb)) == 0.0);
    }
}

TEST_CASE("reward baseline follows the running-mean recurrence") {
    RewardBaseline b;

    SECTION("first reward initializes") {
        CHECK(b.update(LoopTag::StateLoop, -1.25) == -1.25);
        CHECK(b.value(LoopTag::StateLoop) == -1.25);
    }
    SECTION("constant rewards converge to the constant") {
        for (int i = 0; i < 200; ++i) b.update(LoopTag::StateLoop, 0.7);
        CHECK(b.value(LoopTag::StateLoop) == Catch::Approx(0.7).epsilon(1e-9));
    }
    SECTION("alternating rewards damp toward zero") {
        for (int i = 0; i < 500; ++i) b.update(LoopTag::ContextLoop, (i % 2 == 0) ? 1.0 : -1.0);
        CHECK(std::fabs(b.value(LoopTag::ContextLoop)) < 0.1);
    }
    SECTION("loops keep separate baselines") {
        b.update(LoopTag::StateLoop, 1.0);
        b.update(LoopTag::ContextLoop, -1.0);
        CHECK(b.value(LoopTag::StateLoop) == 1.0);
        CHECK(b.value(LoopTag::ContextLoop) == -1.0);
    }
}

TEST_CASE("clip_reward bounds the LM reward scale") {
    CHECK(clip_reward(-7.3) == -5.0);
    CHECK(clip_reward(0.5) == 0.0);
    CHECK(clip_reward(-1.2) == -1.2);
}
