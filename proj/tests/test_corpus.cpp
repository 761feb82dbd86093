#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "dualdst/corpus.hpp"
#include "dualdst/ontology.hpp"

using namespace dualdst;

namespace {

const std::string kToy5 = std::string(DUALDST_DATA_DIR) + "/toy5.ontology.json";
const std::string kFixtures = DUALDST_FIXTURE_DIR;

const Ontology& toy5() {
    static Ontology ont = load_ontology(kToy5);
    return ont;
}

}  // namespace

TEST_CASE("load_ontology reads the bundled toy5 file") {
    const Ontology& ont = toy5();
    CHECK(ont.domains.size() == 5);
    for (const auto& d : ont.domains) {
        CHECK(ont.slots.at(d).size() >= 2);
        for (const auto& s : ont.slots.at(d)) CHECK(ont.values.at(d).at(s).size() >= 3);
    }
    for (const auto& act : ont.acts) {
        CHECK(act.system.size() >= 2);
        CHECK(act.user.size() >= 2);
    }
}

TEST_CASE("load_ontology rejects broken schemas") {
    nlohmann::json good;
    {
        std::ifstream in(kToy5);
        in >> good;
    }

    SECTION("missing values list") {
        nlohmann::json j = good;
        j["values"].erase("hotel.price");
        try {
            parse_ontology(j);
            FAIL("expected SchemaError");
        } catch (const SchemaError& e) {
            CHECK(e.field == "hotel.price.values");
        }
    }
    SECTION("empty domains") {
        nlohmann::json j = good;
        j["domains"] = nlohmann::json::array();
        try {
            parse_ontology(j);
            FAIL("expected SchemaError");
        } catch (const SchemaError& e) {
            CHECK(e.field == "domains");
        }
    }
    SECTION("template flag outside act slots") {
        nlohmann::json j = good;
        j["templates"]["acts"][0]["user"][0] = "i want <hotel>-<star> stars .";
        CHECK_THROWS_AS(parse_ontology(j), SchemaError);
    }
}

TEST_CASE("generate_corpus is deterministic and satisfies turn invariants") {
    auto corpus = generate_corpus(toy5(), 50, 7);
    auto again = generate_corpus(toy5(), 50, 7);
    REQUIRE(corpus.size() == 50);

    // Bit-identical regeneration.
    for (size_t i = 0; i < corpus.size(); ++i) {
        CHECK(corpus[i].id == again[i].id);
        REQUIRE(corpus[i].turns.size() == again[i].turns.size());
        for (size_t t = 0; t < corpus[i].turns.size(); ++t) {
            CHECK(corpus[i].turns[t].user_utt == again[i].turns[t].user_utt);
            CHECK(corpus[i].turns[t].gold_state == again[i].turns[t].gold_state);
        }
    }

    for (const auto& d : corpus) {
        REQUIRE(d.turns.size() >= 3);
        REQUIRE(d.turns.size() <= 10);
        DialogueState acc;
        for (const auto& t : d.turns) {
            size_t introduced = t.gold_turn_state.size();
            CHECK(introduced >= 1);
            CHECK(introduced <= 2);
            acc = overlay(acc, t.gold_turn_state);
            CHECK(acc == t.gold_state);
            CHECK(lexicalize(t.user_utt_dex, t.gold_turn_state) == t.user_utt);
            CHECK(lexicalize(t.system_utt_dex, t.gold_turn_state) == t.system_utt);
        }
    }
}

TEST_CASE("generate_corpus covers every slot value in a large corpus") {
    auto corpus = generate_corpus(toy5(), 2000, 11);
    std::map<std::string, std::set<std::string>> seen;
    for (const auto& d : corpus)
        for (const auto& t : d.turns)
            for (const auto& [ds, value] : t.gold_turn_state.triples())
                seen[ds.domain + "." + ds.slot].insert(join_tokens(value));
    for (const auto& ds : toy5().all_slots()) {
        const auto& vals = toy5().values_of(ds);
        const auto& got = seen[ds.domain + "." + ds.slot];
        INFO(ds.domain << "." << ds.slot);
        CHECK(got.size() == vals.size());
    }
}

TEST_CASE("delexicalize replaces value spans with flags") {
    TurnState turn;
    turn.set("hotel", "star", "5");
    Tokens utt = split_tokens("yes , i need 5 star .");
    CHECK(join_tokens(delexicalize(utt, turn, toy5())) == "yes , i need <hotel>-<star> star .");

    // No state values present: unchanged.
    TurnState other;
    other.set("hotel", "price", "cheap");
    CHECK(delexicalize(utt, other, toy5()) == utt);
}

TEST_CASE("delexicalize takes the maximal span for multi-token values") {
    TurnState turn;
    turn.set("taxi", "destination", "palo alto");
    Tokens utt = split_tokens("take me to palo alto please .");
    CHECK(join_tokens(delexicalize(utt, turn, toy5())) ==
          "take me to <taxi>-<destination> please .");
}

TEST_CASE("lexicalize substitutes values and errors on absent slots") {
    TurnState turn;
    turn.set("hotel", "price", "cheap");
    CHECK(join_tokens(lexicalize(split_tokens("i need <hotel>-<price> rooms"), turn)) ==
          "i need cheap rooms");
    CHECK_THROWS_AS(lexicalize(split_tokens("i need <hotel>-<area> rooms"), turn), MissingSlot);
    // The lenient variant keeps the unresolved flag.
    CHECK(join_tokens(lexicalize_lenient(split_tokens("i need <hotel>-<area> rooms"), turn)) ==
          "i need <hotel>-<area> rooms");
}

TEST_CASE("delexicalize/lexicalize round trip on generated turns") {
    auto corpus = generate_corpus(toy5(), 180, 3);
    int checked = 0;
    for (const auto& d : corpus)
        for (const auto& t : d.turns) {
            Tokens dex = delexicalize(t.user_utt, t.gold_turn_state, toy5());
            CHECK(lexicalize(dex, t.gold_turn_state) == t.user_utt);
            ++checked;
        }
    CHECK(checked >= 1000);
}

TEST_CASE("build_context_input windows the dialogue with a state prefix") {
    auto corpus = generate_corpus(toy5(), 5, 21);
    const Dialogue* d = nullptr;
    for (const auto& cand : corpus)
        if (cand.turns.size() >= 5) d = &cand;
    REQUIRE(d != nullptr);

    SECTION("first turn has the empty-state prefix") {
        auto ctx = build_context_input(*d, 1, 10);
        REQUIRE(ctx.tokens.size() >= 3);
        CHECK(ctx.tokens[0] == kEob);
        CHECK(ctx.tokens[1] == kSysMark);
    }
    SECTION("window drops old turns and summarizes them as a state") {
        int t = int(d->turns.size());
        int w = t - 2;  // prefix should be the state after turn 2
        auto ctx = build_context_input(*d, t, w);
        Tokens expect_prefix = serialize_state(d->turns[1].gold_state);
        REQUIRE(ctx.tokens.size() > expect_prefix.size());
        Tokens got_prefix(ctx.tokens.begin(), ctx.tokens.begin() + long(expect_prefix.size()));
        CHECK(got_prefix == expect_prefix);
        // Exactly w [SYS] markers follow.
        int sys_marks = 0;
        for (const auto& tok : ctx.tokens)
            if (tok == kSysMark) ++sys_marks;
        CHECK(sys_marks == w);
    }
    SECTION("cap trims the oldest utterance tokens, not the prefix") {
        auto full = build_context_input(*d, int(d->turns.size()), 10);
        auto capped = build_context_input(*d, int(d->turns.size()), 10,
                                          gold_prior_state(*d, int(d->turns.size()), 10), 20);
        CHECK(capped.tokens.size() == 20);
        CHECK(capped.tokens[0] == kEob);
        // Tail is preserved.
        Tokens full_tail(full.tokens.end() - 10, full.tokens.end());
        Tokens capped_tail(capped.tokens.end() - 10, capped.tokens.end());
        CHECK(full_tail == capped_tail);
    }
}

TEST_CASE("split_labeled partitions deterministically at dialogue granularity") {
    auto corpus = generate_corpus(toy5(), 1000, 9);
    auto [lab, unlab] = split_labeled(corpus, 0.2, 17);
    CHECK(lab.size() == 200);
    CHECK(unlab.size() == 800);
    for (const auto& d : lab) CHECK(d.labeled);
    for (const auto& d : unlab) CHECK_FALSE(d.labeled);

    // Exhaustive and disjoint.
    std::set<std::string> ids;
    for (const auto& d : lab) ids.insert(d.id);
    for (const auto& d : unlab) ids.insert(d.id);
    CHECK(ids.size() == corpus.size());

    auto [lab2, unlab2] = split_labeled(corpus, 0.2, 17);
    for (size_t i = 0; i < lab.size(); ++i) CHECK(lab[i].id == lab2[i].id);

    auto [all, none] = split_labeled(corpus, 1.0, 17);
    CHECK(all.size() == corpus.size());
    CHECK(none.empty());

    CHECK_THROWS_AS(split_labeled(std::vector<Dialogue>(corpus.begin(), corpus.begin() + 1),
                                  0.2, 1),
                    EmptySplit);
}

TEST_CASE("corpus JSONL round trip") {
    auto corpus = generate_corpus(toy5(), 20, 5);
    auto path = std::filesystem::temp_directory_path() / "dualdst_corpus_test.jsonl";
    save_corpus_jsonl(corpus, path.string());
    auto back = load_corpus_jsonl(path.string());
    REQUIRE(back.size() == corpus.size());
    for (size_t i = 0; i < corpus.size(); ++i) {
        CHECK(back[i].id == corpus[i].id);
        REQUIRE(back[i].turns.size() == corpus[i].turns.size());
        for (size_t t = 0; t < corpus[i].turns.size(); ++t) {
            CHECK(back[i].turns[t].user_utt == corpus[i].turns[t].user_utt);
            CHECK(back[i].turns[t].user_utt_dex == corpus[i].turns[t].user_utt_dex);
            CHECK(back[i].turns[t].gold_state == corpus[i].turns[t].gold_state);
            CHECK(back[i].turns[t].gold_turn_state == corpus[i].turns[t].gold_turn_state);
        }
    }
    std::filesystem::remove(path);
}

TEST_CASE("import_multiwoz reads the bundled fixture") {
    auto dialogues = import_multiwoz(kFixtures + "/multiwoz_sample.json");
    REQUIRE(dialogues.size() == 3);

    // Hand-counted turns per dialogue (fixture is sorted by id).
    std::map<std::string, size_t> turn_counts;
    for (const auto& d : dialogues) turn_counts[d.id] = d.turns.size();
    CHECK(turn_counts.at("PMUL0001.json") == 2);
    CHECK(turn_counts.at("PMUL0002.json") == 3);
    CHECK(turn_counts.at("SNG0042.json") == 1);

    // Gold against gold is perfect.
    std::vector<DialogueState> gold;
    for (const auto& d : dialogues)
        for (const auto& t : d.turns) gold.push_back(t.gold_state);
    CHECK(joint_accuracy(gold, gold) == 1.0);

    // Spot-check one belief state.
    for (const auto& d : dialogues) {
        if (d.id != "PMUL0001.json") continue;
        const auto& last = d.turns.back().gold_state;
        REQUIRE(last.find("taxi", "destination") != nullptr);
        CHECK(join_tokens(*last.find("taxi", "destination")) == "palo alto");
        REQUIRE(last.find("hotel", "pricerange") != nullptr);
        CHECK(join_tokens(*last.find("hotel", "pricerange")) == "cheap");
        // Delexicalized fields stay empty on imported data.
        CHECK(d.turns[0].user_utt_dex.empty());
    }
}

TEST_CASE("import_multiwoz reports malformed dialogues by id") {
    try {
        import_multiwoz(kFixtures + "/multiwoz_malformed.json");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.dialogue_id == "BROKEN01.json");
    }
}
