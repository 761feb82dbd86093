#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualdst/ontology.hpp"
#include "dualdst/rng.hpp"
#include "dualdst/state.hpp"

namespace dualdst {

struct DialogueTurn {
    Tokens system_utt;
    Tokens user_utt;
    Tokens system_utt_dex;
    Tokens user_utt_dex;
    TurnState gold_turn_state;
    DialogueState gold_state;  // cumulative
};

struct Dialogue {
    std::string id;
    bool labeled = true;
    std::vector<DialogueTurn> turns;
};

struct MissingSlot : std::runtime_error {
    DomainSlot slot;
    explicit MissingSlot(const DomainSlot& ds)
        : std::runtime_error("no value for flag " + flag_token(ds) + " in turn state"), slot(ds) {}
};

// Replace flag tokens by the turn state's value tokens. Throws MissingSlot
// when a flag has no value in the turn.
inline Tokens lexicalize(const Tokens& utt_dex, const TurnState& turn) {
    Tokens out;
    for (const auto& tok : utt_dex) {
        if (is_flag_token(tok)) {
            DomainSlot ds = parse_flag(tok);
            const Tokens* value = turn.find(ds.domain, ds.slot);
            if (value == nullptr) throw MissingSlot(ds);
            out.insert(out.end(), value->begin(), value->end());
        } else {
            out.push_back(tok);
        }
    }
    return out;
}

// Loop-internal variant: flags without a value are kept verbatim instead of
// failing, so reconstruction rewards can still be scored.
inline Tokens lexicalize_lenient(const Tokens& utt_dex, const TurnState& turn) {
    Tokens out;
    for (const auto& tok : utt_dex) {
        const Tokens* value = nullptr;
        if (is_flag_token(tok)) {
            DomainSlot ds = parse_flag(tok);
            value = turn.find(ds.domain, ds.slot);
        }
        if (value)
            out.insert(out.end(), value->begin(), value->end());
        else
            out.push_back(tok);
    }
    return out;
}

// Replace every maximal token span equal to one of the turn's values by its
// <domain>-<slot> flag. Longest match wins; ties go to ontology order.
inline Tokens delexicalize(const Tokens& utt, const TurnState& turn, const Ontology& ont) {
    struct Entry {
        DomainSlot ds;
        const Tokens* value;
        int rank;
    };
    std::vector<Entry> entries;
    for (const auto& [ds, value] : turn.triples())
        entries.push_back({ds, &value, ont.slot_rank(ds)});

    Tokens out;
    size_t i = 0;
    while (i < utt.size()) {
        const Entry* best = nullptr;
        for (const auto& e : entries) {
            size_t len = e.value->size();
            if (i + len > utt.size()) continue;
            if (!std::equal(e.value->begin(), e.value->end(), utt.begin() + long(i))) continue;
            if (best == nullptr || len > best->value->size() ||
                (len == best->value->size() && e.rank < best->rank))
                best = &e;
        }
        if (best) {
            out.push_back(flag_token(best->ds));
            i += best->value->size();
        } else {
            out.push_back(utt[i]);
            ++i;
        }
    }
    return out;
}

// --- context construction ----------------------------------------------

struct ContextInput {
    Tokens tokens;
};

// Gold summary state feeding the window: the state after turn t-w, empty when
// the window still covers the whole prefix. Turn indices are 1-based.
inline DialogueState gold_prior_state(const Dialogue& d, int t, int w) {
    if (t <= w) return DialogueState{};
    return d.turns[size_t(t - w - 1)].gold_state;
}

inline ContextInput build_context_input(const Dialogue& d, int t, int w,
                                        const DialogueState& prior, size_t max_tokens = 0) {
    if (t < 1 || size_t(t) > d.turns.size())
        throw std::out_of_range("build_context_input: turn index out of range");
    ContextInput out;
    out.tokens = serialize_state(prior);
    size_t prefix = out.tokens.size();
    int lo = std::max(1, t - w + 1);
    for (int i = lo; i <= t; ++i) {
        const DialogueTurn& turn = d.turns[size_t(i - 1)];
        out.tokens.push_back(kSysMark);
        out.tokens.insert(out.tokens.end(), turn.system_utt.begin(), turn.system_utt.end());
        out.tokens.push_back(kUsrMark);
        out.tokens.insert(out.tokens.end(), turn.user_utt.begin(), turn.user_utt.end());
    }
    // Length cap: drop the oldest utterance tokens, keep the state prefix.
    if (max_tokens > 0 && out.tokens.size() > max_tokens) {
        size_t excess = out.tokens.size() - max_tokens;
        out.tokens.erase(out.tokens.begin() + long(prefix),
                         out.tokens.begin() + long(prefix + excess));
    }
    return out;
}

inline ContextInput build_context_input(const Dialogue& d, int t, int w, size_t max_tokens = 0) {
    return build_context_input(d, t, w, gold_prior_state(d, t, w), max_tokens);
}

// --- synthetic generation ----------------------------------------------

// Deterministic multi-domain dialogue sampler: every turn fills 1-2 slots that
// are new for the dialogue via a template act, so states are monotone and
// per-turn invariants hold by construction.
inline std::vector<Dialogue> generate_corpus(const Ontology& ont, int n, uint64_t seed) {
    if (n < 1) throw std::invalid_argument("generate_corpus: n must be >= 1");
    Rng root(seed);
    std::vector<Dialogue> out;
    out.reserve(size_t(n));
    const auto all = ont.all_slots();

    for (int di = 0; di < n; ++di) {
        Rng rng = root.child(uint64_t(di));
        Dialogue d;
        {
            std::ostringstream id;
            id << "syn-" << seed << "-" << di;
            d.id = id.str();
        }
        std::set<DomainSlot> used;
        DialogueState state;
        int want_turns = 3 + int(rng.uniform_int(8));  // 3..10
        for (int t = 0; t < want_turns; ++t) {
            std::vector<const TemplateAct*> feas1, feas2;
            for (const auto& act : ont.acts) {
                bool ok = true;
                for (const auto& ds : act.slots)
                    if (used.count(ds)) ok = false;
                if (!ok) continue;
                (act.slots.size() >= 2 ? feas2 : feas1).push_back(&act);
            }
            const TemplateAct* act = nullptr;
            bool want2 = rng.bernoulli(0.35);
            if (want2 && !feas2.empty())
                act = feas2[size_t(rng.uniform_int(feas2.size()))];
            else if (!feas1.empty())
                act = feas1[size_t(rng.uniform_int(feas1.size()))];
            else if (!feas2.empty())
                act = feas2[size_t(rng.uniform_int(feas2.size()))];
            if (act == nullptr) break;  // ontology exhausted

            TurnState turn;
            std::set<std::string> surfaces;
            for (const auto& ds : act->slots) {
                const auto& vals = ont.values_of(ds);
                // Avoid one surface form standing for two slots in one turn.
                Tokens value;
                for (int tries = 0; tries < 16; ++tries) {
                    value = vals[size_t(rng.uniform_int(vals.size()))];
                    if (!surfaces.count(join_tokens(value))) break;
                }
                surfaces.insert(join_tokens(value));
                turn.set(ds.domain, ds.slot, value);
                used.insert(ds);
            }
            DialogueTurn dt;
            dt.system_utt_dex = act->system[size_t(rng.uniform_int(act->system.size()))];
            dt.user_utt_dex = act->user[size_t(rng.uniform_int(act->user.size()))];
            dt.system_utt = lexicalize(dt.system_utt_dex, turn);
            dt.user_utt = lexicalize(dt.user_utt_dex, turn);
            dt.gold_turn_state = turn;
            state = overlay(state, turn);
            dt.gold_state = state;
            d.turns.push_back(std::move(dt));
        }
        if (d.turns.size() < 3)
            throw std::runtime_error("generate_corpus: ontology cannot sustain 3 turns");
        out.push_back(std::move(d));
    }
    return out;
}

// --- labeled/unlabeled split ---------------------------------------------

struct EmptySplit : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::pair<std::vector<Dialogue>, std::vector<Dialogue>> split_labeled(
    const std::vector<Dialogue>& corpus, double fraction, uint64_t seed) {
    if (fraction <= 0.0 || fraction > 1.0)
        throw std::invalid_argument("split_labeled: fraction must be in (0, 1]");
    size_t n_lab = size_t(fraction * double(corpus.size()) + 0.5);
    if (n_lab < 1) throw EmptySplit("split_labeled: labeled side would be empty");
    n_lab = std::min(n_lab, corpus.size());

    std::vector<size_t> idx(corpus.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(seed);
    rng.shuffle(idx);
    std::vector<bool> is_lab(corpus.size(), false);
    for (size_t i = 0; i < n_lab; ++i) is_lab[idx[i]] = true;

    std::vector<Dialogue> labeled, unlabeled;
    for (size_t i = 0; i < corpus.size(); ++i) {
        Dialogue d = corpus[i];
        d.labeled = is_lab[i];
        (is_lab[i] ? labeled : unlabeled).push_back(std::move(d));
    }
    return {std::move(labeled), std::move(unlabeled)};
}

// --- JSONL corpus I/O ------------------------------------------------------

inline nlohmann::ordered_json state_to_json(const DialogueState& s) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [ds, value] : s.triples()) j[ds.domain][ds.slot] = join_tokens(value);
    return j;
}

inline DialogueState state_from_json(const nlohmann::json& j) {
    DialogueState s;
    for (const auto& [domain, slots] : j.items())
        for (const auto& [slot, value] : slots.items())
            s.set(domain, slot, value.get<std::string>());
    return s;
}

inline void save_corpus_jsonl(const std::vector<Dialogue>& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& d : corpus) {
        nlohmann::ordered_json j;
        j["id"] = d.id;
        j["labeled"] = d.labeled;
        j["turns"] = nlohmann::ordered_json::array();
        for (const auto& t : d.turns) {
            nlohmann::ordered_json jt;
            jt["sys"] = join_tokens(t.system_utt);
            jt["usr"] = join_tokens(t.user_utt);
            jt["sys_dex"] = join_tokens(t.system_utt_dex);
            jt["usr_dex"] = join_tokens(t.user_utt_dex);
            jt["turn_state"] = state_to_json(t.gold_turn_state);
            jt["state"] = state_to_json(t.gold_state);
            j["turns"].push_back(std::move(jt));
        }
        out << j.dump() << "\n";
    }
}

inline std::vector<Dialogue> load_corpus_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::vector<Dialogue> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        Dialogue d;
        d.id = j.at("id").get<std::string>();
        d.labeled = j.at("labeled").get<bool>();
        for (const auto& jt : j.at("turns")) {
            DialogueTurn t;
            t.system_utt = split_tokens(jt.at("sys").get<std::string>());
            t.user_utt = split_tokens(jt.at("usr").get<std::string>());
            t.system_utt_dex = split_tokens(jt.at("sys_dex").get<std::string>());
            t.user_utt_dex = split_tokens(jt.at("usr_dex").get<std::string>());
            t.gold_turn_state = state_from_json(jt.at("turn_state"));
            t.gold_state = state_from_json(jt.at("state"));
            d.turns.push_back(std::move(t));
        }
        out.push_back(std::move(d));
    }
    return out;
}

// --- MultiWOZ 2.1 ingestion ------------------------------------------------

struct FormatError : std::runtime_error {
    std::string dialogue_id;
    FormatError(const std::string& id, const std::string& why)
        : std::runtime_error("multiwoz dialogue " + id + ": " + why), dialogue_id(id) {}
};

// Lowercase and split, detaching trailing/leading punctuation.
inline Tokens tokenize_utterance(const std::string& text) {
    std::string spaced;
    for (char c : text) {
        if (c == '.' || c == ',' || c == '?' || c == '!') {
            spaced += ' ';
            spaced += c;
            spaced += ' ';
        } else {
            spaced += char(std::tolower(static_cast<unsigned char>(c)));
        }
    }
    return split_tokens(spaced);
}

// Reads the dataset's data.json layout: {dialogue_id: {log: [{text, metadata}]}}.
// log entries alternate user/system; the system entry's metadata carries the
// belief state after the exchange, as domain -> {semi: {slot: value},
// book: {slot: value, booked: [...]}}. Empty and "not mentioned" values are
// skipped. Delexicalized fields are left empty.
inline std::vector<Dialogue> import_multiwoz(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    nlohmann::json root;
    try {
        in >> root;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("<file>", e.what());
    }
    if (!root.is_object()) throw FormatError("<file>", "top level must be an object");

    auto state_from_metadata = [](const std::string& id, const nlohmann::json& meta) {
        DialogueState s;
        for (const auto& [domain, body] : meta.items()) {
            auto add = [&](const nlohmann::json& table) {
                for (const auto& [slot, value] : table.items()) {
                    if (slot == "booked" || !value.is_string()) continue;
                    std::string v = value.get<std::string>();
                    if (v.empty() || v == "not mentioned" || v == "none") continue;
                    s.set(domain, slot, tokenize_utterance(v));
                }
            };
            if (body.contains("semi")) add(body["semi"]);
            if (body.contains("book")) add(body["book"]);
            if (!body.contains("semi") && !body.contains("book"))
                throw FormatError(id, "domain " + domain + " has no belief state");
        }
        return s;
    };

    std::vector<Dialogue> out;
    for (const auto& [id, body] : root.items()) {
        if (!body.contains("log") || !body["log"].is_array())
            throw FormatError(id, "missing log");
        const auto& log = body["log"];
        if (log.empty() || log.size() % 2 != 0)
            throw FormatError(id, "log must alternate user/system entries");
        Dialogue d;
        d.id = id;
        DialogueState prev;
        for (size_t k = 0; k + 1 < log.size(); k += 2) {
            const auto& user_entry = log[k];
            const auto& sys_entry = log[k + 1];
            if (!user_entry.contains("text") || !sys_entry.contains("text"))
                throw FormatError(id, "log entry missing text");
            if (!sys_entry.contains("metadata") || sys_entry["metadata"].empty())
                throw FormatError(id, "system entry missing belief state metadata");
            DialogueTurn t;
            t.user_utt = tokenize_utterance(user_entry["text"].get<std::string>());
            if (k > 0) t.system_utt = tokenize_utterance(log[k - 1]["text"].get<std::string>());
            t.gold_state = state_from_metadata(id, sys_entry["metadata"]);
            t.gold_turn_state = diff_states(prev, t.gold_state);
            prev = t.gold_state;
            d.turns.push_back(std::move(t));
        }
        out.push_back(std::move(d));
    }
    return out;
}

}  // namespace dualdst
