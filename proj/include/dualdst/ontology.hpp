#pragma once

#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualdst/state.hpp"
#include "dualdst/vocab.hpp"

namespace dualdst {

struct SchemaError : std::runtime_error {
    std::string field;
    explicit SchemaError(const std::string& f, const std::string& why = "")
        : std::runtime_error("ontology schema error at " + f + (why.empty() ? "" : ": " + why)),
          field(f) {}
};

// One dialogue act: the slots it fills and its delexicalized paraphrases.
struct TemplateAct {
    std::vector<DomainSlot> slots;
    std::vector<Tokens> system;
    std::vector<Tokens> user;
};

inline std::string flag_token(const DomainSlot& ds) {
    return "<" + ds.domain + ">-<" + ds.slot + ">";
}

inline bool is_flag_token(const std::string& tok) {
    auto dash = tok.find(">-<");
    return dash != std::string::npos && tok.size() >= 7 && tok.front() == '<' && tok.back() == '>';
}

inline DomainSlot parse_flag(const std::string& tok) {
    auto dash = tok.find(">-<");
    return DomainSlot{tok.substr(1, dash - 1), tok.substr(dash + 3, tok.size() - dash - 4)};
}

class Ontology {
  public:
    std::vector<std::string> domains;
    std::map<std::string, std::vector<std::string>> slots;            // domain -> slot names
    std::map<std::string, std::map<std::string, std::vector<Tokens>>> values;
    std::vector<TemplateAct> acts;

    StateSchema schema() const {
        StateSchema s;
        for (const auto& d : domains)
            s.domain_slots[d] = std::set<std::string>(slots.at(d).begin(), slots.at(d).end());
        return s;
    }

    // File order; the delexicalizer's tie-break order.
    std::vector<DomainSlot> all_slots() const {
        std::vector<DomainSlot> out;
        for (const auto& d : domains)
            for (const auto& s : slots.at(d)) out.push_back({d, s});
        return out;
    }

    int slot_rank(const DomainSlot& ds) const {
        int r = 0;
        for (const auto& d : domains)
            for (const auto& s : slots.at(d)) {
                if (d == ds.domain && s == ds.slot) return r;
                ++r;
            }
        return r;
    }

    const std::vector<Tokens>& values_of(const DomainSlot& ds) const {
        return values.at(ds.domain).at(ds.slot);
    }

    // Tag sub-vocabulary for sketches and state sequences: domain open/close
    // tags, slot tags, terminator.
    std::vector<std::string> tag_tokens() const {
        std::vector<std::string> out;
        std::set<std::string> seen;
        for (const auto& d : domains) {
            out.push_back(open_tag(d));
            out.push_back(close_tag(d));
        }
        for (const auto& d : domains)
            for (const auto& s : slots.at(d))
                if (seen.insert(s).second) out.push_back(open_tag(s));
        out.push_back(kEob);
        return out;
    }

    // Tokens a delexicalized utterance may contain: template words and flags.
    std::vector<std::string> delex_tokens() const {
        std::vector<std::string> out = {kUnk, kEou};
        std::set<std::string> seen(out.begin(), out.end());
        auto take = [&](const Tokens& toks) {
            for (const auto& t : toks)
                if (seen.insert(t).second) out.push_back(t);
        };
        for (const auto& act : acts) {
            for (const auto& v : act.system) take(v);
            for (const auto& v : act.user) take(v);
        }
        for (const auto& ds : all_slots()) {
            const std::string f = flag_token(ds);
            if (seen.insert(f).second) out.push_back(f);
        }
        return out;
    }

    // Deterministic global vocabulary: specials, tags, flags, values, words.
    Vocab build_vocab() const {
        Vocab v;  // <UNK> is id 0
        for (const auto& t : {kBos, kEou, kSysMark, kUsrMark}) v.add(t);
        for (const auto& t : tag_tokens()) v.add(t);
        for (const auto& ds : all_slots()) v.add(flag_token(ds));
        for (const auto& d : domains)
            for (const auto& s : slots.at(d))
                for (const auto& val : values.at(d).at(s))
                    for (const auto& tok : val) v.add(tok);
        for (const auto& act : acts) {
            for (const auto& var : act.system)
                for (const auto& tok : var) v.add(tok);
            for (const auto& var : act.user)
                for (const auto& tok : var) v.add(tok);
        }
        return v;
    }
};

inline Ontology parse_ontology(const nlohmann::json& j) {
    Ontology ont;
    if (!j.contains("domains") || !j["domains"].is_array() || j["domains"].empty())
        throw SchemaError("domains", "missing or empty");
    for (const auto& d : j["domains"]) ont.domains.push_back(d.get<std::string>());
    if (ont.domains.size() < 2) throw SchemaError("domains", "need at least 2 domains");

    if (!j.contains("slots")) throw SchemaError("slots", "missing");
    for (const auto& d : ont.domains) {
        if (!j["slots"].contains(d)) throw SchemaError("slots." + d, "missing");
        for (const auto& s : j["slots"][d]) ont.slots[d].push_back(s.get<std::string>());
        if (ont.slots[d].size() < 2) throw SchemaError("slots." + d, "need at least 2 slots");
    }

    if (!j.contains("values")) throw SchemaError("values", "missing");
    for (const auto& d : ont.domains) {
        for (const auto& s : ont.slots[d]) {
            const std::string key = d + "." + s;
            if (!j["values"].contains(key)) throw SchemaError(key + ".values", "missing");
            for (const auto& val : j["values"][key]) {
                Tokens toks = split_tokens(val.get<std::string>());
                if (toks.empty()) throw SchemaError(key + ".values", "empty value");
                ont.values[d][s].push_back(std::move(toks));
            }
            if (ont.values[d][s].size() < 3)
                throw SchemaError(key + ".values", "need at least 3 values");
        }
    }

    if (!j.contains("templates") || !j["templates"].contains("acts"))
        throw SchemaError("templates.acts", "missing");
    auto schema = ont.schema();
    size_t ai = 0;
    for (const auto& a : j["templates"]["acts"]) {
        const std::string where = "templates.acts[" + std::to_string(ai) + "]";
        TemplateAct act;
        if (!a.contains("slots") || a["slots"].empty()) throw SchemaError(where + ".slots");
        for (const auto& sl : a["slots"]) {
            std::string key = sl.get<std::string>();
            auto dot = key.find('.');
            if (dot == std::string::npos) throw SchemaError(where + ".slots", key);
            DomainSlot ds{key.substr(0, dot), key.substr(dot + 1)};
            if (!schema.has_slot(ds.domain, ds.slot))
                throw SchemaError(where + ".slots", "unknown slot " + key);
            act.slots.push_back(ds);
        }
        std::set<std::string> act_flags;
        for (const auto& ds : act.slots) act_flags.insert(flag_token(ds));
        auto read_variants = [&](const char* side, std::vector<Tokens>& out) {
            if (!a.contains(side)) throw SchemaError(where + "." + side, "missing");
            size_t vi = 0;
            for (const auto& v : a[side]) {
                Tokens toks = split_tokens(v.get<std::string>());
                if (toks.empty())
                    throw SchemaError(where + "." + side + "[" + std::to_string(vi) + "]", "empty");
                for (const auto& tok : toks)
                    if (is_flag_token(tok) && !act_flags.count(tok))
                        throw SchemaError(where + "." + side + "[" + std::to_string(vi) + "]",
                                          "flag " + tok + " not in act slots");
                out.push_back(std::move(toks));
                ++vi;
            }
            if (out.size() < 2)
                throw SchemaError(where + "." + side, "need at least 2 paraphrases");
        };
        read_variants("system", act.system);
        read_variants("user", act.user);
        ont.acts.push_back(std::move(act));
        ++ai;
    }
    if (ont.acts.empty()) throw SchemaError("templates.acts", "empty");
    return ont;
}

inline Ontology load_ontology(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError(path, "cannot open file");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(path, e.what());
    }
    return parse_ontology(j);
}

}  // namespace dualdst
