#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dualdst {

using Tokens = std::vector<std::string>;

inline const std::string kEob = "<EOB>";

inline std::string join_tokens(const Tokens& toks) {
    std::string out;
    for (size_t i = 0; i < toks.size(); ++i) {
        if (i) out += ' ';
        out += toks[i];
    }
    return out;
}

inline Tokens split_tokens(const std::string& text) {
    Tokens out;
    std::istringstream ss(text);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

inline bool is_tag_token(const std::string& t) {
    return t.size() >= 3 && t.front() == '<' && t.back() == '>';
}

inline bool is_close_tag(const std::string& t) {
    return t.size() >= 4 && t[0] == '<' && t[1] == '/' && t.back() == '>';
}

inline std::string tag_name(const std::string& t) {
    size_t start = is_close_tag(t) ? 2 : 1;
    return t.substr(start, t.size() - start - 1);
}

inline std::string open_tag(const std::string& name) { return "<" + name + ">"; }
inline std::string close_tag(const std::string& name) { return "</" + name + ">"; }

struct DomainSlot {
    std::string domain;
    std::string slot;

    auto operator<=>(const DomainSlot&) const = default;
};

// Cumulative dialogue state: canonically ordered (domain, slot) -> value tokens.
// std::map keeps domains/slots lexicographic, which *is* the canonical order.
class DialogueState {
  public:
    using Triples = std::map<DomainSlot, Tokens>;

    DialogueState() = default;

    void set(const std::string& domain, const std::string& slot, Tokens value) {
        if (value.empty()) throw std::invalid_argument("state value must be non-empty");
        triples_[{domain, slot}] = std::move(value);
    }

    void set(const std::string& domain, const std::string& slot, const std::string& value) {
        set(domain, slot, split_tokens(value));
    }

    const Tokens* find(const std::string& domain, const std::string& slot) const {
        auto it = triples_.find({domain, slot});
        return it == triples_.end() ? nullptr : &it->second;
    }

    const Triples& triples() const { return triples_; }
    bool empty() const { return triples_.empty(); }
    size_t size() const { return triples_.size(); }

    bool operator==(const DialogueState&) const = default;

  private:
    Triples triples_;
};

// Turn state: the triples newly introduced or changed at one turn.
using TurnState = DialogueState;

// Tag schema used to validate parsed sequences: which tags are domains and
// which slots belong to each domain.
struct StateSchema {
    std::map<std::string, std::set<std::string>> domain_slots;

    bool has_domain(const std::string& d) const { return domain_slots.count(d) > 0; }
    bool has_slot(const std::string& d, const std::string& s) const {
        auto it = domain_slots.find(d);
        return it != domain_slots.end() && it->second.count(s) > 0;
    }
};

struct ParseError {
    enum class Kind { UnbalancedTags, OrphanValue, UnknownTag, MissingTerminator };

    Kind kind;
    size_t position;
    std::string token;
    std::string message;
};

inline const char* parse_error_name(ParseError::Kind k) {
    switch (k) {
        case ParseError::Kind::UnbalancedTags: return "UnbalancedTags";
        case ParseError::Kind::OrphanValue: return "OrphanValue";
        case ParseError::Kind::UnknownTag: return "UnknownTag";
        case ParseError::Kind::MissingTerminator: return "MissingTerminator";
    }
    return "?";
}

struct ParseResult {
    std::optional<DialogueState> state;
    std::optional<ParseError> error;

    bool ok() const { return state.has_value(); }
};

// State -> token sequence, canonical order, terminated by <EOB>.
inline Tokens serialize_state(const DialogueState& state) {
    Tokens out;
    std::string open_domain;
    for (const auto& [ds, value] : state.triples()) {
        if (ds.domain != open_domain) {
            if (!open_domain.empty()) out.push_back(close_tag(open_domain));
            out.push_back(open_tag(ds.domain));
            open_domain = ds.domain;
        }
        out.push_back(open_tag(ds.slot));
        out.insert(out.end(), value.begin(), value.end());
    }
    if (!open_domain.empty()) out.push_back(close_tag(open_domain));
    out.push_back(kEob);
    return out;
}

namespace detail {

// Shared structural walk for parse_state and extract_sketch. When
// require_values is false, slots with no value tokens are accepted, which
// makes sketches themselves walkable.
inline ParseResult walk_state_sequence(const Tokens& seq, const StateSchema& schema,
                                       bool require_values) {
    auto fail = [&](ParseError::Kind kind, size_t pos, const std::string& msg) {
        ParseResult r;
        r.error = ParseError{kind, pos, pos < seq.size() ? seq[pos] : "", msg};
        return r;
    };

    DialogueState state;
    size_t i = 0;
    bool terminated = false;
    while (i < seq.size()) {
        const std::string& tok = seq[i];
        if (tok == kEob) {
            terminated = true;
            ++i;
            break;
        }
        if (is_close_tag(tok))
            return fail(ParseError::Kind::UnbalancedTags, i, "close tag without open domain");
        if (!is_tag_token(tok))
            return fail(ParseError::Kind::OrphanValue, i, "value token outside any slot span");
        std::string domain = tag_name(tok);
        if (!schema.has_domain(domain)) {
            // A known slot tag at top level is a bracketing problem, an
            // unknown name is an unknown tag.
            for (const auto& [d, slots] : schema.domain_slots)
                if (slots.count(domain))
                    return fail(ParseError::Kind::UnbalancedTags, i, "slot tag outside a domain span");
            return fail(ParseError::Kind::UnknownTag, i, "unknown domain tag");
        }
        ++i;
        // Inside <domain> ... </domain>.
        bool closed = false;
        while (i < seq.size()) {
            const std::string& t = seq[i];
            if (t == kEob)
                return fail(ParseError::Kind::UnbalancedTags, i, "missing </" + domain + ">");
            if (is_close_tag(t)) {
                if (tag_name(t) != domain)
                    return fail(ParseError::Kind::UnbalancedTags, i, "mismatched close tag");
                closed = true;
                ++i;
                break;
            }
            if (!is_tag_token(t))
                return fail(ParseError::Kind::OrphanValue, i, "value token outside any slot span");
            std::string slot = tag_name(t);
            if (!schema.has_slot(domain, slot))
                return fail(ParseError::Kind::UnknownTag, i, "tag is not a slot of " + domain);
            size_t slot_pos = i;
            ++i;
            Tokens value;
            while (i < seq.size() && !is_tag_token(seq[i]) && seq[i] != kEob) {
                value.push_back(seq[i]);
                ++i;
            }
            if (value.empty() && require_values)
                return fail(ParseError::Kind::UnbalancedTags, slot_pos,
                            "slot <" + slot + "> has no value tokens");
            if (!value.empty()) state.set(domain, slot, std::move(value));
        }
        if (!closed)
            return fail(ParseError::Kind::UnbalancedTags, seq.size() - 1,
                        "missing </" + domain + ">");
    }
    if (!terminated)
        return fail(ParseError::Kind::MissingTerminator, seq.empty() ? 0 : seq.size() - 1,
                    "sequence does not end with <EOB>");
    if (i != seq.size())
        return fail(ParseError::Kind::MissingTerminator, i, "tokens after <EOB>");
    ParseResult r;
    r.state = std::move(state);
    return r;
}

}  // namespace detail

// Token sequence -> state. Accepts any domain order and canonicalizes;
// duplicate slots keep the last occurrence. Never throws on malformed input.
inline ParseResult parse_state(const Tokens& seq, const StateSchema& schema) {
    return detail::walk_state_sequence(seq, schema, /*require_values=*/true);
}

// Remove value tokens, keep tags in their original order. Accepts both full
// state sequences and sketches, so it is idempotent.
struct SketchResult {
    std::optional<Tokens> sketch;
    std::optional<ParseError> error;

    bool ok() const { return sketch.has_value(); }
};

inline SketchResult extract_sketch(const Tokens& seq, const StateSchema& schema) {
    ParseResult walked = detail::walk_state_sequence(seq, schema, /*require_values=*/false);
    if (!walked.ok()) return {std::nullopt, walked.error};
    Tokens out;
    for (const auto& tok : seq)
        if (is_tag_token(tok) || tok == kEob) out.push_back(tok);
    return {std::move(out), std::nullopt};
}

// Triples of curr that are absent in prev or changed. Slot deletion is not
// modeled; states are monotone under overlay.
inline TurnState diff_states(const DialogueState& prev, const DialogueState& curr) {
    TurnState out;
    for (const auto& [ds, value] : curr.triples()) {
        const Tokens* old = prev.find(ds.domain, ds.slot);
        if (old == nullptr || *old != value) out.set(ds.domain, ds.slot, value);
    }
    return out;
}

inline DialogueState overlay(const DialogueState& base, const TurnState& turn) {
    DialogueState out = base;
    for (const auto& [ds, value] : turn.triples()) out.set(ds.domain, ds.slot, value);
    return out;
}

struct LengthMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Fraction of turns whose predicted state matches gold exactly.
inline double joint_accuracy(const std::vector<DialogueState>& pred,
                             const std::vector<DialogueState>& gold) {
    if (pred.size() != gold.size())
        throw LengthMismatch("joint_accuracy: pred has " + std::to_string(pred.size()) +
                             " turns, gold has " + std::to_string(gold.size()));
    if (pred.empty()) throw LengthMismatch("joint_accuracy: no turns");
    size_t hit = 0;
    for (size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == gold[i]) ++hit;
    return double(hit) / double(pred.size());
}

}  // namespace dualdst
