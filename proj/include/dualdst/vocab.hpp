#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualdst/state.hpp"

namespace dualdst {

inline const std::string kUnk = "<UNK>";
inline const std::string kBos = "<BOS>";
inline const std::string kEou = "<EOU>";
inline const std::string kSysMark = "[SYS]";
inline const std::string kUsrMark = "[USR]";

// Token <-> id table. Construction order fixes the ids, so building from the
// same token list is deterministic.
class Vocab {
  public:
    Vocab() { add(kUnk); }

    int add(const std::string& tok) {
        auto it = index_.find(tok);
        if (it != index_.end()) return it->second;
        int id = int(tokens_.size());
        index_.emplace(tok, id);
        tokens_.push_back(tok);
        return id;
    }

    int id(const std::string& tok) const {
        auto it = index_.find(tok);
        return it == index_.end() ? 0 : it->second;  // 0 is <UNK>
    }

    bool contains(const std::string& tok) const { return index_.count(tok) > 0; }

    const std::string& token(int id) const {
        if (id < 0 || id >= int(tokens_.size())) throw std::out_of_range("vocab id out of range");
        return tokens_[size_t(id)];
    }

    int size() const { return int(tokens_.size()); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    std::vector<int> encode(const Tokens& toks) const {
        std::vector<int> out;
        out.reserve(toks.size());
        for (const auto& t : toks) out.push_back(id(t));
        return out;
    }

    Tokens decode(const std::vector<int>& ids) const {
        Tokens out;
        out.reserve(ids.size());
        for (int i : ids) out.push_back(token(i));
        return out;
    }

    bool operator==(const Vocab& o) const { return tokens_ == o.tokens_; }

  private:
    std::vector<std::string> tokens_;
    std::map<std::string, int> index_;
};

// A contiguous sub-vocabulary: maps restricted output indices to tokens of a
// parent vocabulary. Decoders with a restricted output (sketch tags, the
// delexicalized surface) project onto one of these.
class SubVocab {
  public:
    SubVocab() = default;
    SubVocab(const Vocab& parent, std::vector<std::string> members) {
        for (auto& m : members) {
            if (!parent.contains(m))
                throw std::invalid_argument("subvocab token missing from parent: " + m);
            if (index_.count(m)) continue;
            index_.emplace(m, int(tokens_.size()));
            tokens_.push_back(m);
        }
    }

    int size() const { return int(tokens_.size()); }
    const std::string& token(int id) const { return tokens_.at(size_t(id)); }
    bool contains(const std::string& tok) const { return index_.count(tok) > 0; }

    // Restricted id, or -1 when the token is outside the subvocabulary.
    int id(const std::string& tok) const {
        auto it = index_.find(tok);
        return it == index_.end() ? -1 : it->second;
    }

    const std::vector<std::string>& tokens() const { return tokens_; }

  private:
    std::vector<std::string> tokens_;
    std::map<std::string, int> index_;
};

}  // namespace dualdst
