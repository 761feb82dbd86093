#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualdst/state.hpp"

namespace dualdst {

struct EmptyReference : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Sentence-level BLEU-4. Modified n-gram precisions for n=1..4; a zero
// precision at n>=2 is add-one smoothed to (m+1)/(L+1); a zero unigram
// precision scores 0. Brevity penalty exp(min(0, 1 - |ref|/|cand|)).
inline double bleu(const Tokens& candidate, const Tokens& reference) {
    if (reference.empty()) throw EmptyReference("bleu: empty reference");
    if (candidate.empty()) return 0.0;

    double log_prec_sum = 0.0;
    for (int n = 1; n <= 4; ++n) {
        std::map<std::vector<std::string>, int> ref_counts;
        for (size_t i = 0; i + size_t(n) <= reference.size(); ++i)
            ref_counts[{reference.begin() + long(i), reference.begin() + long(i) + n}] += 1;
        std::map<std::vector<std::string>, int> cand_counts;
        for (size_t i = 0; i + size_t(n) <= candidate.size(); ++i)
            cand_counts[{candidate.begin() + long(i), candidate.begin() + long(i) + n}] += 1;

        int64_t matched = 0;
        int64_t total = 0;
        for (const auto& [gram, count] : cand_counts) {
            total += count;
            auto it = ref_counts.find(gram);
            if (it != ref_counts.end()) matched += std::min(count, it->second);
        }
        double prec;
        if (matched > 0) {
            prec = double(matched) / double(total);
        } else if (n == 1) {
            return 0.0;  // disjoint unigrams: score 0 by convention
        } else {
            prec = double(matched + 1) / double(total + 1);  // add-one smoothing
        }
        log_prec_sum += std::log(prec);
    }
    double bp = std::exp(std::min(0.0, 1.0 - double(reference.size()) / double(candidate.size())));
    return bp * std::exp(log_prec_sum / 4.0);
}

inline double mix_reward(double r_k, double r_b, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("mix_reward: alpha outside [0,1]");
    return alpha * r_k + (1.0 - alpha) * r_b;
}

// LM rewards are length-normalized log-probs clipped into [-5, 0] so their
// scale is commensurate with BLEU in [0, 1].
inline double clip_reward(double r, double lo = -5.0, double hi = 0.0) {
    return std::min(hi, std::max(lo, r));
}

enum class LoopTag { StateLoop, ContextLoop };

inline const char* loop_tag_name(LoopTag tag) {
    return tag == LoopTag::StateLoop ? "state-loop" : "context-loop";
}

struct RewardRecord {
    double r_k = 0.0;
    double r_b = 0.0;
    double r = 0.0;
    double baseline = 0.0;
    LoopTag loop_tag = LoopTag::StateLoop;
};

// Exponential-moving-average reward baseline, one accumulator per loop.
class RewardBaseline {
  public:
    explicit RewardBaseline(double decay = 0.9) : decay_(decay) {}

    // Folds the reward into the running mean and returns the updated value.
    double update(LoopTag tag, double reward) {
        auto& slot = state_[tag];
        if (!slot.initialized) {
            slot.value = reward;
            slot.initialized = true;
        } else {
            slot.value = decay_ * slot.value + (1.0 - decay_) * reward;
        }
        return slot.value;
    }

    double value(LoopTag tag) const {
        auto it = state_.find(tag);
        return it == state_.end() ? 0.0 : it->second.value;
    }

    bool initialized(LoopTag tag) const {
        auto it = state_.find(tag);
        return it != state_.end() && it->second.initialized;
    }

  private:
    struct Slot {
        double value = 0.0;
        bool initialized = false;
    };
    double decay_;
    std::map<LoopTag, Slot> state_;
};

}  // namespace dualdst
