#pragma once

#include <string>
#include <vector>

#include "dualdst/autodiff.hpp"
#include "dualdst/rng.hpp"
#include "dualdst/state.hpp"
#include "dualdst/tensor.hpp"

namespace dualdst {

struct EmptyInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --- bidirectional GRU encoder ----------------------------------------------

struct BiGruParams {
    GruParams fwd;
    GruParams bwd;

    BiGruParams() = default;
    BiGruParams(const std::string& prefix, int hidden, int input, Rng& rng)
        : fwd(prefix + ".fwd", hidden, input, rng), bwd(prefix + ".bwd", hidden, input, rng) {}

    void collect(std::vector<Parameter*>& out) {
        fwd.collect(out);
        bwd.collect(out);
    }
};

struct BiGruOutput {
    std::vector<Var> states;  // per position, [forward_h ; backward_h]
    Var back_first;           // backward hidden at position 1 (decoder init)
    Var fwd_last;
    Var bwd_last;  // backward hidden after its full sweep == back_first
};

inline BiGruOutput bigru_encode(Tape& t, BiGruParams& p, const std::vector<Var>& xs) {
    if (xs.empty()) throw EmptyInput("bigru_encode: empty input");
    size_t n = xs.size();
    std::vector<Var> fwd(n), bwd(n);
    Var h = t.constant(Tensor({p.fwd.hidden}));
    for (size_t i = 0; i < n; ++i) {
        h = gru_cell(t, p.fwd, h, xs[i]);
        fwd[i] = h;
    }
    Var hb = t.constant(Tensor({p.bwd.hidden}));
    for (size_t i = n; i-- > 0;) {
        hb = gru_cell(t, p.bwd, hb, xs[i]);
        bwd[i] = hb;
    }
    BiGruOutput out;
    out.states.reserve(n);
    for (size_t i = 0; i < n; ++i) out.states.push_back(t.concat({fwd[i], bwd[i]}));
    out.back_first = bwd[0];
    out.fwd_last = fwd[n - 1];
    out.bwd_last = bwd[0];
    return out;
}

// --- additive attention ------------------------------------------------------

struct AttnParams {
    Parameter v, W1, W2, b;

    AttnParams() = default;
    AttnParams(const std::string& prefix, int attn_dim, int dec_dim, int enc_dim, Rng& rng)
        : v(prefix + ".v", {attn_dim}),
          W1(prefix + ".W1", {attn_dim, dec_dim}),
          W2(prefix + ".W2", {attn_dim, enc_dim}),
          b(prefix + ".b", {attn_dim}) {
        for (Parameter* p : {&v, &W1, &W2, &b}) p->init_uniform(rng);
    }

    void collect(std::vector<Parameter*>& out) {
        for (Parameter* p : {&v, &W1, &W2, &b}) out.push_back(p);
    }
};

// Per-position W2 h_i + b, computed once per tape and shared by every decode
// step's attend() call.
inline std::vector<Var> attention_keys(Tape& t, AttnParams& p, const std::vector<Var>& enc) {
    std::vector<Var> keys;
    keys.reserve(enc.size());
    Var w2 = t.leaf(p.W2);
    Var bb = t.leaf(p.b);
    for (Var h : enc) keys.push_back(t.add(t.matmul(w2, h), bb));
    return keys;
}

inline Tape::Attention attend(Tape& t, AttnParams& p, Var d, const std::vector<Var>& keys,
                              const std::vector<Var>& enc) {
    return t.attend(d, keys, enc, t.leaf(p.v), t.leaf(p.W1));
}

// --- decoding helpers --------------------------------------------------------

inline int argmax(const Tensor& v) {
    int best = 0;
    for (int i = 1; i < int(v.data.size()); ++i)
        if (v.data[size_t(i)] > v.data[size_t(best)]) best = i;
    return best;
}

inline int sample_from_logits(const Tensor& logits, double temperature, Rng& rng) {
    Tensor probs = logits;
    for (double& v : probs.data) v /= temperature;
    double mx = probs.data[0];
    for (double v : probs.data) mx = std::max(mx, v);
    double z = 0.0;
    for (double& v : probs.data) {
        v = std::exp(v - mx);
        z += v;
    }
    double u = rng.uniform_real() * z;
    double acc = 0.0;
    for (int i = 0; i < int(probs.data.size()); ++i) {
        acc += probs.data[size_t(i)];
        if (u < acc) return i;
    }
    return int(probs.data.size()) - 1;
}

enum class DecodeMode { Greedy, Sample, Teacher };

// One generated sequence with per-token model log-probs. CE vars stay on the
// tape so policy-gradient and supervised losses can reuse them.
struct Decoded {
    Tokens tokens;             // includes the terminator
    std::vector<Var> ce;       // per-token cross-entropy nodes (-log p)
    std::vector<double> logp;  // detached per-token log-probs
    std::vector<int> align;    // state decoder only: consumed sketch index, -1 = embedding
    bool truncated = false;

    double logprob_sum() const {
        double s = 0.0;
        for (double v : logp) s += v;
        return s;
    }
};

}  // namespace dualdst
