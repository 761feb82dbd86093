#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dualdst/checkpoint.hpp"
#include "dualdst/corpus.hpp"
#include "dualdst/nn.hpp"
#include "dualdst/ontology.hpp"
#include "dualdst/optim.hpp"
#include "dualdst/state.hpp"
#include "dualdst/vocab.hpp"

namespace dualdst {

struct TrackerConfig {
    int embed = 32;  // even: the sketch encoder runs at embed/2 per direction
    int hidden = 64;
    int sketch_cap = 64;
    int state_cap = 128;
};

struct TrackerOutput {
    Tokens sketch;
    std::vector<double> sketch_logp;
    Tokens state_seq;
    std::vector<double> state_logp;
    bool sketch_truncated = false;
    bool state_truncated = false;
    std::optional<DialogueState> state;
    std::optional<ParseError> parse_error;

    bool parse_failed() const { return !state.has_value(); }
};

// Coarse-to-fine state tracker: context bi-GRU encoder, attention-equipped
// sketch decoder, sketch bi-GRU encoder, and a sketch-guided state decoder
// whose input is the matching sketch vector when the previous output token
// equals the sketch token at a monotone pointer, and the token embedding
// otherwise.
class Tracker {
  public:
    struct Example {
        ContextInput input;
        Tokens gold;  // serialized state sequence
    };

    Tracker(const Ontology& ont, TrackerConfig cfg, uint64_t seed)
        : cfg_(cfg),
          vocab_(ont.build_vocab()),
          tags_(vocab_, ont.tag_tokens()),
          schema_(ont.schema()) {
        if (cfg.embed % 2 != 0) throw std::invalid_argument("tracker embed dim must be even");
        Rng rng(seed);
        int d = cfg.embed, H = cfg.hidden;
        embedding_ = Parameter("tracker.emb", {vocab_.size(), d});
        embedding_.init_uniform(rng);
        ctx_enc_ = BiGruParams("tracker.ctx", H, d, rng);
        sketch_dec_ = GruParams("tracker.sketch_dec", H, d, rng);
        sketch_attn_ = AttnParams("tracker.sketch_attn", H, H, 2 * H, rng);
        sketch_Wout_ = Parameter("tracker.sketch_Wout", {tags_.size(), H + 2 * H});
        sketch_bout_ = Parameter("tracker.sketch_bout", {tags_.size()});
        sketch_enc_ = BiGruParams("tracker.sketch_enc", d / 2, d, rng);
        state_dec_ = GruParams("tracker.state_dec", H, d, rng);
        state_attn_ = AttnParams("tracker.state_attn", H, H, 2 * H, rng);
        state_Wout_ = Parameter("tracker.state_Wout", {vocab_.size(), H + 2 * H});
        state_bout_ = Parameter("tracker.state_bout", {vocab_.size()});
        for (Parameter* p : {&sketch_Wout_, &sketch_bout_, &state_Wout_, &state_bout_})
            p->init_uniform(rng);
    }

    const Vocab& vocab() const { return vocab_; }
    const SubVocab& tags() const { return tags_; }
    const StateSchema& schema() const { return schema_; }
    const TrackerConfig& config() const { return cfg_; }

    std::vector<Parameter*> params() {
        std::vector<Parameter*> out = {&embedding_, &sketch_Wout_, &sketch_bout_, &state_Wout_,
                                       &state_bout_};
        ctx_enc_.collect(out);
        sketch_dec_.collect(out);
        sketch_attn_.collect(out);
        sketch_enc_.collect(out);
        state_dec_.collect(out);
        state_attn_.collect(out);
        return out;
    }

    struct Encoded {
        std::vector<Var> h;  // per input position, width 2H
        Var back_first;      // decoder init
        std::vector<Var> sketch_keys;
        std::vector<Var> state_keys;
    };

    Encoded encode_context(Tape& t, const ContextInput& input) {
        if (input.tokens.empty()) throw EmptyInput("encode_context: empty input");
        std::vector<Var> xs;
        xs.reserve(input.tokens.size());
        for (const auto& tok : input.tokens)
            xs.push_back(t.embedding_lookup(embedding_, vocab_.id(tok)));
        BiGruOutput enc = bigru_encode(t, ctx_enc_, xs);
        Encoded out;
        out.h = std::move(enc.states);
        out.back_first = enc.back_first;
        out.sketch_keys = attention_keys(t, sketch_attn_, out.h);
        out.state_keys = attention_keys(t, state_attn_, out.h);
        return out;
    }

    Decoded decode_sketch(Tape& t, const Encoded& enc, DecodeMode mode,
                          const Tokens* gold = nullptr, Rng* rng = nullptr,
                          double temperature = 1.0) {
        Decoded out;
        Var d = enc.back_first;
        Var x = t.embedding_lookup(embedding_, vocab_.id(kBos));
        size_t limit = (mode == DecodeMode::Teacher) ? gold->size() : size_t(cfg_.sketch_cap);
        for (size_t step = 0; step < limit; ++step) {
            d = gru_cell(t, sketch_dec_, d, x);
            auto att = attend(t, sketch_attn_, d, enc.sketch_keys, enc.h);
            Var logits = t.add(t.matmul(t.leaf(sketch_Wout_), t.concat({d, att.context})),
                               t.leaf(sketch_bout_));
            int tid;
            if (mode == DecodeMode::Teacher) {
                tid = tags_.id((*gold)[step]);
                if (tid < 0)
                    throw std::invalid_argument("gold sketch token outside tag vocabulary: " +
                                                (*gold)[step]);
            } else if (mode == DecodeMode::Greedy) {
                tid = argmax(t.value(logits));
            } else {
                tid = sample_from_logits(t.value(logits), temperature, *rng);
            }
            std::string tok = tags_.token(tid);
            if (mode != DecodeMode::Teacher && tok != kEob && step + 1 == limit) {
                tok = kEob;  // cap reached: truncate with a forced terminator
                tid = tags_.id(kEob);
                out.truncated = true;
            }
            Var ce = t.cross_entropy(logits, tid);
            out.tokens.push_back(tok);
            out.ce.push_back(ce);
            out.logp.push_back(-t.value(ce).at(0));
            if (tok == kEob) break;
            x = t.embedding_lookup(embedding_, vocab_.id(tok));
        }
        return out;
    }

    // Sketch tokens -> one vector per token, width embed (= 2 * embed/2).
    std::vector<Var> encode_sketch(Tape& t, const Tokens& sketch) {
        std::vector<Var> xs;
        xs.reserve(sketch.size());
        for (const auto& tok : sketch)
            xs.push_back(t.embedding_lookup(embedding_, vocab_.id(tok)));
        return bigru_encode(t, sketch_enc_, xs).states;
    }

    Decoded decode_state(Tape& t, const Encoded& enc, const std::vector<Var>& sketch_vecs,
                         const Tokens& sketch, DecodeMode mode, const Tokens* gold = nullptr,
                         Rng* rng = nullptr, double temperature = 1.0) {
        Decoded out;
        Var d = enc.back_first;
        std::string prev = kBos;
        size_t ptr = 0;  // monotone alignment into the sketch
        size_t limit = (mode == DecodeMode::Teacher) ? gold->size() : size_t(cfg_.state_cap);
        for (size_t step = 0; step < limit; ++step) {
            Var z;
            if (ptr < sketch.size() && prev == sketch[ptr]) {
                z = sketch_vecs[ptr];
                out.align.push_back(int(ptr));
                ++ptr;
            } else {
                z = t.embedding_lookup(embedding_, vocab_.id(prev));
                out.align.push_back(-1);
            }
            d = gru_cell(t, state_dec_, d, z);
            auto att = attend(t, state_attn_, d, enc.state_keys, enc.h);
            Var logits = t.add(t.matmul(t.leaf(state_Wout_), t.concat({d, att.context})),
                               t.leaf(state_bout_));
            int tid;
            if (mode == DecodeMode::Teacher) {
                tid = vocab_.id((*gold)[step]);
            } else if (mode == DecodeMode::Greedy) {
                tid = argmax(t.value(logits));
            } else {
                tid = sample_from_logits(t.value(logits), temperature, *rng);
            }
            std::string tok =
                (mode == DecodeMode::Teacher) ? (*gold)[step] : vocab_.token(tid);
            if (mode != DecodeMode::Teacher && tok != kEob && step + 1 == limit) {
                tok = kEob;
                tid = vocab_.id(kEob);
                out.truncated = true;
            }
            Var ce = t.cross_entropy(logits, tid);
            out.tokens.push_back(tok);
            out.ce.push_back(ce);
            out.logp.push_back(-t.value(ce).at(0));
            if (tok == kEob) break;
            prev = tok;
        }
        return out;
    }

    // Teacher-forced loss for one example: mean per-token sketch CE plus mean
    // per-token state CE. The gold sketch is derived from the gold sequence.
    Var loss_on_tape(Tape& t, const ContextInput& input, const Tokens& gold) {
        auto sk = extract_sketch(gold, schema_);
        if (!sk.ok())
            throw std::invalid_argument("tracker loss: gold does not parse: " +
                                        sk.error->message + " at " +
                                        std::to_string(sk.error->position));
        Encoded enc = encode_context(t, input);
        Decoded sketch_dec = decode_sketch(t, enc, DecodeMode::Teacher, &*sk.sketch);
        std::vector<Var> sv = encode_sketch(t, *sk.sketch);
        Decoded state_dec = decode_state(t, enc, sv, *sk.sketch, DecodeMode::Teacher, &gold);
        Var sketch_mean = t.scale(sum_vars(t, sketch_dec.ce), 1.0 / double(sketch_dec.ce.size()));
        Var state_mean = t.scale(sum_vars(t, state_dec.ce), 1.0 / double(state_dec.ce.size()));
        return t.add(sketch_mean, state_mean);
    }

    Var batch_loss(Tape& t, const std::vector<Example>& batch) {
        if (batch.empty()) throw EmptyInput("tracker batch_loss: empty batch");
        Var total = t.constant(Tensor::scalar(0.0));
        for (const auto& ex : batch) total = t.add(total, loss_on_tape(t, ex.input, ex.gold));
        return t.scale(total, 1.0 / double(batch.size()));
    }

    // Greedy sketch, then greedy sketch-guided state, then parse.
    TrackerOutput predict(const ContextInput& input) { return run(input, DecodeMode::Greedy); }

    TrackerOutput sample(const ContextInput& input, Rng& rng, double temperature = 1.0) {
        return run(input, DecodeMode::Sample, &rng, temperature);
    }

    // One REINFORCE step on loss = -(r - b) * sum log p over the sampled
    // sketch and state tokens. A zero advantage is an exact no-op.
    void pg_update(const ContextInput& input, const TrackerOutput& sampled, double reward,
                   double baseline, AdamState& opt) {
        double adv = reward - baseline;
        if (adv == 0.0) return;
        Tape t;
        Encoded enc = encode_context(t, input);
        Decoded sk = decode_sketch(t, enc, DecodeMode::Teacher, &sampled.sketch);
        std::vector<Var> sv = encode_sketch(t, sampled.sketch);
        Decoded st =
            decode_state(t, enc, sv, sampled.sketch, DecodeMode::Teacher, &sampled.state_seq);
        Var total_ce = t.add(sum_vars(t, sk.ce), sum_vars(t, st.ce));
        Var loss = t.scale(total_ce, adv);  // -(r-b) * sum log p
        t.backward(loss);
        auto ps = params();
        adam_step(ps, opt);
    }

    // Model log-prob of an already-generated output (used by tests and the
    // policy-gradient direction checks).
    double score(const ContextInput& input, const TrackerOutput& out) {
        Tape t;
        Encoded enc = encode_context(t, input);
        Decoded sk = decode_sketch(t, enc, DecodeMode::Teacher, &out.sketch);
        std::vector<Var> sv = encode_sketch(t, out.sketch);
        Decoded st = decode_state(t, enc, sv, out.sketch, DecodeMode::Teacher, &out.state_seq);
        return sk.logprob_sum() + st.logprob_sum();
    }

    void save(const std::string& path) {
        auto ps = params();
        save_params(path, ps);
    }
    void load(const std::string& path) {
        auto ps = params();
        load_params(path, ps);
    }

  private:
    static Var sum_vars(Tape& t, const std::vector<Var>& vars) {
        Var total = t.constant(Tensor::scalar(0.0));
        for (Var v : vars) total = t.add(total, v);
        return total;
    }

    TrackerOutput run(const ContextInput& input, DecodeMode mode, Rng* rng = nullptr,
                      double temperature = 1.0) {
        Tape t;
        Encoded enc = encode_context(t, input);
        Decoded sk = decode_sketch(t, enc, mode, nullptr, rng, temperature);
        std::vector<Var> sv = encode_sketch(t, sk.tokens);
        Decoded st = decode_state(t, enc, sv, sk.tokens, mode, nullptr, rng, temperature);
        TrackerOutput out;
        out.sketch = sk.tokens;
        out.sketch_logp = sk.logp;
        out.sketch_truncated = sk.truncated;
        out.state_seq = st.tokens;
        out.state_logp = st.logp;
        out.state_truncated = st.truncated;
        ParseResult parsed = parse_state(out.state_seq, schema_);
        if (parsed.ok())
            out.state = std::move(parsed.state);
        else
            out.parse_error = parsed.error;
        return out;
    }

    TrackerConfig cfg_;
    Vocab vocab_;
    SubVocab tags_;
    StateSchema schema_;

    Parameter embedding_;
    BiGruParams ctx_enc_;
    GruParams sketch_dec_;
    AttnParams sketch_attn_;
    Parameter sketch_Wout_, sketch_bout_;
    BiGruParams sketch_enc_;
    GruParams state_dec_;
    AttnParams state_attn_;
    Parameter state_Wout_, state_bout_;
};

}  // namespace dualdst
