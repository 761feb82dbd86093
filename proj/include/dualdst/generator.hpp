#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dualdst/checkpoint.hpp"
#include "dualdst/corpus.hpp"
#include "dualdst/nn.hpp"
#include "dualdst/ontology.hpp"
#include "dualdst/optim.hpp"
#include "dualdst/vocab.hpp"

namespace dualdst {

struct GeneratorConfig {
    int embed = 32;  // even: the triple encoder runs at embed/2 per direction
    int hidden = 64;
    int utt_cap = 40;
    int max_positions = 64;
};

struct GeneratorOutput {
    Tokens tokens;  // delexicalized, ends with <EOU>
    std::vector<double> logp;
    bool truncated = false;

    double logprob_sum() const {
        double s = 0.0;
        for (double v : logp) s += v;
        return s;
    }
};

// State-to-utterance model: encodes each turn-state triple with a bi-GRU,
// embeds the delexicalized system utterance with learned positions, mixes
// both through one scaled-dot self-attention layer, and decodes the
// delexicalized user utterance with an attention GRU initialized from the
// sum-pooled encoding.
class Generator {
  public:
    struct Example {
        TurnState turn;
        Tokens sys_dex;
        Tokens gold_user_dex;
    };

    Generator(const Ontology& ont, GeneratorConfig cfg, uint64_t seed)
        : cfg_(cfg), vocab_(ont.build_vocab()), delex_(vocab_, ont.delex_tokens()) {
        if (cfg.embed % 2 != 0) throw std::invalid_argument("generator embed dim must be even");
        Rng rng(seed);
        int d = cfg.embed, H = cfg.hidden;
        embedding_ = Parameter("generator.emb", {vocab_.size(), d});
        pos_ = Parameter("generator.pos", {cfg.max_positions, d});
        triple_enc_ = BiGruParams("generator.triple", d / 2, d, rng);
        Wq_ = Parameter("generator.Wq", {d, d});
        Wk_ = Parameter("generator.Wk", {d, d});
        Wv_ = Parameter("generator.Wv", {d, d});
        Winit_ = Parameter("generator.Winit", {H, d});
        binit_ = Parameter("generator.binit", {H});
        dec_ = GruParams("generator.dec", H, d, rng);
        dec_attn_ = AttnParams("generator.dec_attn", H, H, d, rng);
        Wout_ = Parameter("generator.Wout", {delex_.size(), H + d});
        bout_ = Parameter("generator.bout", {delex_.size()});
        for (Parameter* p : {&embedding_, &pos_, &Wq_, &Wk_, &Wv_, &Winit_, &binit_, &Wout_, &bout_})
            p->init_uniform(rng);
    }

    const Vocab& vocab() const { return vocab_; }
    const SubVocab& delex() const { return delex_; }
    const GeneratorConfig& config() const { return cfg_; }

    std::vector<Parameter*> params() {
        std::vector<Parameter*> out = {&embedding_, &pos_,   &Wq_,   &Wk_,  &Wv_,
                                       &Winit_,     &binit_, &Wout_, &bout_};
        triple_enc_.collect(out);
        dec_.collect(out);
        dec_attn_.collect(out);
        return out;
    }

    struct Encoded {
        std::vector<Var> attended;  // post-self-attention vectors, width embed
        std::vector<Var> keys;      // decoder attention keys
        Var init;                   // decoder initial hidden, width hidden
    };

    Encoded encode(Tape& t, const TurnState& turn, const Tokens& sys_dex) {
        if (turn.empty() && sys_dex.empty())
            throw EmptyInput("generator encode: empty turn state and system utterance");

        // One vector per triple: bi-GRU over (<domain>, <slot>, value...).
        std::vector<Var> units;
        for (const auto& [ds, value] : turn.triples()) {
            std::vector<Var> xs;
            xs.push_back(t.embedding_lookup(embedding_, vocab_.id(open_tag(ds.domain))));
            xs.push_back(t.embedding_lookup(embedding_, vocab_.id(open_tag(ds.slot))));
            for (const auto& tok : value)
                xs.push_back(t.embedding_lookup(embedding_, vocab_.id(tok)));
            BiGruOutput enc = bigru_encode(t, triple_enc_, xs);
            units.push_back(t.concat({enc.fwd_last, enc.bwd_last}));
        }
        // System tokens with learned positions; triples carry no position.
        for (size_t i = 0; i < sys_dex.size(); ++i) {
            Var e = t.embedding_lookup(embedding_, vocab_.id(sys_dex[i]));
            int pi = std::min(int(i), cfg_.max_positions - 1);
            units.push_back(t.add(e, t.embedding_lookup(pos_, pi)));
        }

        // Single-head scaled dot-product self-attention over all units.
        Var wq = t.leaf(Wq_), wk = t.leaf(Wk_), wv = t.leaf(Wv_);
        std::vector<Var> q, k, v;
        for (Var u : units) {
            q.push_back(t.matmul(wq, u));
            k.push_back(t.matmul(wk, u));
            v.push_back(t.matmul(wv, u));
        }
        double inv_sqrt_d = 1.0 / std::sqrt(double(cfg_.embed));
        Encoded out;
        for (size_t i = 0; i < units.size(); ++i) {
            std::vector<Var> scores;
            for (size_t j = 0; j < units.size(); ++j)
                scores.push_back(t.scale(t.dot(q[i], k[j]), inv_sqrt_d));
            Var w = t.softmax(t.concat(scores));
            Var mixed;
            for (size_t j = 0; j < units.size(); ++j) {
                Var part = t.smul(t.pick(w, int(j)), v[j]);
                mixed = (j == 0) ? part : t.add(mixed, part);
            }
            out.attended.push_back(mixed);
        }

        Var pooled = out.attended[0];
        for (size_t i = 1; i < out.attended.size(); ++i) pooled = t.add(pooled, out.attended[i]);
        out.init = t.tanh_op(t.add(t.matmul(t.leaf(Winit_), pooled), t.leaf(binit_)));
        out.keys = attention_keys(t, dec_attn_, out.attended);
        return out;
    }

    Decoded generate(Tape& t, const Encoded& enc, DecodeMode mode, const Tokens* gold = nullptr,
                     Rng* rng = nullptr, double temperature = 1.0) {
        Decoded out;
        Var d = enc.init;
        Var x = t.embedding_lookup(embedding_, vocab_.id(kBos));
        size_t limit = (mode == DecodeMode::Teacher) ? gold->size() : size_t(cfg_.utt_cap);
        for (size_t step = 0; step < limit; ++step) {
            d = gru_cell(t, dec_, d, x);
            auto att = attend(t, dec_attn_, d, enc.keys, enc.attended);
            Var logits =
                t.add(t.matmul(t.leaf(Wout_), t.concat({d, att.context})), t.leaf(bout_));
            int tid;
            if (mode == DecodeMode::Teacher) {
                tid = delex_.id((*gold)[step]);
                if (tid < 0) tid = delex_.id(kUnk);  // stray raw value in a dual-loop target
            } else if (mode == DecodeMode::Greedy) {
                tid = argmax(t.value(logits));
            } else {
                tid = sample_from_logits(t.value(logits), temperature, *rng);
            }
            std::string tok = (mode == DecodeMode::Teacher) ? (*gold)[step] : delex_.token(tid);
            if (mode != DecodeMode::Teacher && tok != kEou && step + 1 == limit) {
                tok = kEou;
                tid = delex_.id(kEou);
                out.truncated = true;
            }
            Var ce = t.cross_entropy(logits, tid);
            out.tokens.push_back(tok);
            out.ce.push_back(ce);
            out.logp.push_back(-t.value(ce).at(0));
            if (tok == kEou) break;
            x = t.embedding_lookup(embedding_, vocab_.id(tok));
        }
        return out;
    }

    // Mean per-token teacher-forced cross-entropy of gold_user_dex ++ <EOU>.
    Var loss_on_tape(Tape& t, const Example& ex) {
        Encoded enc = encode(t, ex.turn, ex.sys_dex);
        Tokens gold = ex.gold_user_dex;
        gold.push_back(kEou);
        Decoded dec = generate(t, enc, DecodeMode::Teacher, &gold);
        return t.scale(sum_vars(t, dec.ce), 1.0 / double(dec.ce.size()));
    }

    Var batch_loss(Tape& t, const std::vector<Example>& batch) {
        if (batch.empty()) throw EmptyInput("generator batch_loss: empty batch");
        Var total = t.constant(Tensor::scalar(0.0));
        for (const auto& ex : batch) total = t.add(total, loss_on_tape(t, ex));
        return t.scale(total, 1.0 / double(batch.size()));
    }

    GeneratorOutput greedy(const TurnState& turn, const Tokens& sys_dex) {
        return run(turn, sys_dex, DecodeMode::Greedy);
    }
    GeneratorOutput sample(const TurnState& turn, const Tokens& sys_dex, Rng& rng,
                           double temperature = 1.0) {
        return run(turn, sys_dex, DecodeMode::Sample, &rng, temperature);
    }

    void pg_update(const TurnState& turn, const Tokens& sys_dex, const GeneratorOutput& sampled,
                   double reward, double baseline, AdamState& opt) {
        double adv = reward - baseline;
        if (adv == 0.0) return;
        Tape t;
        Encoded enc = encode(t, turn, sys_dex);
        Decoded dec = generate(t, enc, DecodeMode::Teacher, &sampled.tokens);
        Var loss = t.scale(sum_vars(t, dec.ce), adv);  // -(r-b) * sum log p
        t.backward(loss);
        auto ps = params();
        adam_step(ps, opt);
    }

    double score(const TurnState& turn, const Tokens& sys_dex, const GeneratorOutput& out) {
        Tape t;
        Encoded enc = encode(t, turn, sys_dex);
        Decoded dec = generate(t, enc, DecodeMode::Teacher, &out.tokens);
        return dec.logprob_sum();
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

    GeneratorOutput run(const TurnState& turn, const Tokens& sys_dex, DecodeMode mode,
                        Rng* rng = nullptr, double temperature = 1.0) {
        Tape t;
        Encoded enc = encode(t, turn, sys_dex);
        Decoded dec = generate(t, enc, mode, nullptr, rng, temperature);
        GeneratorOutput out;
        out.tokens = dec.tokens;
        out.logp = dec.logp;
        out.truncated = dec.truncated;
        return out;
    }

    GeneratorConfig cfg_;
    Vocab vocab_;
    SubVocab delex_;

    Parameter embedding_, pos_;
    BiGruParams triple_enc_;
    Parameter Wq_, Wk_, Wv_;
    Parameter Winit_, binit_;
    GruParams dec_;
    AttnParams dec_attn_;
    Parameter Wout_, bout_;
};

}  // namespace dualdst
