#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualdst/checkpoint.hpp"
#include "dualdst/nn.hpp"
#include "dualdst/optim.hpp"
#include "dualdst/vocab.hpp"

namespace dualdst {

struct EmptySequence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LmConfig {
    int embed = 32;
    int hidden = 64;
    int batch = 16;
};

// Autoregressive GRU language model over its own vocabulary descriptor.
// Scores sequences as sum_t log p(token_t | prefix), natural log; generation
// starts from <BOS>.
class LanguageModel {
  public:
    LanguageModel(const std::string& name, Vocab vocab, LmConfig cfg, uint64_t seed)
        : name_(name), vocab_(std::move(vocab)), cfg_(cfg) {
        Rng rng(seed);
        if (!vocab_.contains(kBos)) throw std::invalid_argument("lm vocab must contain <BOS>");
        embedding_ = Parameter(name + ".emb", {vocab_.size(), cfg.embed});
        embedding_.init_uniform(rng);
        gru_ = GruParams(name + ".gru", cfg.hidden, cfg.embed, rng);
        Wout_ = Parameter(name + ".Wout", {vocab_.size(), cfg.hidden});
        bout_ = Parameter(name + ".bout", {vocab_.size()});
        Wout_.init_uniform(rng);
        bout_.init_uniform(rng);
    }

    const Vocab& vocab() const { return vocab_; }
    const LmConfig& config() const { return cfg_; }

    std::vector<Parameter*> params() {
        std::vector<Parameter*> out = {&embedding_, &Wout_, &bout_};
        gru_.collect(out);
        return out;
    }

    // Summed cross-entropy of the sequence under teacher forcing.
    Var loss_on_tape(Tape& t, const std::vector<int>& ids) {
        if (ids.empty()) throw EmptySequence("lm: empty sequence");
        Var h = t.constant(Tensor({cfg_.hidden}));
        Var x = t.embedding_lookup(embedding_, vocab_.id(kBos));
        Var total = t.constant(Tensor::scalar(0.0));
        for (size_t i = 0; i < ids.size(); ++i) {
            h = gru_cell(t, gru_, h, x);
            Var logits = t.add(t.matmul(t.leaf(Wout_), h), t.leaf(bout_));
            total = t.add(total, t.cross_entropy(logits, ids[i]));
            if (i + 1 < ids.size()) x = t.embedding_lookup(embedding_, ids[i]);
        }
        return total;
    }

    double logprob(const Tokens& seq) {
        if (seq.empty()) throw EmptySequence("lm_logprob: empty sequence");
        Tape t;
        Var loss = loss_on_tape(t, vocab_.encode(seq));
        return -t.value(loss).at(0);
    }

    double mean_logprob(const Tokens& seq) { return logprob(seq) / double(seq.size()); }

    // Teacher-forced training; returns per-epoch training perplexity.
    std::vector<double> train(const std::vector<Tokens>& sequences, int epochs, double lr,
                              uint64_t seed = 1) {
        if (sequences.empty()) throw EmptySequence("lm_train: no sequences");
        std::vector<std::vector<int>> encoded;
        encoded.reserve(sequences.size());
        for (const auto& s : sequences) encoded.push_back(vocab_.encode(s));

        AdamState opt;
        opt.lr = lr;
        Rng rng(seed);
        auto params = this->params();
        std::vector<double> ppl_log;
        for (int epoch = 0; epoch < epochs; ++epoch) {
            std::vector<size_t> order(encoded.size());
            for (size_t i = 0; i < order.size(); ++i) order[i] = i;
            rng.shuffle(order);
            double ce_sum = 0.0;
            int64_t tok_count = 0;
            size_t i = 0;
            while (i < order.size()) {
                Tape t;
                Var batch_loss = t.constant(Tensor::scalar(0.0));
                int64_t batch_tokens = 0;
                size_t end = std::min(order.size(), i + size_t(cfg_.batch));
                for (; i < end; ++i) {
                    const auto& ids = encoded[order[i]];
                    if (ids.empty()) continue;
                    batch_loss = t.add(batch_loss, loss_on_tape(t, ids));
                    batch_tokens += int64_t(ids.size());
                }
                if (batch_tokens == 0) continue;
                ce_sum += t.value(batch_loss).at(0);
                tok_count += batch_tokens;
                Var mean = t.scale(batch_loss, 1.0 / double(batch_tokens));
                t.backward(mean);
                adam_step(params, opt);
            }
            ppl_log.push_back(std::exp(ce_sum / double(tok_count)));
        }
        return ppl_log;
    }

    void save(const std::string& path) {
        nlohmann::ordered_json j;
        j["format_version"] = kCheckpointVersion;
        j["kind"] = "language_model";
        j["config"] = {{"embed", cfg_.embed}, {"hidden", cfg_.hidden}};
        j["vocab"] = vocab_.tokens();
        for (Parameter* p : params()) {
            j["params"][p->name] = {{"shape", p->tensor.shape}, {"data", p->tensor.data}};
        }
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write " + path);
        out << j.dump() << "\n";
    }

    static LanguageModel load(const std::string& name, const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot read " + path);
        nlohmann::json j;
        in >> j;
        Vocab v;
        for (const auto& tok : j.at("vocab").get<std::vector<std::string>>()) v.add(tok);
        LmConfig cfg;
        cfg.embed = j.at("config").at("embed").get<int>();
        cfg.hidden = j.at("config").at("hidden").get<int>();
        LanguageModel lm(name, std::move(v), cfg, 0);
        for (Parameter* p : lm.params()) {
            const auto& entry = j.at("params").at(p->name);
            std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
            if (shape != p->tensor.shape)
                throw ShapeMismatch("lm checkpoint: shape mismatch for " + p->name);
            p->tensor.data = entry.at("data").get<std::vector<double>>();
            p->zero_grad();
        }
        return lm;
    }

  private:
    std::string name_;
    Vocab vocab_;
    LmConfig cfg_;
    Parameter embedding_;
    GruParams gru_;
    Parameter Wout_, bout_;
};

}  // namespace dualdst
