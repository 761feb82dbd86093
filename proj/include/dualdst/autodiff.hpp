#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dualdst/rng.hpp"
#include "dualdst/tensor.hpp"

namespace dualdst {

struct DetachedNode : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Trainable tensor with accumulated gradient. Names are unique within a model
// and double as checkpoint keys.
struct Parameter {
    std::string name;
    Tensor tensor;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, std::vector<int> shape) : name(std::move(n)), tensor(shape), grad(shape) {}

    void init_uniform(Rng& rng, double half_range = 0.08) {
        for (double& v : tensor.data) v = rng.uniform_real(-half_range, half_range);
    }

    void zero_grad() { grad.fill(0.0); }
};

// Handle into a Tape node.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Records one forward pass; backward() walks nodes in reverse creation order,
// which is a reverse topological order because ops only consume existing
// nodes. Each node's backward runs exactly once.
class Tape {
  public:
    const Tensor& value(Var v) const {
        const Node& n = node(v);
        return n.external ? *n.external : n.val;
    }

    Tensor& grad(Var v) { return nodes_[size_t(v.id)].grad; }

    // --- node creation -------------------------------------------------

    // Leaf for a parameter; repeated calls on one tape return the same node.
    Var leaf(Parameter& p) {
        auto it = leaf_cache_.find(&p);
        if (it != leaf_cache_.end()) return it->second;
        Var v = push(Node{});
        Node& n = nodes_.back();
        n.external = &p.tensor;
        n.grad = Tensor(p.tensor.shape);
        n.back_dispatch = [&p](Node& self) { accumulate(p.grad, self.grad); };
        leaf_cache_.emplace(&p, v);
        return v;
    }

    // Input without gradient tracking.
    Var constant(Tensor t) {
        Var v = push(Node{});
        Node& n = nodes_.back();
        n.val = std::move(t);
        n.grad = Tensor(n.val.shape);
        return v;
    }

    // --- ops -------------------------------------------------------------

    Var matmul(Var a, Var b) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        if (A.shape.size() != 2) throw ShapeMismatch("matmul: lhs must be 2-D, got " + A.shape_str());
        int m = A.shape[0], k = A.shape[1];
        if (B.shape.size() == 1) {
            if (B.shape[0] != k)
                throw ShapeMismatch("matmul: " + A.shape_str() + " x " + B.shape_str());
            Tensor out({m});
            for (int i = 0; i < m; ++i) {
                const double* row = &A.data[size_t(i) * size_t(k)];
                double acc = 0.0;
                for (int j = 0; j < k; ++j) acc += row[j] * B.data[size_t(j)];
                out.at(i) = acc;
            }
            return make(std::move(out), {a, b}, [this, a, b, m, k](Node& n) {
                const Tensor& A = value(a);
                const Tensor& B = value(b);
                Tensor& gA = grad(a);
                Tensor& gB = grad(b);
                for (int i = 0; i < m; ++i) {
                    double gi = n.grad.at(i);
                    if (gi == 0.0) continue;
                    double* gArow = &gA.data[size_t(i) * size_t(k)];
                    const double* Arow = &A.data[size_t(i) * size_t(k)];
                    for (int j = 0; j < k; ++j) {
                        gArow[j] += gi * B.data[size_t(j)];
                        gB.data[size_t(j)] += gi * Arow[j];
                    }
                }
            });
        }
        if (B.shape.size() != 2 || B.shape[0] != k)
            throw ShapeMismatch("matmul: " + A.shape_str() + " x " + B.shape_str());
        int p = B.shape[1];
        Tensor out({m, p});
        for (int i = 0; i < m; ++i)
            for (int l = 0; l < k; ++l) {
                double av = A.at(i, l);
                if (av == 0.0) continue;
                for (int j = 0; j < p; ++j) out.at(i, j) += av * B.at(l, j);
            }
        return make(std::move(out), {a, b}, [this, a, b, m, k, p](Node& n) {
            const Tensor& A = value(a);
            const Tensor& B = value(b);
            Tensor& gA = grad(a);
            Tensor& gB = grad(b);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < p; ++j) {
                    double g = n.grad.at(i, j);
                    if (g == 0.0) continue;
                    for (int l = 0; l < k; ++l) {
                        gA.at(i, l) += g * B.at(l, j);
                        gB.at(l, j) += g * A.at(i, l);
                    }
                }
        });
    }

    Var add(Var a, Var b) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        if (!A.same_shape(B)) throw ShapeMismatch("add: " + A.shape_str() + " vs " + B.shape_str());
        Tensor out = A;
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += B.data[i];
        return make(std::move(out), {a, b}, [this, a, b](Node& n) {
            accumulate(grad(a), n.grad);
            accumulate(grad(b), n.grad);
        });
    }

    Var sub(Var a, Var b) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        if (!A.same_shape(B)) throw ShapeMismatch("sub: " + A.shape_str() + " vs " + B.shape_str());
        Tensor out = A;
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= B.data[i];
        return make(std::move(out), {a, b}, [this, a, b](Node& n) {
            accumulate(grad(a), n.grad);
            Tensor& gb = grad(b);
            for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] -= n.grad.data[i];
        });
    }

    // Elementwise (Hadamard) product.
    Var mul(Var a, Var b) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        if (!A.same_shape(B)) throw ShapeMismatch("mul: " + A.shape_str() + " vs " + B.shape_str());
        Tensor out = A;
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= B.data[i];
        return make(std::move(out), {a, b}, [this, a, b](Node& n) {
            const Tensor& A = value(a);
            const Tensor& B = value(b);
            Tensor& ga = grad(a);
            Tensor& gb = grad(b);
            for (size_t i = 0; i < n.grad.data.size(); ++i) {
                ga.data[i] += n.grad.data[i] * B.data[i];
                gb.data[i] += n.grad.data[i] * A.data[i];
            }
        });
    }

    Var scale(Var a, double s) {
        Tensor out = value(a);
        for (double& v : out.data) v *= s;
        return make(std::move(out), {a}, [this, a, s](Node& n) {
            Tensor& ga = grad(a);
            for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += s * n.grad.data[i];
        });
    }

    Var concat(const std::vector<Var>& parts) {
        if (parts.empty()) throw ShapeMismatch("concat: no inputs");
        int total = 0;
        for (Var p : parts) {
            if (value(p).shape.size() != 1) throw ShapeMismatch("concat: 1-D inputs only");
            total += value(p).shape[0];
        }
        Tensor out({total});
        int off = 0;
        for (Var p : parts) {
            const Tensor& t = value(p);
            for (int i = 0; i < t.shape[0]; ++i) out.at(off + i) = t.at(i);
            off += t.shape[0];
        }
        return make(std::move(out), parts, [this, parts](Node& n) {
            int off = 0;
            for (Var p : parts) {
                Tensor& gp = grad(p);
                for (int i = 0; i < gp.shape[0]; ++i) gp.at(i) += n.grad.at(off + i);
                off += gp.shape[0];
            }
        });
    }

    Var tanh_op(Var a) {
        Tensor out = value(a);
        for (double& v : out.data) v = std::tanh(v);
        return make(std::move(out), {a}, [this, a](Node& n) {
            Tensor& ga = grad(a);
            for (size_t i = 0; i < ga.data.size(); ++i) {
                double y = n.val.data[i];
                ga.data[i] += (1.0 - y * y) * n.grad.data[i];
            }
        });
    }

    Var sigmoid_op(Var a) {
        Tensor out = value(a);
        for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
        return make(std::move(out), {a}, [this, a](Node& n) {
            Tensor& ga = grad(a);
            for (size_t i = 0; i < ga.data.size(); ++i) {
                double y = n.val.data[i];
                ga.data[i] += y * (1.0 - y) * n.grad.data[i];
            }
        });
    }

    // Softmax over a 1-D vector, numerically stabilized.
    Var softmax(Var a) {
        const Tensor& A = value(a);
        if (A.shape.size() != 1) throw ShapeMismatch("softmax: 1-D input only");
        Tensor out = A;
        double mx = out.data[0];
        for (double v : out.data) mx = std::max(mx, v);
        double z = 0.0;
        for (double& v : out.data) {
            v = std::exp(v - mx);
            z += v;
        }
        for (double& v : out.data) v /= z;
        return make(std::move(out), {a}, [this, a](Node& n) {
            Tensor& ga = grad(a);
            double dot = 0.0;
            for (size_t i = 0; i < ga.data.size(); ++i) dot += n.grad.data[i] * n.val.data[i];
            for (size_t i = 0; i < ga.data.size(); ++i)
                ga.data[i] += n.val.data[i] * (n.grad.data[i] - dot);
        });
    }

    // Row lookup into an embedding table parameter. Gradient flows straight
    // into the table row.
    Var embedding_lookup(Parameter& table, int row) {
        if (table.tensor.shape.size() != 2) throw ShapeMismatch("embedding_lookup: table must be 2-D");
        int V = table.tensor.shape[0], d = table.tensor.shape[1];
        if (row < 0 || row >= V) throw ShapeMismatch("embedding_lookup: row out of range");
        Tensor out({d});
        for (int j = 0; j < d; ++j) out.at(j) = table.tensor.at(row, j);
        return make(std::move(out), {}, [&table, row, d](Node& n) {
            for (int j = 0; j < d; ++j) table.grad.at(row, j) += n.grad.at(j);
        });
    }

    // -log softmax(logits)[target], stable via logsumexp.
    Var cross_entropy(Var logits, int target) {
        const Tensor& L = value(logits);
        if (L.shape.size() != 1) throw ShapeMismatch("cross_entropy: 1-D logits only");
        if (target < 0 || target >= L.shape[0])
            throw ShapeMismatch("cross_entropy: target out of range");
        double mx = L.data[0];
        for (double v : L.data) mx = std::max(mx, v);
        double z = 0.0;
        for (double v : L.data) z += std::exp(v - mx);
        double lse = mx + std::log(z);
        Tensor out = Tensor::scalar(lse - L.at(target));
        return make(std::move(out), {logits}, [this, logits, target, mx, lse](Node& n) {
            const Tensor& L = value(logits);
            Tensor& gl = grad(logits);
            double g = n.grad.at(0);
            for (int i = 0; i < L.shape[0]; ++i) {
                double soft = std::exp(L.at(i) - lse);
                gl.at(i) += g * (soft - (i == target ? 1.0 : 0.0));
            }
        });
    }

    Var sum(Var a) {
        const Tensor& A = value(a);
        double s = 0.0;
        for (double v : A.data) s += v;
        return make(Tensor::scalar(s), {a}, [this, a](Node& n) {
            Tensor& ga = grad(a);
            double g = n.grad.at(0);
            for (double& v : ga.data) v += g;
        });
    }

    // Element i of a 1-D vector, as a scalar node.
    Var pick(Var a, int i) {
        const Tensor& A = value(a);
        if (A.shape.size() != 1 || i < 0 || i >= A.shape[0])
            throw ShapeMismatch("pick: index out of range");
        return make(Tensor::scalar(A.at(i)), {a}, [this, a, i](Node& n) {
            grad(a).at(i) += n.grad.at(0);
        });
    }

    Var dot(Var a, Var b) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        if (!A.same_shape(B) || A.shape.size() != 1)
            throw ShapeMismatch("dot: " + A.shape_str() + " vs " + B.shape_str());
        double s = 0.0;
        for (size_t i = 0; i < A.data.size(); ++i) s += A.data[i] * B.data[i];
        return make(Tensor::scalar(s), {a, b}, [this, a, b](Node& n) {
            const Tensor& A = value(a);
            const Tensor& B = value(b);
            Tensor& ga = grad(a);
            Tensor& gb = grad(b);
            double g = n.grad.at(0);
            for (size_t i = 0; i < ga.data.size(); ++i) {
                ga.data[i] += g * B.data[i];
                gb.data[i] += g * A.data[i];
            }
        });
    }

    // scalar * vector
    Var smul(Var s, Var a) {
        const Tensor& S = value(s);
        if (!S.is_scalar()) throw ShapeMismatch("smul: first argument must be scalar");
        Tensor out = value(a);
        for (double& v : out.data) v *= S.at(0);
        return make(std::move(out), {s, a}, [this, s, a](Node& n) {
            const Tensor& S = value(s);
            const Tensor& A = value(a);
            Tensor& gs = grad(s);
            Tensor& ga = grad(a);
            for (size_t i = 0; i < A.data.size(); ++i) {
                gs.at(0) += n.grad.data[i] * A.data[i];
                ga.data[i] += n.grad.data[i] * S.at(0);
            }
        });
    }

    // Fused Luong-style additive attention:
    //   u_i = v . tanh(W1 d + key_i),  s = softmax(u),  c = sum_i s_i enc_i
    // key_i is the precomputed W2 enc_i + b node (one matmul per encoder
    // position per tape, shared across decode steps).
    struct Attention {
        Var context;
        Tensor weights;  // detached copy, for inspection
    };

    Attention attend(Var d, const std::vector<Var>& keys, const std::vector<Var>& enc,
                     Var v_param, Var w1_param) {
        if (keys.size() != enc.size() || keys.empty())
            throw ShapeMismatch("attend: keys/enc size mismatch");
        const Tensor& W1 = value(w1_param);
        const Tensor& vp = value(v_param);
        int A = W1.shape[0];
        if (vp.shape[0] != A) throw ShapeMismatch("attend: v/W1 disagree");
        int n = int(keys.size());
        int enc_dim = value(enc[0]).shape[0];

        // W1 d, computed once per step.
        Tensor w1d({A});
        const Tensor& D = value(d);
        for (int i = 0; i < A; ++i) {
            double acc = 0.0;
            for (int j = 0; j < W1.shape[1]; ++j) acc += W1.at(i, j) * D.at(j);
            w1d.at(i) = acc;
        }

        auto act = std::make_shared<std::vector<Tensor>>();  // tanh activations per position
        act->reserve(size_t(n));
        Tensor scores({n});
        for (int i = 0; i < n; ++i) {
            const Tensor& key = value(keys[size_t(i)]);
            Tensor a({A});
            double u = 0.0;
            for (int j = 0; j < A; ++j) {
                double t = std::tanh(w1d.at(j) + key.at(j));
                a.at(j) = t;
                u += vp.at(j) * t;
            }
            act->push_back(std::move(a));
            scores.at(i) = u;
        }
        double mx = scores.at(0);
        for (int i = 0; i < n; ++i) mx = std::max(mx, scores.at(i));
        double z = 0.0;
        for (int i = 0; i < n; ++i) z += std::exp(scores.at(i) - mx);
        auto weights = std::make_shared<Tensor>(Tensor({n}));
        for (int i = 0; i < n; ++i) weights->at(i) = std::exp(scores.at(i) - mx) / z;

        Tensor ctx({enc_dim});
        for (int i = 0; i < n; ++i) {
            double w = weights->at(i);
            const Tensor& h = value(enc[size_t(i)]);
            for (int j = 0; j < enc_dim; ++j) ctx.at(j) += w * h.at(j);
        }

        std::vector<Var> parents = {d, v_param, w1_param};
        parents.insert(parents.end(), keys.begin(), keys.end());
        parents.insert(parents.end(), enc.begin(), enc.end());
        Var out = make(std::move(ctx), parents,
                       [this, d, v_param, w1_param, keys, enc, act, weights, n, A,
                        enc_dim](Node& node) {
            // dL/ds_i from c = sum s_i enc_i, then back through softmax,
            // score dot, tanh, and the two linear maps.
            const Tensor& vp = value(v_param);
            const Tensor& W1 = value(w1_param);
            const Tensor& D = value(d);
            std::vector<double> gs(size_t(n), 0.0);
            for (int i = 0; i < n; ++i) {
                const Tensor& h = value(enc[size_t(i)]);
                Tensor& gh = grad(enc[size_t(i)]);
                double w = weights->at(i);
                double acc = 0.0;
                for (int j = 0; j < enc_dim; ++j) {
                    acc += node.grad.at(j) * h.at(j);
                    gh.at(j) += w * node.grad.at(j);
                }
                gs[size_t(i)] = acc;
            }
            double dot = 0.0;
            for (int i = 0; i < n; ++i) dot += gs[size_t(i)] * weights->at(i);
            Tensor& gv = grad(v_param);
            Tensor& gW1 = grad(w1_param);
            Tensor& gd = grad(d);
            for (int i = 0; i < n; ++i) {
                double gu = weights->at(i) * (gs[size_t(i)] - dot);
                if (gu == 0.0) continue;
                const Tensor& a = (*act)[size_t(i)];
                Tensor& gkey = grad(keys[size_t(i)]);
                for (int j = 0; j < A; ++j) {
                    double ga = gu * vp.at(j);
                    gv.at(j) += gu * a.at(j);
                    double gz = ga * (1.0 - a.at(j) * a.at(j));
                    gkey.at(j) += gz;
                    for (int k = 0; k < W1.shape[1]; ++k) {
                        gW1.at(j, k) += gz * D.at(k);
                        gd.at(k) += gz * W1.at(j, k);
                    }
                }
            }
        });
        return Attention{out, *weights};
    }

    // --- backward ----------------------------------------------------------

    void backward(Var loss) {
        if (!loss.valid() || size_t(loss.id) >= nodes_.size())
            throw DetachedNode("backward: loss not on this tape");
        if (!value(loss).is_scalar()) throw ShapeMismatch("backward: loss must be scalar");
        nodes_[size_t(loss.id)].grad.fill(1.0);
        for (int i = loss.id; i >= 0; --i) {
            Node& n = nodes_[size_t(i)];
            if (n.back_dispatch) n.back_dispatch(n);
        }
    }

    void clear() {
        nodes_.clear();
        leaf_cache_.clear();
    }

    size_t size() const { return nodes_.size(); }

  private:
    struct Node {
        Tensor val;
        const Tensor* external = nullptr;
        Tensor grad;
        std::function<void(Node&)> back_dispatch;
    };

    const Node& node(Var v) const {
        if (!v.valid() || size_t(v.id) >= nodes_.size()) throw DetachedNode("invalid Var");
        return nodes_[size_t(v.id)];
    }

    Var push(Node n) {
        nodes_.push_back(std::move(n));
        return Var{int(nodes_.size()) - 1};
    }

    template <typename F>
    Var make(Tensor out, const std::vector<Var>& parents, F&& backfn) {
        for (Var p : parents) node(p);  // validates
        if (!out.finite()) throw NonFiniteValue("op produced non-finite values");
        Var v = push(Node{});
        Node& n = nodes_.back();
        n.val = std::move(out);
        n.grad = Tensor(n.val.shape);
        n.back_dispatch = std::forward<F>(backfn);
        return v;
    }

    static void accumulate(Tensor& dst, const Tensor& src) {
        for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
    }

    std::vector<Node> nodes_;
    std::unordered_map<const Parameter*, Var> leaf_cache_;
};

// --- GRU cell --------------------------------------------------------------

inline Tensor ones(int n) {
    Tensor t({n});
    t.fill(1.0);
    return t;
}

// One direction of a GRU: weights over the concatenated [h, x] input.
struct GruParams {
    Parameter Wz, Wr, Wh;
    Parameter bz, br, bh;
    int hidden = 0;
    int input = 0;

    GruParams() = default;
    GruParams(const std::string& prefix, int hidden_size, int input_size, Rng& rng)
        : Wz(prefix + ".Wz", {hidden_size, hidden_size + input_size}),
          Wr(prefix + ".Wr", {hidden_size, hidden_size + input_size}),
          Wh(prefix + ".Wh", {hidden_size, hidden_size + input_size}),
          bz(prefix + ".bz", {hidden_size}),
          br(prefix + ".br", {hidden_size}),
          bh(prefix + ".bh", {hidden_size}),
          hidden(hidden_size),
          input(input_size) {
        for (Parameter* p : {&Wz, &Wr, &Wh, &bz, &br, &bh}) p->init_uniform(rng);
    }

    void collect(std::vector<Parameter*>& out) {
        for (Parameter* p : {&Wz, &Wr, &Wh, &bz, &br, &bh}) out.push_back(p);
    }
};

// Standard update/reset-gate formulation:
//   z = sigmoid(Wz [h, x] + bz), r = sigmoid(Wr [h, x] + br)
//   htilde = tanh(Wh [r*h, x] + bh), h' = (1 - z) * h + z * htilde
inline Var gru_cell(Tape& t, GruParams& p, Var h_prev, Var x) {
    if (t.value(h_prev).shape != std::vector<int>{p.hidden} ||
        t.value(x).shape != std::vector<int>{p.input})
        throw ShapeMismatch("gru_cell: input widths do not match parameters");
    Var hx = t.concat({h_prev, x});
    Var z = t.sigmoid_op(t.add(t.matmul(t.leaf(p.Wz), hx), t.leaf(p.bz)));
    Var r = t.sigmoid_op(t.add(t.matmul(t.leaf(p.Wr), hx), t.leaf(p.br)));
    Var rhx = t.concat({t.mul(r, h_prev), x});
    Var htilde = t.tanh_op(t.add(t.matmul(t.leaf(p.Wh), rhx), t.leaf(p.bh)));
    Var keep = t.mul(t.sub(t.constant(ones(p.hidden)), z), h_prev);
    return t.add(keep, t.mul(z, htilde));
}

}  // namespace dualdst
