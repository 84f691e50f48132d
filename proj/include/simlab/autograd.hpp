#pragma once

// Reverse-mode autodiff over a tape of op records. Nodes are appended in
// execution order, so every input id is smaller than its consumer and the
// reverse sweep is just the tape backwards. Gradients accumulate additively
// across fan-out. Leaves alias external Tensors (model parameters, inputs);
// their .grad buffers receive the results of backward().

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "simlab/common.hpp"
#include "simlab/rng.hpp"
#include "simlab/tensor.hpp"

namespace simlab {

class Tape {
public:
    using NodeId = int;

    // Leaf aliasing external storage. Gradients (if requested on the tensor)
    // are accumulated directly into t.grad.
    NodeId leaf(Tensor& t) {
        Node n;
        n.op = "leaf";
        n.ext = &t;
        n.needs_grad = t.requires_grad;
        return push(std::move(n));
    }

    // Owned constant with no gradient (masks, fixed weights).
    NodeId constant(Tensor t) {
        Node n;
        n.op = "const";
        n.owned = std::move(t);
        n.needs_grad = false;
        return push(std::move(n));
    }

    const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].t(); }
    std::size_t num_nodes() const { return nodes_.size(); }

    // ---- elementwise and broadcast ----

    NodeId add(NodeId a, NodeId b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        if (ta.shape != tb.shape)
            throw ContractError("add shape mismatch: " + ta.shape_str() + " vs " + tb.shape_str());
        Tensor out = ta;
        for (std::int64_t i = 0; i < out.size(); ++i) out.values[i] += tb.values[i];
        return make("add", {a, b}, std::move(out), [](Tape& tp, Node& n) {
            tp.accumulate(n.parents[0], n.grad());
            tp.accumulate(n.parents[1], n.grad());
        });
    }

    // x [m x d] + row vector b [d] broadcast over rows.
    NodeId add_rowvec(NodeId x, NodeId b) {
        const Tensor& tx = value(x);
        const Tensor& tb = value(b);
        std::int64_t m = tx.rows(), d = tx.cols();
        if (tb.size() != d)
            throw ContractError("add_rowvec width mismatch: " + tx.shape_str() + " vs " + tb.shape_str());
        Tensor out = tx;
        for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t j = 0; j < d; ++j) out.values[i * d + j] += tb.values[j];
        return make("add_rowvec", {x, b}, std::move(out), [m, d](Tape& tp, Node& n) {
            tp.accumulate(n.parents[0], n.grad());
            if (tp.needs_grad(n.parents[1])) {
                std::vector<double> gb(static_cast<std::size_t>(d), 0.0);
                const auto& g = n.grad();
                for (std::int64_t i = 0; i < m; ++i)
                    for (std::int64_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
                tp.accumulate(n.parents[1], gb);
            }
        });
    }

    NodeId mul(NodeId a, NodeId b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        if (ta.shape != tb.shape)
            throw ContractError("mul shape mismatch: " + ta.shape_str() + " vs " + tb.shape_str());
        Tensor out = ta;
        for (std::int64_t i = 0; i < out.size(); ++i) out.values[i] *= tb.values[i];
        return make("mul", {a, b}, std::move(out), [](Tape& tp, Node& n) {
            const auto& g = n.grad();
            const auto& va = tp.value(n.parents[0]).values;
            const auto& vb = tp.value(n.parents[1]).values;
            if (tp.needs_grad(n.parents[0])) {
                std::vector<double> ga(g.size());
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * vb[i];
                tp.accumulate(n.parents[0], ga);
            }
            if (tp.needs_grad(n.parents[1])) {
                std::vector<double> gb(g.size());
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * va[i];
                tp.accumulate(n.parents[1], gb);
            }
        });
    }

    NodeId scale(NodeId a, double c) {
        Tensor out = value(a);
        for (double& v : out.values) v *= c;
        return make("scale", {a}, std::move(out), [c](Tape& tp, Node& n) {
            std::vector<double> ga(n.grad());
            for (double& v : ga) v *= c;
            tp.accumulate(n.parents[0], ga);
        });
    }

    NodeId relu(NodeId a) {
        Tensor out = value(a);
        for (double& v : out.values) v = v > 0.0 ? v : 0.0;
        return make("relu", {a}, std::move(out), [](Tape& tp, Node& n) {
            const auto& g = n.grad();
            const auto& x = tp.value(n.parents[0]).values;
            std::vector<double> ga(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] = x[i] > 0.0 ? g[i] : 0.0;
            tp.accumulate(n.parents[0], ga);
        });
    }

    NodeId tanh_op(NodeId a) {
        Tensor out = value(a);
        for (double& v : out.values) v = std::tanh(v);
        return make("tanh", {a}, std::move(out), [](Tape& tp, Node& n) {
            const auto& g = n.grad();
            const auto& y = n.t().values;
            std::vector<double> ga(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * (1.0 - y[i] * y[i]);
            tp.accumulate(n.parents[0], ga);
        });
    }

    // ---- matrix ops ----

    NodeId matmul(NodeId a, NodeId b) {
        Tensor out = matmul_values(value(a), value(b));
        return make("matmul", {a, b}, std::move(out), [](Tape& tp, Node& n) {
            const Tensor& ta = tp.value(n.parents[0]);
            const Tensor& tb = tp.value(n.parents[1]);
            std::int64_t m = ta.shape[0], k = ta.shape[1], c = tb.shape[1];
            const auto& g = n.grad();
            if (tp.needs_grad(n.parents[0])) {
                // ga = g . b^T
                std::vector<double> ga(static_cast<std::size_t>(m * k), 0.0);
                for (std::int64_t i = 0; i < m; ++i)
                    for (std::int64_t j = 0; j < c; ++j) {
                        double gv = g[i * c + j];
                        if (gv == 0.0) continue;
                        for (std::int64_t p = 0; p < k; ++p)
                            ga[i * k + p] += gv * tb.values[p * c + j];
                    }
                tp.accumulate(n.parents[0], ga);
            }
            if (tp.needs_grad(n.parents[1])) {
                // gb = a^T . g
                std::vector<double> gb(static_cast<std::size_t>(k * c), 0.0);
                for (std::int64_t i = 0; i < m; ++i)
                    for (std::int64_t p = 0; p < k; ++p) {
                        double av = ta.values[i * k + p];
                        if (av == 0.0) continue;
                        for (std::int64_t j = 0; j < c; ++j)
                            gb[p * c + j] += av * g[i * c + j];
                    }
                tp.accumulate(n.parents[1], gb);
            }
        });
    }

    NodeId transpose(NodeId a) {
        const Tensor& ta = value(a);
        std::int64_t m = ta.rows(), c = ta.cols();
        Tensor out = Tensor::zeros({c, m});
        for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t j = 0; j < c; ++j) out.values[j * m + i] = ta.values[i * c + j];
        return make("transpose", {a}, std::move(out), [m, c](Tape& tp, Node& n) {
            const auto& g = n.grad();
            std::vector<double> ga(static_cast<std::size_t>(m * c));
            for (std::int64_t i = 0; i < m; ++i)
                for (std::int64_t j = 0; j < c; ++j) ga[i * c + j] = g[j * m + i];
            tp.accumulate(n.parents[0], ga);
        });
    }

    // ---- row-structured ops ----

    NodeId softmax_rows(NodeId a) {
        Tensor out = softmax_values(value(a));
        return make("softmax_rows", {a}, std::move(out), [](Tape& tp, Node& n) {
            const Tensor& y = n.t();
            std::int64_t m = y.rows(), c = y.cols();
            const auto& g = n.grad();
            std::vector<double> ga(g.size());
            for (std::int64_t i = 0; i < m; ++i) {
                double dot = 0.0;
                for (std::int64_t j = 0; j < c; ++j) dot += g[i * c + j] * y.values[i * c + j];
                for (std::int64_t j = 0; j < c; ++j)
                    ga[i * c + j] = y.values[i * c + j] * (g[i * c + j] - dot);
            }
            tp.accumulate(n.parents[0], ga);
        });
    }

    NodeId log_softmax_rows(NodeId a) {
        const Tensor& ta = value(a);
        std::int64_t m = ta.rows(), c = ta.cols();
        Tensor out = ta;
        for (std::int64_t i = 0; i < m; ++i) {
            double mx = ta.values[i * c];
            for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, ta.values[i * c + j]);
            double s = 0.0;
            for (std::int64_t j = 0; j < c; ++j) s += std::exp(ta.values[i * c + j] - mx);
            double lse = mx + std::log(s);
            for (std::int64_t j = 0; j < c; ++j) out.values[i * c + j] = ta.values[i * c + j] - lse;
        }
        return make("log_softmax_rows", {a}, std::move(out), [](Tape& tp, Node& n) {
            const Tensor& y = n.t();
            std::int64_t m = y.rows(), c = y.cols();
            const auto& g = n.grad();
            std::vector<double> ga(g.size());
            for (std::int64_t i = 0; i < m; ++i) {
                double gsum = 0.0;
                for (std::int64_t j = 0; j < c; ++j) gsum += g[i * c + j];
                for (std::int64_t j = 0; j < c; ++j)
                    ga[i * c + j] = g[i * c + j] - std::exp(y.values[i * c + j]) * gsum;
            }
            tp.accumulate(n.parents[0], ga);
        });
    }

    NodeId layer_norm(NodeId x, NodeId gain, NodeId bias, double eps) {
        const Tensor& tx = value(x);
        std::int64_t m = tx.rows(), d = tx.cols();
        if (d < 1 || eps <= 0.0) throw ContractError("layer_norm requires d >= 1 and eps > 0");
        if (value(gain).size() != d || value(bias).size() != d)
            throw ContractError("layer_norm gain/bias width mismatch");
        Tensor out = Tensor::zeros({m, d});
        // keep xhat and 1/std for the backward pass
        auto xhat = std::make_shared<std::vector<double>>(tx.values.size());
        auto istd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(m));
        const auto& gv = value(gain).values;
        const auto& bv = value(bias).values;
        for (std::int64_t i = 0; i < m; ++i) {
            double mean = 0.0;
            for (std::int64_t j = 0; j < d; ++j) mean += tx.values[i * d + j];
            mean /= static_cast<double>(d);
            double var = 0.0;
            for (std::int64_t j = 0; j < d; ++j) {
                double dv = tx.values[i * d + j] - mean;
                var += dv * dv;
            }
            var /= static_cast<double>(d);
            double is = 1.0 / std::sqrt(var + eps);
            (*istd)[static_cast<std::size_t>(i)] = is;
            for (std::int64_t j = 0; j < d; ++j) {
                double h = (tx.values[i * d + j] - mean) * is;
                (*xhat)[static_cast<std::size_t>(i * d + j)] = h;
                out.values[i * d + j] = gv[j] * h + bv[j];
            }
        }
        return make("layer_norm", {x, gain, bias}, std::move(out),
                    [m, d, xhat, istd](Tape& tp, Node& n) {
            const auto& g = n.grad();
            const auto& gv = tp.value(n.parents[1]).values;
            if (tp.needs_grad(n.parents[1])) {
                std::vector<double> gg(static_cast<std::size_t>(d), 0.0);
                for (std::int64_t i = 0; i < m; ++i)
                    for (std::int64_t j = 0; j < d; ++j)
                        gg[j] += g[i * d + j] * (*xhat)[static_cast<std::size_t>(i * d + j)];
                tp.accumulate(n.parents[1], gg);
            }
            if (tp.needs_grad(n.parents[2])) {
                std::vector<double> gb(static_cast<std::size_t>(d), 0.0);
                for (std::int64_t i = 0; i < m; ++i)
                    for (std::int64_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
                tp.accumulate(n.parents[2], gb);
            }
            if (tp.needs_grad(n.parents[0])) {
                std::vector<double> gx(g.size());
                for (std::int64_t i = 0; i < m; ++i) {
                    double mean_dh = 0.0, mean_dhh = 0.0;
                    for (std::int64_t j = 0; j < d; ++j) {
                        double dh = g[i * d + j] * gv[j];
                        mean_dh += dh;
                        mean_dhh += dh * (*xhat)[static_cast<std::size_t>(i * d + j)];
                    }
                    mean_dh /= static_cast<double>(d);
                    mean_dhh /= static_cast<double>(d);
                    double is = (*istd)[static_cast<std::size_t>(i)];
                    for (std::int64_t j = 0; j < d; ++j) {
                        double dh = g[i * d + j] * gv[j];
                        double h = (*xhat)[static_cast<std::size_t>(i * d + j)];
                        gx[i * d + j] = is * (dh - mean_dh - h * mean_dhh);
                    }
                }
                tp.accumulate(n.parents[0], gx);
            }
        });
    }

    // Inverted dropout: survivors scaled by 1/(1-rate) at train time, identity
    // in eval mode. The mask draw always advances the rng the same amount.
    NodeId dropout(NodeId x, double rate, RngState& rng, bool training) {
        if (rate < 0.0 || rate >= 1.0)
            throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(rate));
        if (!training || rate == 0.0) {
            // still no rng consumption in eval mode: eval is pure
            Tensor out = value(x);
            return make("dropout", {x}, std::move(out), [](Tape& tp, Node& n) {
                tp.accumulate(n.parents[0], n.grad());
            });
        }
        const Tensor& tx = value(x);
        double keep = 1.0 - rate;
        double inv = 1.0 / keep;
        auto mask = std::make_shared<std::vector<double>>(tx.values.size());
        Tensor out = tx;
        for (std::size_t i = 0; i < tx.values.size(); ++i) {
            double m = rng.next_uniform() >= rate ? inv : 0.0;
            (*mask)[i] = m;
            out.values[i] *= m;
        }
        return make("dropout", {x}, std::move(out), [mask](Tape& tp, Node& n) {
            const auto& g = n.grad();
            std::vector<double> ga(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * (*mask)[i];
            tp.accumulate(n.parents[0], ga);
        });
    }

    // out[i] = x[indices[i]]; backward scatter-adds, so repeated indices
    // accumulate (this is the embedding-lookup gradient).
    NodeId gather_rows(NodeId x, std::vector<std::int64_t> indices) {
        const Tensor& tx = value(x);
        std::int64_t d = tx.cols();
        std::int64_t m = static_cast<std::int64_t>(indices.size());
        Tensor out = Tensor::zeros({m, d});
        for (std::int64_t i = 0; i < m; ++i) {
            if (indices[i] < 0 || indices[i] >= tx.rows())
                throw ContractError("gather_rows index " + std::to_string(indices[i]) +
                                    " out of range for " + tx.shape_str());
            for (std::int64_t j = 0; j < d; ++j)
                out.values[i * d + j] = tx.values[indices[i] * d + j];
        }
        auto idx = std::make_shared<std::vector<std::int64_t>>(std::move(indices));
        return make("gather_rows", {x}, std::move(out), [idx, d](Tape& tp, Node& n) {
            const Tensor& tx = tp.value(n.parents[0]);
            std::vector<double> gx(tx.values.size(), 0.0);
            const auto& g = n.grad();
            for (std::size_t i = 0; i < idx->size(); ++i)
                for (std::int64_t j = 0; j < d; ++j)
                    gx[static_cast<std::size_t>((*idx)[i] * d + j)] += g[i * d + j];
            tp.accumulate(n.parents[0], gx);
        });
    }

    NodeId concat_rows(const std::vector<NodeId>& parts) {
        if (parts.empty()) throw ContractError("concat_rows of zero parts");
        std::int64_t d = value(parts[0]).cols();
        std::int64_t m = 0;
        for (NodeId p : parts) {
            if (value(p).cols() != d) throw ContractError("concat_rows width mismatch");
            m += value(p).rows();
        }
        Tensor out = Tensor::zeros({m, d});
        std::int64_t r = 0;
        auto offsets = std::make_shared<std::vector<std::int64_t>>();
        for (NodeId p : parts) {
            offsets->push_back(r);
            const Tensor& tp_ = value(p);
            std::copy(tp_.values.begin(), tp_.values.end(), out.values.begin() + r * d);
            r += tp_.rows();
        }
        return make("concat_rows", parts, std::move(out), [offsets, d](Tape& tp, Node& n) {
            const auto& g = n.grad();
            for (std::size_t k = 0; k < n.parents.size(); ++k) {
                if (!tp.needs_grad(n.parents[k])) continue;
                std::int64_t rows = tp.value(n.parents[k]).rows();
                std::int64_t off = (*offsets)[k];
                std::vector<double> gp(g.begin() + off * d, g.begin() + (off + rows) * d);
                tp.accumulate(n.parents[k], gp);
            }
        });
    }

    NodeId concat_cols(const std::vector<NodeId>& parts) {
        if (parts.empty()) throw ContractError("concat_cols of zero parts");
        std::int64_t m = value(parts[0]).rows();
        std::int64_t d = 0;
        for (NodeId p : parts) {
            if (value(p).rows() != m) throw ContractError("concat_cols height mismatch");
            d += value(p).cols();
        }
        Tensor out = Tensor::zeros({m, d});
        auto offsets = std::make_shared<std::vector<std::int64_t>>();
        std::int64_t c0 = 0;
        for (NodeId p : parts) {
            offsets->push_back(c0);
            const Tensor& tp_ = value(p);
            std::int64_t pc = tp_.cols();
            for (std::int64_t i = 0; i < m; ++i)
                for (std::int64_t j = 0; j < pc; ++j)
                    out.values[i * d + c0 + j] = tp_.values[i * pc + j];
            c0 += pc;
        }
        return make("concat_cols", parts, std::move(out), [offsets, m, d](Tape& tp, Node& n) {
            const auto& g = n.grad();
            for (std::size_t k = 0; k < n.parents.size(); ++k) {
                if (!tp.needs_grad(n.parents[k])) continue;
                std::int64_t pc = tp.value(n.parents[k]).cols();
                std::int64_t off = (*offsets)[k];
                std::vector<double> gp(static_cast<std::size_t>(m * pc));
                for (std::int64_t i = 0; i < m; ++i)
                    for (std::int64_t j = 0; j < pc; ++j)
                        gp[i * pc + j] = g[i * d + off + j];
                tp.accumulate(n.parents[k], gp);
            }
        });
    }

    // Row-wise L2 normalization; the differentiable half of cosine similarity.
    NodeId l2_normalize_rows(NodeId x) {
        const Tensor& tx = value(x);
        std::int64_t m = tx.rows(), d = tx.cols();
        Tensor out = Tensor::zeros({m, d});
        auto norms = std::make_shared<std::vector<double>>(static_cast<std::size_t>(m));
        for (std::int64_t i = 0; i < m; ++i) {
            double s = 0.0;
            for (std::int64_t j = 0; j < d; ++j) s += tx.values[i * d + j] * tx.values[i * d + j];
            double r = std::sqrt(s);
            if (r == 0.0)
                throw ContractError("l2_normalize_rows: zero-norm row " + std::to_string(i));
            (*norms)[static_cast<std::size_t>(i)] = r;
            for (std::int64_t j = 0; j < d; ++j) out.values[i * d + j] = tx.values[i * d + j] / r;
        }
        return make("l2_normalize_rows", {x}, std::move(out), [norms, m, d](Tape& tp, Node& n) {
            const Tensor& y = n.t();
            const auto& g = n.grad();
            std::vector<double> gx(g.size());
            for (std::int64_t i = 0; i < m; ++i) {
                double dot = 0.0;
                for (std::int64_t j = 0; j < d; ++j) dot += g[i * d + j] * y.values[i * d + j];
                double r = (*norms)[static_cast<std::size_t>(i)];
                for (std::int64_t j = 0; j < d; ++j)
                    gx[i * d + j] = (g[i * d + j] - dot * y.values[i * d + j]) / r;
            }
            tp.accumulate(n.parents[0], gx);
        });
    }

    NodeId sum(NodeId a) {
        double s = 0.0;
        for (double v : value(a).values) s += v;
        return make("sum", {a}, Tensor::from({1}, {s}), [](Tape& tp, Node& n) {
            double g = n.grad()[0];
            std::vector<double> ga(tp.value(n.parents[0]).values.size(), g);
            tp.accumulate(n.parents[0], ga);
        });
    }

    // ---- backward ----

    void backward(NodeId loss) {
        Node& ln = nodes_[static_cast<std::size_t>(loss)];
        if (ln.t().size() != 1)
            throw ContractError("backward: loss node must be scalar, got " + ln.t().shape_str());
        for (Node& n : nodes_)
            if (n.needs_grad) n.grad_buf.assign(n.t().values.size(), 0.0);
        if (!ln.needs_grad) return;  // nothing requires grad
        ln.grad_buf[0] = 1.0;
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            Node& n = nodes_[i];
            if (n.needs_grad && n.back) n.back(*this, n);
        }
        // flush leaf gradients into the external tensors
        for (Node& n : nodes_) {
            if (n.ext && n.needs_grad) {
                if (n.ext->grad.size() != n.ext->values.size())
                    n.ext->grad.assign(n.ext->values.size(), 0.0);
                for (std::size_t i = 0; i < n.grad_buf.size(); ++i)
                    n.ext->grad[i] += n.grad_buf[i];
            }
        }
    }

    const std::vector<double>& grad_of(NodeId id) const {
        return nodes_[static_cast<std::size_t>(id)].grad_buf;
    }

private:
    struct Node {
        std::string op;
        Tensor owned;
        Tensor* ext = nullptr;
        bool needs_grad = false;
        std::vector<NodeId> parents;
        std::vector<double> grad_buf;
        std::function<void(Tape&, Node&)> back;

        Tensor& t() { return ext ? *ext : owned; }
        const Tensor& t() const { return ext ? *ext : owned; }
        const std::vector<double>& grad() const { return grad_buf; }
    };

    static Tensor softmax_values(const Tensor& x) {
        std::int64_t m = x.rows(), c = x.cols();
        Tensor out = x;
        for (std::int64_t i = 0; i < m; ++i) {
            double mx = x.values[i * c];
            for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, x.values[i * c + j]);
            double s = 0.0;
            for (std::int64_t j = 0; j < c; ++j) {
                double e = std::exp(x.values[i * c + j] - mx);
                out.values[i * c + j] = e;
                s += e;
            }
            for (std::int64_t j = 0; j < c; ++j) out.values[i * c + j] /= s;
        }
        return out;
    }

    bool needs_grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

    void accumulate(NodeId id, const std::vector<double>& g) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.needs_grad) return;
        for (std::size_t i = 0; i < g.size(); ++i) n.grad_buf[i] += g[i];
    }

    NodeId make(std::string op, std::vector<NodeId> parents, Tensor out,
                std::function<void(Tape&, Node&)> back) {
        Node n;
        n.op = std::move(op);
        n.owned = std::move(out);
        n.owned.grad.clear();
        n.owned.requires_grad = false;
        n.parents = std::move(parents);
        for (NodeId p : n.parents)
            if (nodes_[static_cast<std::size_t>(p)].needs_grad) n.needs_grad = true;
        if (n.needs_grad) n.back = std::move(back);
        return push(std::move(n));
    }

    NodeId push(Node n) {
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    std::vector<Node> nodes_;
};

// Max relative error between analytic gradients and central finite
// differences, over all elements of x. f must build a scalar from (tape, x).
inline double grad_check(const std::function<Tape::NodeId(Tape&, Tensor&)>& f,
                         Tensor x, double h = 1e-5) {
    if (h <= 0.0) throw ContractError("grad_check: h must be positive");
    x.set_requires_grad(true);
    Tape tape;
    Tape::NodeId loss = f(tape, x);
    if (tape.value(loss).size() != 1) throw ContractError("grad_check: f must produce a scalar");
    tape.backward(loss);
    std::vector<double> analytic = x.grad;

    double worst = 0.0;
    Tensor probe = x;
    probe.set_requires_grad(false);
    for (std::size_t i = 0; i < probe.values.size(); ++i) {
        double saved = probe.values[i];
        probe.values[i] = saved + h;
        Tape tp;
        double fp = tp.value(f(tp, probe)).values[0];
        probe.values[i] = saved - h;
        Tape tm;
        double fm = tm.value(f(tm, probe)).values[0];
        probe.values[i] = saved;
        double numeric = (fp - fm) / (2.0 * h);
        double rel = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace simlab
