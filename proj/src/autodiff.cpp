#include "filtlearn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace filtlearn::ad {

namespace {
constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;
} // namespace

Param& ParameterStore::add(const std::string& name, std::vector<std::size_t> shape,
                           std::vector<double> init) {
    std::size_t count = 1;
    for (auto s : shape) count *= s;
    if (count != init.size())
        throw std::invalid_argument("ParameterStore::add: shape/value mismatch for " + name);
    auto [it, fresh] = params_.try_emplace(name);
    if (!fresh) throw std::invalid_argument("ParameterStore::add: duplicate param " + name);
    Param& p = it->second;
    p.shape = std::move(shape);
    p.value = std::move(init);
    p.grad.assign(count, 0.0);
    p.m.assign(count, 0.0);
    p.v.assign(count, 0.0);
    return p;
}

Param& ParameterStore::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end())
        throw std::invalid_argument("ParameterStore: unknown param " + name);
    return it->second;
}

const Param& ParameterStore::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end())
        throw std::invalid_argument("ParameterStore: unknown param " + name);
    return it->second;
}

void ParameterStore::zero_grad() {
    for (auto& [name, p] : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

std::size_t ParameterStore::total_scalars() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) n += p.count();
    return n;
}

NodeId Tape::push(std::size_t rows, std::size_t cols, std::vector<double> v,
                  std::function<void(Tape&)> back) {
    if (v.size() != rows * cols)
        throw std::invalid_argument("Tape: node value size does not match shape");
    Node n;
    n.rows = rows;
    n.cols = cols;
    n.val = std::move(v);
    n.grad.assign(rows * cols, 0.0);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::input(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return push(rows, cols, std::move(v), nullptr);
}

NodeId Tape::custom(std::size_t rows, std::size_t cols, std::vector<double> v,
                    std::function<void(Tape&)> back) {
    return push(rows, cols, std::move(v), std::move(back));
}

NodeId Tape::affine(ParameterStore& ps, const std::string& w_name,
                    const std::string& b_name, NodeId x) {
    Param& W = ps.at(w_name);
    Param& b = ps.at(b_name);
    if (W.shape.size() != 2 || b.shape.size() != 1 || W.shape[0] != b.shape[0])
        throw std::invalid_argument("affine: bad parameter shapes");
    const std::size_t out = W.shape[0], in = W.shape[1];
    const std::size_t r = rows(x);
    if (cols(x) != in) throw std::invalid_argument("affine: input width mismatch");

    const auto& xv = value(x);
    std::vector<double> y(r * out);
    for (std::size_t i = 0; i < r; ++i) {
        const double* xi = xv.data() + i * in;
        double* yi = y.data() + i * out;
        for (std::size_t j = 0; j < out; ++j) {
            const double* wj = W.value.data() + j * in;
            double acc = b.value[j];
            for (std::size_t k = 0; k < in; ++k) acc += wj[k] * xi[k];
            yi[j] = acc;
        }
    }
    NodeId id = push(r, out, std::move(y), nullptr);
    nodes_[id].back = [id, x, &W, &b, r, in, out](Tape& t) {
        const auto& g = t.nodes_[id].grad;
        const auto& xv2 = t.nodes_[x].val;
        auto& gx = t.nodes_[x].grad;
        for (std::size_t i = 0; i < r; ++i) {
            const double* gi = g.data() + i * out;
            const double* xi = xv2.data() + i * in;
            double* gxi = gx.data() + i * in;
            for (std::size_t j = 0; j < out; ++j) {
                const double gj = gi[j];
                if (gj == 0.0) continue;
                const double* wj = W.value.data() + j * in;
                double* dwj = W.grad.data() + j * in;
                for (std::size_t k = 0; k < in; ++k) {
                    gxi[k] += gj * wj[k];
                    dwj[k] += gj * xi[k];
                }
                b.grad[j] += gj;
            }
        }
    };
    return id;
}

NodeId Tape::relu(NodeId x) {
    const auto& xv = value(x);
    std::vector<double> y(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    NodeId id = push(rows(x), cols(x), std::move(y), nullptr);
    nodes_[id].back = [id, x](Tape& t) {
        const auto& g = t.nodes_[id].grad;
        const auto& xv2 = t.nodes_[x].val;
        auto& gx = t.nodes_[x].grad;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (xv2[i] > 0.0) gx[i] += g[i];
    };
    return id;
}

NodeId Tape::add(NodeId a, NodeId b) {
    if (rows(a) != rows(b) || cols(a) != cols(b))
        throw std::invalid_argument("add: shape mismatch");
    const auto& av = value(a);
    const auto& bv = value(b);
    std::vector<double> y(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) y[i] = av[i] + bv[i];
    NodeId id = push(rows(a), cols(a), std::move(y), nullptr);
    nodes_[id].back = [id, a, b](Tape& t) {
        const auto& g = t.nodes_[id].grad;
        auto& ga = t.nodes_[a].grad;
        auto& gb = t.nodes_[b].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] += g[i];
        }
    };
    return id;
}

NodeId Tape::scale(NodeId x, double s) {
    const auto& xv = value(x);
    std::vector<double> y(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) y[i] = s * xv[i];
    NodeId id = push(rows(x), cols(x), std::move(y), nullptr);
    nodes_[id].back = [id, x, s](Tape& t) {
        const auto& g = t.nodes_[id].grad;
        auto& gx = t.nodes_[x].grad;
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += s * g[i];
    };
    return id;
}

NodeId Tape::batch_norm(ParameterStore& ps, const std::string& prefix, NodeId x,
                        RunMode mode, bool update_running) {
    Param& gamma = ps.at(prefix + ".gamma");
    Param& beta = ps.at(prefix + ".beta");
    Param& run_mean = ps.at(prefix + ".run_mean");
    Param& run_var = ps.at(prefix + ".run_var");
    const std::size_t r = rows(x), c = cols(x);
    if (gamma.count() != c)
        throw std::invalid_argument("batch_norm: width mismatch");
    const auto& xv = value(x);
    std::vector<double> y(r * c);

    if (mode == RunMode::eval) {
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) {
                double inv = 1.0 / std::sqrt(run_var.value[j] + kBnEps);
                y[i * c + j] =
                    gamma.value[j] * (xv[i * c + j] - run_mean.value[j]) * inv +
                    beta.value[j];
            }
        NodeId id = push(r, c, std::move(y), nullptr);
        nodes_[id].back = [id, x, &gamma, &beta, &run_mean, &run_var, r, c](Tape& t) {
            const auto& g = t.nodes_[id].grad;
            const auto& xv2 = t.nodes_[x].val;
            auto& gx = t.nodes_[x].grad;
            for (std::size_t j = 0; j < c; ++j) {
                double inv = 1.0 / std::sqrt(run_var.value[j] + kBnEps);
                for (std::size_t i = 0; i < r; ++i) {
                    double xh = (xv2[i * c + j] - run_mean.value[j]) * inv;
                    gx[i * c + j] += g[i * c + j] * gamma.value[j] * inv;
                    gamma.grad[j] += g[i * c + j] * xh;
                    beta.grad[j] += g[i * c + j];
                }
            }
        };
        return id;
    }

    auto mean = std::make_shared<std::vector<double>>(c, 0.0);
    auto var = std::make_shared<std::vector<double>>(c, 0.0);
    auto xhat = std::make_shared<std::vector<double>>(r * c);
    std::vector<double> buf(r);
    for (std::size_t j = 0; j < c; ++j) {
        // Sorted accumulation, like the pooling ops: the statistics (and so
        // the whole forward pass) stay bit-identical under row permutations.
        for (std::size_t i = 0; i < r; ++i) buf[i] = xv[i * c + j];
        std::sort(buf.begin(), buf.end());
        double mu = 0.0;
        for (double v : buf) mu += v;
        mu /= static_cast<double>(r);
        for (std::size_t i = 0; i < r; ++i) buf[i] = (xv[i * c + j] - mu) * (xv[i * c + j] - mu);
        std::sort(buf.begin(), buf.end());
        double s2 = 0.0;
        for (double v : buf) s2 += v;
        s2 /= static_cast<double>(r);
        (*mean)[j] = mu;
        (*var)[j] = s2;
        double inv = 1.0 / std::sqrt(s2 + kBnEps);
        for (std::size_t i = 0; i < r; ++i) {
            double xh = (xv[i * c + j] - mu) * inv;
            (*xhat)[i * c + j] = xh;
            y[i * c + j] = gamma.value[j] * xh + beta.value[j];
        }
        if (update_running) {
            double unbiased = r > 1 ? s2 * static_cast<double>(r) /
                                          static_cast<double>(r - 1)
                                    : s2;
            run_mean.value[j] = (1.0 - kBnMomentum) * run_mean.value[j] + kBnMomentum * mu;
            run_var.value[j] = (1.0 - kBnMomentum) * run_var.value[j] + kBnMomentum * unbiased;
        }
    }
    NodeId id = push(r, c, std::move(y), nullptr);
    nodes_[id].back = [id, x, &gamma, &beta, var, xhat, r, c](Tape& t) {
        const auto& g = t.nodes_[id].grad;
        auto& gx = t.nodes_[x].grad;
        const double rn = static_cast<double>(r);
        for (std::size_t j = 0; j < c; ++j) {
            double inv = 1.0 / std::sqrt((*var)[j] + kBnEps);
            double sum_g = 0.0, sum_gx = 0.0;
            for (std::size_t i = 0; i < r; ++i) {
                sum_g += g[i * c + j];
                sum_gx += g[i * c + j] * (*xhat)[i * c + j];
            }
            gamma.grad[j] += sum_gx;
            beta.grad[j] += sum_g;
            for (std::size_t i = 0; i < r; ++i) {
                double xh = (*xhat)[i * c + j];
                gx[i * c + j] += gamma.value[j] * inv *
                                 (g[i * c + j] - sum_g / rn - xh * sum_gx / rn);
            }
        }
    };
    return id;
}

NodeId Tape::dropout(NodeId x, double p, SplitMix64& rng, RunMode mode) {
    if (!(p >= 0.0 && p < 1.0))
        throw std::invalid_argument("dropout: p must be in [0, 1)");
    if (mode == RunMode::eval || p == 0.0) return scale(x, 1.0);
    const auto& xv = value(x);
    auto mask = std::make_shared<std::vector<double>>(xv.size());
    const double keep = 1.0 / (1.0 - p);
    std::vector<double> y(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        (*mask)[i] = rng.uniform01() < p ? 0.0 : keep;
        y[i] = xv[i] * (*mask)[i];
    }
    NodeId id = push(rows(x), cols(x), std::move(y), nullptr);
    nodes_[id].back = [id, x, mask](Tape& t) {
        const auto& g = t.nodes_[id].grad;
        auto& gx = t.nodes_[x].grad;
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[i];
    };
    return id;
}

NodeId Tape::segment_sum_pool(NodeId x, std::size_t segment_len) {
    const std::size_t r = rows(x), c = cols(x);
    if (segment_len == 0 || r % segment_len != 0)
        throw std::invalid_argument("segment_sum_pool: rows not divisible by segment");
    const std::size_t s = r / segment_len;
    const auto& xv = value(x);
    std::vector<double> y(s * c, 0.0);
    std::vector<double> buf(segment_len);
    for (std::size_t seg = 0; seg < s; ++seg) {
        for (std::size_t j = 0; j < c; ++j) {
            for (std::size_t k = 0; k < segment_len; ++k)
                buf[k] = xv[(seg * segment_len + k) * c + j];
            std::sort(buf.begin(), buf.end());
            double acc = 0.0;
            for (double v : buf) acc += v;
            y[seg * c + j] = acc;
        }
    }
    NodeId id = push(s, c, std::move(y), nullptr);
    nodes_[id].back = [id, x, segment_len, s, c](Tape& t) {
        const auto& g = t.nodes_[id].grad;
        auto& gx = t.nodes_[x].grad;
        for (std::size_t seg = 0; seg < s; ++seg)
            for (std::size_t k = 0; k < segment_len; ++k)
                for (std::size_t j = 0; j < c; ++j)
                    gx[(seg * segment_len + k) * c + j] += g[seg * c + j];
    };
    return id;
}

NodeId Tape::concat_cols(NodeId a, NodeId b) {
    if (rows(a) != rows(b))
        throw std::invalid_argument("concat_cols: row count mismatch");
    const std::size_t r = rows(a), ca = cols(a), cb = cols(b);
    const auto& av = value(a);
    const auto& bv = value(b);
    std::vector<double> y(r * (ca + cb));
    for (std::size_t i = 0; i < r; ++i) {
        std::copy(av.begin() + i * ca, av.begin() + (i + 1) * ca,
                  y.begin() + i * (ca + cb));
        std::copy(bv.begin() + i * cb, bv.begin() + (i + 1) * cb,
                  y.begin() + i * (ca + cb) + ca);
    }
    NodeId id = push(r, ca + cb, std::move(y), nullptr);
    nodes_[id].back = [id, a, b, r, ca, cb](Tape& t) {
        const auto& g = t.nodes_[id].grad;
        auto& ga = t.nodes_[a].grad;
        auto& gb = t.nodes_[b].grad;
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < ca; ++j) ga[i * ca + j] += g[i * (ca + cb) + j];
            for (std::size_t j = 0; j < cb; ++j)
                gb[i * cb + j] += g[i * (ca + cb) + ca + j];
        }
    };
    return id;
}

NodeId Tape::broadcast_rows(NodeId x, std::size_t r) {
    if (rows(x) != 1) throw std::invalid_argument("broadcast_rows: input must have 1 row");
    const std::size_t c = cols(x);
    const auto& xv = value(x);
    std::vector<double> y(r * c);
    for (std::size_t i = 0; i < r; ++i)
        std::copy(xv.begin(), xv.end(), y.begin() + i * c);
    NodeId id = push(r, c, std::move(y), nullptr);
    nodes_[id].back = [id, x, r, c](Tape& t) {
        const auto& g = t.nodes_[id].grad;
        auto& gx = t.nodes_[x].grad;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gx[j] += g[i * c + j];
    };
    return id;
}

NodeId Tape::cross_entropy(NodeId logits, int label) {
    if (rows(logits) != 1)
        throw std::invalid_argument("cross_entropy: logits must be a single row");
    const std::size_t k = cols(logits);
    if (label < 0 || static_cast<std::size_t>(label) >= k)
        throw std::invalid_argument("cross_entropy: label out of range");
    const auto& z = value(logits);
    double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - zmax);
    double lse = std::log(sum) + zmax;
    double loss = lse - z[label];
    NodeId id = push(1, 1, {loss}, nullptr);
    nodes_[id].back = [id, logits, label, zmax, sum, k](Tape& t) {
        const double g = t.nodes_[id].grad[0];
        const auto& z2 = t.nodes_[logits].val;
        auto& gz = t.nodes_[logits].grad;
        for (std::size_t j = 0; j < k; ++j) {
            double p = std::exp(z2[j] - zmax) / sum;
            gz[j] += g * (p - (static_cast<int>(j) == label ? 1.0 : 0.0));
        }
    };
    return id;
}

NodeId Tape::mse_against(NodeId pred, std::vector<double> target) {
    const auto& pv = value(pred);
    if (pv.size() != target.size())
        throw std::invalid_argument("mse_against: target size mismatch");
    const double n = static_cast<double>(pv.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        double d = pv[i] - target[i];
        loss += d * d;
    }
    loss /= n;
    auto tgt = std::make_shared<std::vector<double>>(std::move(target));
    NodeId id = push(1, 1, {loss}, nullptr);
    nodes_[id].back = [id, pred, tgt, n](Tape& t) {
        const double g = t.nodes_[id].grad[0];
        const auto& pv2 = t.nodes_[pred].val;
        auto& gp = t.nodes_[pred].grad;
        for (std::size_t i = 0; i < pv2.size(); ++i)
            gp[i] += g * 2.0 * (pv2[i] - (*tgt)[i]) / n;
    };
    return id;
}

NodeId Tape::gaussian_kernel_sum(ParameterStore& ps, const std::string& centers,
                                 NodeId points) {
    Param& c = ps.at(centers);
    if (c.shape.size() != 2 || c.shape[1] != 2)
        throw std::invalid_argument("gaussian_kernel_sum: centers must be [M x 2]");
    if (cols(points) != 2)
        throw std::invalid_argument("gaussian_kernel_sum: points must be [P x 2]");
    const std::size_t m = c.shape[0];
    const std::size_t p = rows(points);
    const auto& q = value(points);

    auto kernel = std::make_shared<std::vector<double>>(p * m);
    std::vector<double> y(m, 0.0);
    std::vector<double> buf(p);
    for (std::size_t j = 0; j < m; ++j) {
        const double cx = c.value[2 * j], cy = c.value[2 * j + 1];
        for (std::size_t i = 0; i < p; ++i) {
            double db = q[2 * i] - cx, dd = q[2 * i + 1] - cy;
            double e = std::exp(-0.5 * (db * db + dd * dd));
            (*kernel)[i * m + j] = e;
            buf[i] = e;
        }
        std::sort(buf.begin(), buf.begin() + p);
        double acc = 0.0;
        for (std::size_t i = 0; i < p; ++i) acc += buf[i];
        y[j] = acc;
    }
    NodeId id = push(1, m, std::move(y), nullptr);
    nodes_[id].back = [id, points, &c, kernel, m, p](Tape& t) {
        const auto& g = t.nodes_[id].grad;
        const auto& q2 = t.nodes_[points].val;
        auto& gq = t.nodes_[points].grad;
        for (std::size_t j = 0; j < m; ++j) {
            const double gj = g[j];
            if (gj == 0.0) continue;
            const double cx = c.value[2 * j], cy = c.value[2 * j + 1];
            for (std::size_t i = 0; i < p; ++i) {
                double w = gj * (*kernel)[i * m + j];
                gq[2 * i] += w * (cx - q2[2 * i]);
                gq[2 * i + 1] += w * (cy - q2[2 * i + 1]);
                c.grad[2 * j] += w * (q2[2 * i] - cx);
                c.grad[2 * j + 1] += w * (q2[2 * i + 1] - cy);
            }
        }
    };
    return id;
}

void Tape::backward(NodeId root) {
    if (nodes_[root].val.size() != 1)
        throw std::invalid_argument("backward: root must be scalar");
    double one = 1.0;
    backward(root, std::span<const double>(&one, 1));
}

void Tape::backward(NodeId root, std::span<const double> seed) {
    auto& g = nodes_[root].grad;
    if (seed.size() != g.size())
        throw std::invalid_argument("backward: seed shape mismatch");
    // Non-leaf grads are scratch consumed by the replay: reset them so a
    // repeated backward propagates only its own seed. Leaf grads (inputs,
    // no closure) keep accumulating across calls.
    for (NodeId id = root; id >= 0; --id)
        if (nodes_[id].back)
            std::fill(nodes_[id].grad.begin(), nodes_[id].grad.end(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
    for (NodeId id = root; id >= 0; --id)
        if (nodes_[id].back) nodes_[id].back(*this);
}

void Tape::clear() { nodes_.clear(); }

namespace {
std::string layer_name(const std::string& prefix, std::size_t l, const char* part) {
    return prefix + ".l" + std::to_string(l) + "." + part;
}
} // namespace

void init_mlp_params(ParameterStore& ps, const std::string& prefix,
                     const MlpSpec& spec, SplitMix64& rng, double final_sigma) {
    if (spec.dims.size() < 2)
        throw std::invalid_argument("init_mlp_params: need at least one layer");
    for (std::size_t l = 0; l < spec.n_layers(); ++l) {
        const std::size_t in = spec.dims[l], out = spec.dims[l + 1];
        std::vector<double> w(out * in);
        const bool last = (l + 1 == spec.n_layers());
        if (last && final_sigma >= 0.0) {
            for (auto& v : w) v = final_sigma * rng.normal();
        } else {
            double limit = std::sqrt(6.0 / static_cast<double>(in));
            for (auto& v : w) v = rng.uniform(-limit, limit);
        }
        ps.add(layer_name(prefix, l, "W"), {out, in}, std::move(w));
        ps.add(layer_name(prefix, l, "b"), {out}, std::vector<double>(out, 0.0));
        if (spec.use_batch_norm && !last) {
            ps.add(layer_name(prefix, l, "bn.gamma"), {out},
                   std::vector<double>(out, 1.0));
            ps.add(layer_name(prefix, l, "bn.beta"), {out},
                   std::vector<double>(out, 0.0));
            auto& rm = ps.add(layer_name(prefix, l, "bn.run_mean"), {out},
                              std::vector<double>(out, 0.0));
            rm.trainable = false;
            auto& rv = ps.add(layer_name(prefix, l, "bn.run_var"), {out},
                              std::vector<double>(out, 1.0));
            rv.trainable = false;
        }
    }
}

NodeId mlp_forward(Tape& t, ParameterStore& ps, const std::string& prefix,
                   const MlpSpec& spec, NodeId x, RunMode mode,
                   SplitMix64* dropout_rng, bool update_running) {
    NodeId h = x;
    for (std::size_t l = 0; l < spec.n_layers(); ++l) {
        h = t.affine(ps, layer_name(prefix, l, "W"), layer_name(prefix, l, "b"), h);
        const bool last = (l + 1 == spec.n_layers());
        if (last) break;
        if (spec.use_batch_norm)
            h = t.batch_norm(ps, layer_name(prefix, l, "bn"), h, mode, update_running);
        h = t.relu(h);
        if (std::find(spec.dropout_layers.begin(), spec.dropout_layers.end(), l) !=
            spec.dropout_layers.end()) {
            if (!dropout_rng)
                throw std::invalid_argument("mlp_forward: dropout requires an rng");
            h = t.dropout(h, spec.dropout_p, *dropout_rng, mode);
        }
    }
    return h;
}

} // namespace filtlearn::ad
