#include "dflow/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace dflow {

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
    return emplace(std::move(value), {}, nullptr);
}

Var Tape::param(Parameter& p) {
    for (const auto& [ptr, id] : param_nodes_) {
        if (ptr == &p) return Var(this, id);
    }
    Var v = emplace(p.value(), {}, nullptr);
    nodes_[v.id()].param = &p;
    param_nodes_.emplace_back(&p, v.id());
    return v;
}

Var Tape::emplace(Tensor value, std::vector<std::size_t> parents, BackwardFn bw) {
    Node node;
    node.value = std::move(value);
    node.parents = std::move(parents);
    node.backward = std::move(bw);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
    if (loss.value().size() != 1) {
        throw NonScalarLoss("backward: loss has " + std::to_string(loss.value().size()) +
                            " elements, expected 1");
    }
    for (auto& node : nodes_) {
        node.grad = Tensor::zeros(node.value.shape);
    }
    nodes_[loss.id()].grad.data[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        if (nodes_[i].backward) nodes_[i].backward(*this, i);
    }
    for (auto& node : nodes_) {
        if (node.param) {
            auto& acc = node.param->grad().data;
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += node.grad.data[i];
        }
    }
}

namespace {

void check_same_tape(Var a, Var b, const char* what) {
    if (&a.tape() != &b.tape()) {
        throw Error(std::string(what) + ": operands live on different tapes");
    }
}

std::size_t rows_of(const Tensor& t) { return t.size() / t.last_dim(); }

void softmax_row(std::span<const double> in, std::span<double> out) {
    double mx = in[0];
    for (double v : in) mx = std::max(mx, v);
    double sum = 0.0;
    for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = std::exp(in[i] - mx);
        sum += out[i];
    }
    for (std::size_t i = 0; i < in.size(); ++i) out[i] /= sum;
}

} // namespace

Var add(Var a, Var b) {
    check_same_tape(a, b, "add");
    check_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
    return a.tape().emplace(std::move(out), {a.id(), b.id()}, [](Tape& t, std::size_t id) {
        const Tensor& g = t.grad(id);
        auto ps = t.parents(id);
        for (std::size_t i = 0; i < g.size(); ++i) {
            t.grad(ps[0]).data[i] += g.data[i];
            t.grad(ps[1]).data[i] += g.data[i];
        }
    });
}

Var sub(Var a, Var b) {
    check_same_tape(a, b, "sub");
    check_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= bv.data[i];
    return a.tape().emplace(std::move(out), {a.id(), b.id()}, [](Tape& t, std::size_t id) {
        const Tensor& g = t.grad(id);
        auto ps = t.parents(id);
        for (std::size_t i = 0; i < g.size(); ++i) {
            t.grad(ps[0]).data[i] += g.data[i];
            t.grad(ps[1]).data[i] -= g.data[i];
        }
    });
}

Var mul(Var a, Var b) {
    check_same_tape(a, b, "mul");
    check_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= bv.data[i];
    return a.tape().emplace(std::move(out), {a.id(), b.id()}, [](Tape& t, std::size_t id) {
        const Tensor& g = t.grad(id);
        auto ps = t.parents(id);
        const Tensor& av = t.value(ps[0]);
        const Tensor& bv2 = t.value(ps[1]);
        for (std::size_t i = 0; i < g.size(); ++i) {
            t.grad(ps[0]).data[i] += g.data[i] * bv2.data[i];
            t.grad(ps[1]).data[i] += g.data[i] * av.data[i];
        }
    });
}

Var scale(Var a, double c) {
    Tensor out = a.value();
    for (double& v : out.data) v *= c;
    return a.tape().emplace(std::move(out), {a.id()}, [c](Tape& t, std::size_t id) {
        const Tensor& g = t.grad(id);
        auto ps = t.parents(id);
        for (std::size_t i = 0; i < g.size(); ++i) t.grad(ps[0]).data[i] += c * g.data[i];
    });
}

Var neg(Var a) { return scale(a, -1.0); }

Var add_rowwise(Var a, Var bias) {
    check_same_tape(a, bias, "add_rowwise");
    const std::size_t n = a.value().last_dim();
    if (bias.value().size() != n) {
        throw ShapeMismatch("add_rowwise: bias length " + std::to_string(bias.value().size()) +
                            " != last axis " + std::to_string(n));
    }
    Tensor out = a.value();
    const Tensor& bv = bias.value();
    const std::size_t rows = rows_of(out);
    for (std::size_t r = 0; r < rows; ++r) {
        auto row = out.row(r);
        for (std::size_t i = 0; i < n; ++i) row[i] += bv.data[i];
    }
    return a.tape().emplace(std::move(out), {a.id(), bias.id()}, [n](Tape& t, std::size_t id) {
        const Tensor& g = t.grad(id);
        auto ps = t.parents(id);
        Tensor& ga = t.grad(ps[0]);
        Tensor& gb = t.grad(ps[1]);
        const std::size_t rows = g.size() / n;
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t i = 0; i < n; ++i) {
                ga.data[r * n + i] += g.data[r * n + i];
                gb.data[i] += g.data[r * n + i];
            }
        }
    });
}

Var matmul(Var a, Var b) {
    check_same_tape(a, b, "matmul");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.shape[1] != bv.shape[0]) {
        throw ShapeMismatch("matmul: " + av.shape_str() + " x " + bv.shape_str());
    }
    const std::size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av.data[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = bv.data.data() + p * n;
            double* orow = out.data.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    return a.tape().emplace(std::move(out), {a.id(), b.id()}, [m, k, n](Tape& t, std::size_t id) {
        const Tensor& g = t.grad(id);
        auto ps = t.parents(id);
        const Tensor& av2 = t.value(ps[0]);
        const Tensor& bv2 = t.value(ps[1]);
        Tensor& ga = t.grad(ps[0]);
        Tensor& gb = t.grad(ps[1]);
        // ga = g * b^T
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const double gij = g.data[i * n + j];
                if (gij == 0.0) continue;
                const double* brow = bv2.data.data() + j; // column j, stride n
                double* garow = ga.data.data() + i * k;
                for (std::size_t p = 0; p < k; ++p) garow[p] += gij * brow[p * n];
            }
        }
        // gb = a^T * g
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                const double aip = av2.data[i * k + p];
                if (aip == 0.0) continue;
                const double* grow = g.data.data() + i * n;
                double* gbrow = gb.data.data() + p * n;
                for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
            }
        }
    });
}

Var tanh(Var a) {
    Tensor out = a.value();
    for (double& v : out.data) v = std::tanh(v);
    return a.tape().emplace(std::move(out), {a.id()}, [](Tape& t, std::size_t id) {
        const Tensor& g = t.grad(id);
        const Tensor& y = t.value(id);
        auto ps = t.parents(id);
        for (std::size_t i = 0; i < g.size(); ++i) {
            t.grad(ps[0]).data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
        }
    });
}

Var softmax(Var a) {
    const Tensor& av = a.value();
    Tensor out = Tensor::zeros(av.shape);
    const std::size_t rows = rows_of(av);
    for (std::size_t r = 0; r < rows; ++r) softmax_row(av.row(r), out.row(r));
    return a.tape().emplace(std::move(out), {a.id()}, [](Tape& t, std::size_t id) {
        const Tensor& g = t.grad(id);
        const Tensor& s = t.value(id);
        auto ps = t.parents(id);
        Tensor& ga = t.grad(ps[0]);
        const std::size_t k = s.last_dim();
        const std::size_t rows = s.size() / k;
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t i = 0; i < k; ++i) dot += g.data[r * k + i] * s.data[r * k + i];
            for (std::size_t i = 0; i < k; ++i) {
                ga.data[r * k + i] += s.data[r * k + i] * (g.data[r * k + i] - dot);
            }
        }
    });
}

Var log_softmax(Var a) {
    const Tensor& av = a.value();
    Tensor out = Tensor::zeros(av.shape);
    const std::size_t k = av.last_dim();
    const std::size_t rows = rows_of(av);
    for (std::size_t r = 0; r < rows; ++r) {
        auto in = av.row(r);
        auto o = out.row(r);
        double mx = in[0];
        for (double v : in) mx = std::max(mx, v);
        double sum = 0.0;
        for (std::size_t i = 0; i < k; ++i) sum += std::exp(in[i] - mx);
        const double lse = mx + std::log(sum);
        for (std::size_t i = 0; i < k; ++i) o[i] = in[i] - lse;
    }
    return a.tape().emplace(std::move(out), {a.id()}, [](Tape& t, std::size_t id) {
        const Tensor& g = t.grad(id);
        const Tensor& y = t.value(id);
        auto ps = t.parents(id);
        Tensor& ga = t.grad(ps[0]);
        const std::size_t k = y.last_dim();
        const std::size_t rows = y.size() / k;
        for (std::size_t r = 0; r < rows; ++r) {
            double gsum = 0.0;
            for (std::size_t i = 0; i < k; ++i) gsum += g.data[r * k + i];
            for (std::size_t i = 0; i < k; ++i) {
                ga.data[r * k + i] += g.data[r * k + i] - std::exp(y.data[r * k + i]) * gsum;
            }
        }
    });
}

Var reduce_sum(Var a) {
    double sum = 0.0;
    for (double v : a.value().data) sum += v;
    return a.tape().emplace(Tensor::scalar(sum), {a.id()}, [](Tape& t, std::size_t id) {
        const double g = t.grad(id).data[0];
        auto ps = t.parents(id);
        for (double& v : t.grad(ps[0]).data) v += g;
    });
}

Var mean_all(Var a) {
    const std::size_t n = a.value().size();
    double sum = 0.0;
    for (double v : a.value().data) sum += v;
    return a.tape().emplace(Tensor::scalar(sum / static_cast<double>(n)), {a.id()},
                            [n](Tape& t, std::size_t id) {
        const double g = t.grad(id).data[0] / static_cast<double>(n);
        auto ps = t.parents(id);
        for (double& v : t.grad(ps[0]).data) v += g;
    });
}

Var sum_per_batch(Var a) {
    const Tensor& av = a.value();
    if (av.rank() < 1) throw ShapeMismatch("sum_per_batch: scalar input");
    const std::size_t B = av.shape[0];
    const std::size_t per = av.size() / B;
    Tensor out = Tensor::zeros({B});
    for (std::size_t b = 0; b < B; ++b) {
        double s = 0.0;
        for (std::size_t i = 0; i < per; ++i) s += av.data[b * per + i];
        out.data[b] = s;
    }
    return a.tape().emplace(std::move(out), {a.id()}, [per](Tape& t, std::size_t id) {
        const Tensor& g = t.grad(id);
        auto ps = t.parents(id);
        Tensor& ga = t.grad(ps[0]);
        for (std::size_t b = 0; b < g.size(); ++b) {
            for (std::size_t i = 0; i < per; ++i) ga.data[b * per + i] += g.data[b];
        }
    });
}

Var sum_middle(Var a) {
    const Tensor& av = a.value();
    if (av.rank() != 3) throw ShapeMismatch("sum_middle: expected [B,P,C]");
    const std::size_t B = av.shape[0], P = av.shape[1], C = av.shape[2];
    Tensor out = Tensor::zeros({B, C});
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t p = 0; p < P; ++p) {
            for (std::size_t c = 0; c < C; ++c) {
                out.data[b * C + c] += av.data[(b * P + p) * C + c];
            }
        }
    }
    return a.tape().emplace(std::move(out), {a.id()}, [B, P, C](Tape& t, std::size_t id) {
        const Tensor& g = t.grad(id);
        auto ps = t.parents(id);
        Tensor& ga = t.grad(ps[0]);
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t p = 0; p < P; ++p) {
                for (std::size_t c = 0; c < C; ++c) {
                    ga.data[(b * P + p) * C + c] += g.data[b * C + c];
                }
            }
        }
    });
}

Var reshape(Var a, std::vector<std::size_t> shape) {
    if (shape_product(shape) != a.value().size()) {
        throw ShapeMismatch("reshape: cannot view " + a.value().shape_str() + " as requested shape");
    }
    Tensor out(std::move(shape), a.value().data);
    return a.tape().emplace(std::move(out), {a.id()}, [](Tape& t, std::size_t id) {
        const Tensor& g = t.grad(id);
        auto ps = t.parents(id);
        for (std::size_t i = 0; i < g.size(); ++i) t.grad(ps[0]).data[i] += g.data[i];
    });
}

Var concat_last(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeMismatch("concat_last: no inputs");
    const std::size_t rows = rows_of(parts[0].value());
    std::size_t total = 0;
    std::vector<std::size_t> widths;
    std::vector<std::size_t> parent_ids;
    for (const Var& p : parts) {
        check_same_tape(parts[0], p, "concat_last");
        if (rows_of(p.value()) != rows) {
            throw ShapeMismatch("concat_last: inconsistent leading dims");
        }
        widths.push_back(p.value().last_dim());
        total += widths.back();
        parent_ids.push_back(p.id());
    }
    std::vector<std::size_t> shape = parts[0].value().shape;
    shape.back() = total;
    Tensor out = Tensor::zeros(shape);
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t off = 0;
        for (std::size_t p = 0; p < parts.size(); ++p) {
            auto src = parts[p].value().row(r);
            std::copy(src.begin(), src.end(), out.row(r).begin() + off);
            off += widths[p];
        }
    }
    return parts[0].tape().emplace(std::move(out), std::move(parent_ids),
                                   [widths, rows](Tape& t, std::size_t id) {
        const Tensor& g = t.grad(id);
        auto ps = t.parents(id);
        const std::size_t total = g.last_dim();
        for (std::size_t r = 0; r < rows; ++r) {
            std::size_t off = 0;
            for (std::size_t p = 0; p < ps.size(); ++p) {
                Tensor& gp = t.grad(ps[p]);
                for (std::size_t i = 0; i < widths[p]; ++i) {
                    gp.data[r * widths[p] + i] += g.data[r * total + off + i];
                }
                off += widths[p];
            }
        }
    });
}

Var slice_last(Var a, std::size_t start, std::size_t len) {
    const Tensor& av = a.value();
    const std::size_t n = av.last_dim();
    if (start + len > n) throw ShapeMismatch("slice_last: window out of range");
    std::vector<std::size_t> shape = av.shape;
    shape.back() = len;
    Tensor out = Tensor::zeros(shape);
    const std::size_t rows = rows_of(av);
    for (std::size_t r = 0; r < rows; ++r) {
        auto src = av.row(r);
        std::copy(src.begin() + start, src.begin() + start + len, out.row(r).begin());
    }
    return a.tape().emplace(std::move(out), {a.id()}, [start, len, n](Tape& t, std::size_t id) {
        const Tensor& g = t.grad(id);
        auto ps = t.parents(id);
        Tensor& ga = t.grad(ps[0]);
        const std::size_t rows = g.size() / len;
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t i = 0; i < len; ++i) {
                ga.data[r * n + start + i] += g.data[r * len + i];
            }
        }
    });
}

Var select_positions(Var a, std::vector<std::size_t> positions) {
    const Tensor& av = a.value();
    if (av.rank() != 3) throw ShapeMismatch("select_positions: expected [B,D,K]");
    const std::size_t B = av.shape[0], D = av.shape[1], K = av.shape[2];
    const std::size_t P = positions.size();
    Tensor out = Tensor::zeros({B, P, K});
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t p = 0; p < P; ++p) {
            const std::size_t d = positions[p];
            std::copy_n(av.data.data() + (b * D + d) * K, K, out.data.data() + (b * P + p) * K);
        }
    }
    auto pos = std::make_shared<std::vector<std::size_t>>(std::move(positions));
    return a.tape().emplace(std::move(out), {a.id()}, [pos, B, D, K](Tape& t, std::size_t id) {
        const Tensor& g = t.grad(id);
        auto ps = t.parents(id);
        Tensor& ga = t.grad(ps[0]);
        const std::size_t P = pos->size();
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t p = 0; p < P; ++p) {
                const std::size_t d = (*pos)[p];
                for (std::size_t i = 0; i < K; ++i) {
                    ga.data[(b * D + d) * K + i] += g.data[(b * P + p) * K + i];
                }
            }
        }
    });
}

Var scatter_positions(Var v, std::vector<std::size_t> positions, std::size_t D) {
    const Tensor& vv = v.value();
    if (vv.rank() != 3 || vv.shape[1] != positions.size()) {
        throw ShapeMismatch("scatter_positions: expected [B,P,K] with P positions");
    }
    const std::size_t B = vv.shape[0], P = vv.shape[1], K = vv.shape[2];
    Tensor out = Tensor::zeros({B, D, K});
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t p = 0; p < P; ++p) {
            const std::size_t d = positions[p];
            std::copy_n(vv.data.data() + (b * P + p) * K, K, out.data.data() + (b * D + d) * K);
        }
    }
    auto pos = std::make_shared<std::vector<std::size_t>>(std::move(positions));
    return v.tape().emplace(std::move(out), {v.id()}, [pos, B, D, K](Tape& t, std::size_t id) {
        const Tensor& g = t.grad(id);
        auto ps = t.parents(id);
        Tensor& gv = t.grad(ps[0]);
        const std::size_t P = pos->size();
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t p = 0; p < P; ++p) {
                const std::size_t d = (*pos)[p];
                for (std::size_t i = 0; i < K; ++i) {
                    gv.data[(b * P + p) * K + i] += g.data[(b * D + d) * K + i];
                }
            }
        }
    });
}

Var broadcast_to_batch(Var a, std::size_t batch) {
    const Tensor& av = a.value();
    std::vector<std::size_t> shape;
    shape.push_back(batch);
    shape.insert(shape.end(), av.shape.begin(), av.shape.end());
    Tensor out = Tensor::zeros(shape);
    const std::size_t per = av.size();
    for (std::size_t b = 0; b < batch; ++b) {
        std::copy_n(av.data.data(), per, out.data.data() + b * per);
    }
    return a.tape().emplace(std::move(out), {a.id()}, [batch, per](Tape& t, std::size_t id) {
        const Tensor& g = t.grad(id);
        auto ps = t.parents(id);
        Tensor& ga = t.grad(ps[0]);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t i = 0; i < per; ++i) ga.data[i] += g.data[b * per + i];
        }
    });
}

Var gather_rows(Var table, std::vector<std::size_t> indices) {
    const Tensor& tv = table.value();
    if (tv.rank() != 2) throw ShapeMismatch("gather_rows: expected [R,C] table");
    const std::size_t R = tv.shape[0], C = tv.shape[1];
    Tensor out = Tensor::zeros({indices.size(), C});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= R) throw ShapeMismatch("gather_rows: index out of range");
        std::copy_n(tv.data.data() + indices[i] * C, C, out.data.data() + i * C);
    }
    auto idx = std::make_shared<std::vector<std::size_t>>(std::move(indices));
    return table.tape().emplace(std::move(out), {table.id()}, [idx, C](Tape& t, std::size_t id) {
        const Tensor& g = t.grad(id);
        auto ps = t.parents(id);
        Tensor& gt = t.grad(ps[0]);
        for (std::size_t i = 0; i < idx->size(); ++i) {
            for (std::size_t c = 0; c < C; ++c) {
                gt.data[(*idx)[i] * C + c] += g.data[i * C + c];
            }
        }
    });
}

// --- modular one-hot tape ops --------------------------------------------

namespace {

void check_mod_operands(const Tensor& a, const Tensor& b, Modulus K, const char* what) {
    if (!same_shape(a, b)) {
        throw ShapeMismatch(std::string(what) + ": shape " + a.shape_str() + " vs " + b.shape_str());
    }
    if (static_cast<int>(a.last_dim()) != K.value()) {
        throw LengthMismatch(std::string(what) + ": last axis " + std::to_string(a.last_dim()) +
                             " != K " + std::to_string(K.value()));
    }
}

} // namespace

Var mod_add(Var a, Var b, Modulus K) {
    check_same_tape(a, b, "mod_add");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    check_mod_operands(av, bv, K, "mod_add");
    Tensor out = Tensor::zeros(av.shape);
    const std::size_t rows = rows_of(av);
    for (std::size_t r = 0; r < rows; ++r) one_hot_add(av.row(r), bv.row(r), out.row(r), K);
    const int k = K.value();
    return a.tape().emplace(std::move(out), {a.id(), b.id()}, [k](Tape& t, std::size_t id) {
        const Tensor& g = t.grad(id);
        auto ps = t.parents(id);
        const Tensor& av2 = t.value(ps[0]);
        const Tensor& bv2 = t.value(ps[1]);
        Tensor& ga = t.grad(ps[0]);
        Tensor& gb = t.grad(ps[1]);
        const std::size_t rows = g.size() / k;
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t off = r * k;
            for (int c = 0; c < k; ++c) {
                const double gc = g.data[off + c];
                if (gc == 0.0) continue;
                for (int i = 0; i < k; ++i) {
                    int j = c - i;
                    if (j < 0) j += k;
                    ga.data[off + i] += gc * bv2.data[off + j];
                    gb.data[off + j] += gc * av2.data[off + i];
                }
            }
        }
    });
}

Var mod_sub(Var a, Var b, Modulus K) {
    check_same_tape(a, b, "mod_sub");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    check_mod_operands(av, bv, K, "mod_sub");
    Tensor out = Tensor::zeros(av.shape);
    const std::size_t rows = rows_of(av);
    for (std::size_t r = 0; r < rows; ++r) one_hot_sub(av.row(r), bv.row(r), out.row(r), K);
    const int k = K.value();
    return a.tape().emplace(std::move(out), {a.id(), b.id()}, [k](Tape& t, std::size_t id) {
        const Tensor& g = t.grad(id);
        auto ps = t.parents(id);
        const Tensor& av2 = t.value(ps[0]);
        const Tensor& bv2 = t.value(ps[1]);
        Tensor& ga = t.grad(ps[0]);
        Tensor& gb = t.grad(ps[1]);
        const std::size_t rows = g.size() / k;
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t off = r * k;
            for (int c = 0; c < k; ++c) {
                const double gc = g.data[off + c];
                if (gc == 0.0) continue;
                for (int j = 0; j < k; ++j) {
                    int i = c + j;
                    if (i >= k) i -= k;
                    ga.data[off + i] += gc * bv2.data[off + j];
                    gb.data[off + j] += gc * av2.data[off + i];
                }
            }
        }
    });
}

Var mod_mul(Var s, Var a, Modulus K, const SigmaMask* mask) {
    check_same_tape(s, a, "mod_mul");
    const Tensor& sv = s.value();
    const Tensor& av = a.value();
    check_mod_operands(sv, av, K, "mod_mul");
    const SigmaMask resolved = mask ? *mask : coprime_mask(K);
    Tensor out = Tensor::zeros(sv.shape);
    const std::size_t rows = rows_of(sv);
    for (std::size_t r = 0; r < rows; ++r) one_hot_mul(sv.row(r), av.row(r), out.row(r), K, &resolved);
    const int k = K.value();
    return s.tape().emplace(std::move(out), {s.id(), a.id()}, [k](Tape& t, std::size_t id) {
        const Tensor& g = t.grad(id);
        auto ps = t.parents(id);
        const Tensor& sv2 = t.value(ps[0]);
        const Tensor& av2 = t.value(ps[1]);
        Tensor& gs = t.grad(ps[0]);
        Tensor& ga = t.grad(ps[1]);
        const std::size_t rows = g.size() / k;
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t off = r * k;
            for (int j = 0; j < k; ++j) {
                for (int i = 0; i < k; ++i) {
                    const double gc = g.data[off + (j * i) % k];
                    if (gc == 0.0) continue;
                    gs.data[off + j] += gc * av2.data[off + i];
                    ga.data[off + i] += gc * sv2.data[off + j];
                }
            }
        }
    });
}

Var mod_div(Var s, Var a, Modulus K, const SigmaMask* mask) {
    check_same_tape(s, a, "mod_div");
    const Tensor& sv = s.value();
    const Tensor& av = a.value();
    check_mod_operands(sv, av, K, "mod_div");
    const SigmaMask resolved = mask ? *mask : coprime_mask(K);
    Tensor out = Tensor::zeros(sv.shape);
    const std::size_t rows = rows_of(sv);
    for (std::size_t r = 0; r < rows; ++r) one_hot_div(sv.row(r), av.row(r), out.row(r), K, &resolved);
    const int k = K.value();
    return s.tape().emplace(std::move(out), {s.id(), a.id()}, [k](Tape& t, std::size_t id) {
        const Tensor& g = t.grad(id);
        auto ps = t.parents(id);
        const Tensor& sv2 = t.value(ps[0]);
        const Tensor& av2 = t.value(ps[1]);
        Tensor& gs = t.grad(ps[0]);
        Tensor& ga = t.grad(ps[1]);
        const std::size_t rows = g.size() / k;
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t off = r * k;
            for (int j = 0; j < k; ++j) {
                for (int c = 0; c < k; ++c) {
                    const double gc = g.data[off + c];
                    if (gc == 0.0) continue;
                    const int m = (j * c) % k;
                    gs.data[off + j] += gc * av2.data[off + m];
                    ga.data[off + m] += gc * sv2.data[off + j];
                }
            }
        }
    });
}

Var st_one_hot_argmax(Var theta, double tau) {
    if (tau <= 0.0) {
        throw InvalidTemperature("st_one_hot_argmax: tau must be > 0, got " + std::to_string(tau));
    }
    const Tensor& tv = theta.value();
    Tensor out = Tensor::zeros(tv.shape);
    const std::size_t k = tv.last_dim();
    const std::size_t rows = rows_of(tv);
    for (std::size_t r = 0; r < rows; ++r) {
        auto row = tv.row(r);
        std::size_t best = 0;
        for (std::size_t i = 1; i < k; ++i) {
            if (row[i] > row[best]) best = i;
        }
        out.row(r)[best] = 1.0;
    }
    return theta.tape().emplace(std::move(out), {theta.id()}, [tau](Tape& t, std::size_t id) {
        const Tensor& g = t.grad(id);
        auto ps = t.parents(id);
        const Tensor& th = t.value(ps[0]);
        Tensor& gth = t.grad(ps[0]);
        const std::size_t k = th.last_dim();
        const std::size_t rows = th.size() / k;
        std::vector<double> s(k), scaled(k);
        for (std::size_t r = 0; r < rows; ++r) {
            auto row = th.row(r);
            for (std::size_t i = 0; i < k; ++i) scaled[i] = row[i] / tau;
            softmax_row(scaled, s);
            double dot = 0.0;
            for (std::size_t i = 0; i < k; ++i) dot += g.data[r * k + i] * s[i];
            for (std::size_t i = 0; i < k; ++i) {
                gth.data[r * k + i] += s[i] * (g.data[r * k + i] - dot) / tau;
            }
        }
    });
}

Var masked_fill(Var theta, const SigmaMask& mask) {
    const Tensor& tv = theta.value();
    const std::size_t k = tv.last_dim();
    if (static_cast<int>(k) != mask.size()) {
        throw LengthMismatch("masked_fill: mask length " + std::to_string(mask.size()) +
                             " != last axis " + std::to_string(k));
    }
    Tensor out = tv;
    const std::size_t rows = rows_of(tv);
    for (std::size_t r = 0; r < rows; ++r) {
        auto row = out.row(r);
        for (std::size_t i = 0; i < k; ++i) {
            if (!mask.allowed[i]) row[i] = kMaskedLogit;
        }
    }
    auto allowed = std::make_shared<std::vector<bool>>(mask.allowed);
    return theta.tape().emplace(std::move(out), {theta.id()}, [allowed, k](Tape& t, std::size_t id) {
        const Tensor& g = t.grad(id);
        auto ps = t.parents(id);
        Tensor& ga = t.grad(ps[0]);
        const std::size_t rows = g.size() / k;
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t i = 0; i < k; ++i) {
                if ((*allowed)[i]) ga.data[r * k + i] += g.data[r * k + i];
            }
        }
    });
}

double finite_difference_check(const std::function<Var(Tape&)>& build_loss,
                               std::span<Parameter* const> params, double eps) {
    for (Parameter* p : params) p->zero_grad();
    std::vector<Tensor> analytic;
    {
        Tape tape;
        Var loss = build_loss(tape);
        tape.backward(loss);
    }
    for (Parameter* p : params) analytic.push_back(p->grad());

    double max_err = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        for (std::size_t i = 0; i < p.value().size(); ++i) {
            const double saved = p.value().data[i];
            p.value().data[i] = saved + eps;
            double f_plus;
            {
                Tape tape;
                f_plus = build_loss(tape).value().data[0];
            }
            p.value().data[i] = saved - eps;
            double f_minus;
            {
                Tape tape;
                f_minus = build_loss(tape).value().data[0];
            }
            p.value().data[i] = saved;
            const double numeric = (f_plus - f_minus) / (2.0 * eps);
            const double a = analytic[pi].data[i];
            const double err = std::abs(a - numeric) / (std::abs(a) + 1e-8);
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

} // namespace dflow
