#include "dflow/tensor.hpp"

#include <numeric>

namespace dflow {

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (shape_product(shape) != data.size()) {
        throw ShapeMismatch("Tensor: shape " + shape_str() + " does not match data length " +
                            std::to_string(data.size()));
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    Tensor t;
    t.data.assign(shape_product(shape), 0.0);
    t.shape = std::move(shape);
    return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    Tensor t;
    t.data.assign(shape_product(shape), value);
    t.shape = std::move(shape);
    return t;
}

Tensor Tensor::scalar(double value) {
    Tensor t;
    t.shape = {};
    t.data = {value};
    return t;
}

std::size_t Tensor::last_dim() const {
    if (shape.empty()) return 1;
    return shape.back();
}

std::span<double> Tensor::row(std::size_t r) {
    const std::size_t k = last_dim();
    return std::span<double>(data.data() + r * k, k);
}

std::span<const double> Tensor::row(std::size_t r) const {
    const std::size_t k = last_dim();
    return std::span<const double>(data.data() + r * k, k);
}

std::string Tensor::shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

std::size_t shape_product(std::span<const std::size_t> shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

bool same_shape(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!same_shape(a, b)) {
        throw ShapeMismatch(std::string(what) + ": shape " + a.shape_str() + " vs " + b.shape_str());
    }
}

Tensor one_hot_encode(const std::vector<std::vector<int>>& seqs, std::size_t D, int K) {
    Tensor t = Tensor::zeros({seqs.size(), D, static_cast<std::size_t>(K)});
    for (std::size_t b = 0; b < seqs.size(); ++b) {
        if (seqs[b].size() != D) {
            throw ShapeMismatch("one_hot_encode: sequence length " + std::to_string(seqs[b].size()) +
                                " != D " + std::to_string(D));
        }
        for (std::size_t d = 0; d < D; ++d) {
            const int sym = seqs[b][d];
            if (sym < 0 || sym >= K) {
                throw SymbolOutOfRange("one_hot_encode: symbol " + std::to_string(sym) +
                                       " outside [0, " + std::to_string(K) + ")");
            }
            t.data[(b * D + d) * K + sym] = 1.0;
        }
    }
    return t;
}

std::vector<int> argmax_last(const Tensor& t) {
    const std::size_t k = t.last_dim();
    const std::size_t rows = t.size() / k;
    std::vector<int> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        auto row = t.row(r);
        int best = 0;
        for (std::size_t i = 1; i < k; ++i) {
            if (row[i] > row[best]) best = static_cast<int>(i);
        }
        out[r] = best;
    }
    return out;
}

} // namespace dflow
