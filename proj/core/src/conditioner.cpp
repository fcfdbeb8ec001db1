#include "dflow/conditioner.hpp"

#include <algorithm>
#include <cmath>

namespace dflow {

Ordering::Ordering(std::vector<std::size_t> perm) : perm_(std::move(perm)) {
    pos_.assign(perm_.size(), perm_.size());
    for (std::size_t p = 0; p < perm_.size(); ++p) {
        if (perm_[p] >= perm_.size() || pos_[perm_[p]] != perm_.size()) {
            throw Error("Ordering: perm is not a bijection over {0..D-1}");
        }
        pos_[perm_[p]] = p;
    }
}

Ordering Ordering::natural(std::size_t D) {
    std::vector<std::size_t> perm(D);
    for (std::size_t i = 0; i < D; ++i) perm[i] = i;
    return Ordering(std::move(perm));
}

Ordering Ordering::reversed() const {
    std::vector<std::size_t> perm(perm_.rbegin(), perm_.rend());
    return Ordering(std::move(perm));
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t = Tensor::zeros({fan_in, fan_out});
    for (double& v : t.data) v = rng.uniform_range(-a, a);
    return t;
}

// --- MaskedDenseConditioner ------------------------------------------------

MaskedDenseConditioner::MaskedDenseConditioner(MaskedConditionerConfig cfg, Ordering ordering,
                                               Rng& rng, std::string name_prefix)
    : cfg_(std::move(cfg)), ordering_(std::move(ordering)) {
    const std::size_t D = cfg_.D;
    const std::size_t K = static_cast<std::size_t>(cfg_.K);
    if (D == 0 || cfg_.K < 2) throw Error("MaskedDenseConditioner: need D >= 1, K >= 2");
    if (cfg_.hidden_widths.empty()) throw Error("MaskedDenseConditioner: hidden widths empty");
    if (ordering_.size() != D) throw Error("MaskedDenseConditioner: ordering size != D");

    // Degree of each non-context input feature: 1-indexed position in the
    // ordering of the owning dimension. Context features have degree 0 and
    // connect everywhere.
    std::vector<std::size_t> in_degrees(D * K);
    for (std::size_t d = 0; d < D; ++d) {
        for (std::size_t k = 0; k < K; ++k) in_degrees[d * K + k] = ordering_.position_of(d) + 1;
    }
    const std::size_t hmax = std::max<std::size_t>(1, D - 1);

    std::vector<std::size_t> prev_degrees = in_degrees;
    std::size_t prev_width = D * K;
    for (std::size_t li = 0; li < cfg_.hidden_widths.size(); ++li) {
        const std::size_t width = cfg_.hidden_widths[li];
        std::vector<std::size_t> degrees(width);
        for (std::size_t u = 0; u < width; ++u) degrees[u] = 1 + (u % hmax);

        const std::size_t in_width = prev_width + cfg_.context_dim;
        weights_.emplace_back(name_prefix + ".w" + std::to_string(li),
                              glorot_uniform(in_width, width, rng));
        biases_.emplace_back(name_prefix + ".b" + std::to_string(li),
                             Tensor::zeros({width}));
        Tensor mask = Tensor::zeros({in_width, width});
        for (std::size_t i = 0; i < in_width; ++i) {
            const std::size_t di = i < prev_width ? prev_degrees[i] : 0;
            for (std::size_t u = 0; u < width; ++u) {
                if (degrees[u] >= di) mask.data[i * width + u] = 1.0;
            }
        }
        masks_.push_back(std::move(mask));
        prev_degrees = std::move(degrees);
        prev_width = width;
    }

    // Output layer: block for dimension d may see hidden degrees strictly
    // below its own. Zero weights so the initial flow is near-identity.
    const std::size_t out_blocks = cfg_.emit_scale ? 2 * D : D;
    const std::size_t out_width = out_blocks * K;
    const std::size_t in_width = prev_width + cfg_.context_dim;
    weights_.emplace_back(name_prefix + ".w_out", Tensor::zeros({in_width, out_width}));
    biases_.emplace_back(name_prefix + ".b_out", Tensor::zeros({out_width}));
    Tensor mask = Tensor::zeros({in_width, out_width});
    for (std::size_t i = 0; i < in_width; ++i) {
        const std::size_t di = i < prev_width ? prev_degrees[i] : 0;
        for (std::size_t o = 0; o < out_width; ++o) {
            const std::size_t block = (o / K) % D;  // dimension index within loc/scale block
            const std::size_t od = ordering_.position_of(block) + 1;
            const bool allowed = (i >= prev_width) ? true : (di < od);
            if (allowed) mask.data[i * out_width + o] = 1.0;
        }
    }
    masks_.push_back(std::move(mask));
}

CondOutput MaskedDenseConditioner::forward(Tape& tape, Var y, const std::optional<Var>& context) {
    const Tensor& yv = y.value();
    const std::size_t D = cfg_.D;
    const std::size_t K = static_cast<std::size_t>(cfg_.K);
    if (yv.rank() != 3 || yv.shape[1] != D || yv.shape[2] != K) {
        throw ShapeMismatch("masked_forward: expected [B," + std::to_string(D) + "," +
                            std::to_string(K) + "], got " + yv.shape_str());
    }
    if (cfg_.context_dim > 0) {
        if (!context) throw ShapeMismatch("masked_forward: context expected but missing");
        if (context->value().rank() != 2 || context->value().shape[1] != cfg_.context_dim) {
            throw ShapeMismatch("masked_forward: context shape mismatch");
        }
    }
    const std::size_t B = yv.shape[0];
    count_pass();

    Var h = reshape(y, {B, D * K});
    const std::size_t n_layers = weights_.size();
    for (std::size_t li = 0; li < n_layers; ++li) {
        Var in = h;
        if (cfg_.context_dim > 0) {
            const Var parts[] = {h, *context};
            in = concat_last(parts);
        }
        Var wm = mul(tape.param(weights_[li]), tape.constant(masks_[li]));
        Var pre = add_rowwise(matmul(in, wm), tape.param(biases_[li]));
        h = (li + 1 == n_layers) ? pre : dflow::tanh(pre);
    }
    CondOutput out{reshape(slice_last(h, 0, D * K), {B, D, K}), std::nullopt};
    if (cfg_.emit_scale) {
        out.scale_logits = reshape(slice_last(h, D * K, D * K), {B, D, K});
    }
    return out;
}

std::vector<Parameter*> MaskedDenseConditioner::parameters() {
    std::vector<Parameter*> ps;
    for (auto& w : weights_) ps.push_back(&w);
    for (auto& b : biases_) ps.push_back(&b);
    return ps;
}

// --- EmbeddingConditioner ----------------------------------------------------

EmbeddingConditioner::EmbeddingConditioner(std::size_t D, int K, std::size_t window,
                                           Ordering ordering, std::string name_prefix)
    : D_(D), K_(K), window_(window), ordering_(std::move(ordering)),
      table_(name_prefix + ".table", Tensor::zeros({1, 1})) {
    if (window_ > D_) throw Error("EmbeddingConditioner: window must be <= D");
    const std::size_t A = static_cast<std::size_t>(K) + 1;  // data symbols + pad
    std::size_t rows = 1;
    for (std::size_t j = 0; j < window_; ++j) {
        rows *= A;
        if (rows > 10'000'000 / std::max<std::size_t>(1, D_)) {
            throw TooLarge("EmbeddingConditioner: context table would exceed 1e7 rows");
        }
    }
    rows_per_position_ = rows;
    table_ = Parameter(name_prefix + ".table",
                       Tensor::zeros({D_ * rows_per_position_, static_cast<std::size_t>(K_)}));
}

CondOutput EmbeddingConditioner::forward(Tape& tape, Var y, const std::optional<Var>& context) {
    if (context) throw Error("embedding_forward: embedding conditioner takes no context input");
    const Tensor& yv = y.value();
    const std::size_t K = static_cast<std::size_t>(K_);
    if (yv.rank() != 3 || yv.shape[1] != D_ || yv.shape[2] != K) {
        throw ShapeMismatch("embedding_forward: expected [B,D,K], got " + yv.shape_str());
    }
    const std::size_t B = yv.shape[0];
    count_pass();

    const std::vector<int> syms = argmax_last(yv);  // B*D symbols
    const std::size_t A = K + 1;
    const int pad = K_;
    std::vector<std::size_t> indices(B * D_);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t d = 0; d < D_; ++d) {
            const std::size_t p = ordering_.position_of(d);
            std::size_t idx = 0;
            std::size_t mult = 1;
            for (std::size_t j = 0; j < window_; ++j) {
                // j-th context slot holds the symbol generated (window-j) steps ago
                const std::ptrdiff_t q = static_cast<std::ptrdiff_t>(p) -
                                         static_cast<std::ptrdiff_t>(window_) +
                                         static_cast<std::ptrdiff_t>(j);
                const int sym = q < 0 ? pad
                                      : syms[b * D_ + ordering_.dim_at(static_cast<std::size_t>(q))];
                idx += static_cast<std::size_t>(sym) * mult;
                mult *= A;
            }
            indices[b * D_ + d] = d * rows_per_position_ + idx;
        }
    }
    Var rows = gather_rows(tape.param(table_), std::move(indices));
    return {reshape(rows, {B, D_, K}), std::nullopt};
}

std::vector<Parameter*> EmbeddingConditioner::parameters() { return {&table_}; }

// --- CouplingConditioner -----------------------------------------------------

CouplingConditioner::CouplingConditioner(std::size_t n_kept, std::size_t n_transformed, int K,
                                         std::vector<std::size_t> hidden_widths, bool emit_scale,
                                         std::size_t context_dim, Rng& rng,
                                         std::string name_prefix)
    : n_kept_(n_kept), n_transformed_(n_transformed), K_(K), emit_scale_(emit_scale),
      context_dim_(context_dim) {
    if (n_kept == 0 || n_transformed == 0) {
        throw Error("CouplingConditioner: both subsets must be nonempty");
    }
    if (hidden_widths.empty()) throw Error("CouplingConditioner: hidden widths empty");
    const std::size_t K_sz = static_cast<std::size_t>(K);
    std::size_t prev = n_kept * K_sz;
    for (std::size_t li = 0; li < hidden_widths.size(); ++li) {
        const std::size_t in_width = prev + context_dim;
        weights_.emplace_back(name_prefix + ".w" + std::to_string(li),
                              glorot_uniform(in_width, hidden_widths[li], rng));
        biases_.emplace_back(name_prefix + ".b" + std::to_string(li),
                             Tensor::zeros({hidden_widths[li]}));
        prev = hidden_widths[li];
    }
    const std::size_t out_width = n_transformed * K_sz * (emit_scale ? 2 : 1);
    weights_.emplace_back(name_prefix + ".w_out", Tensor::zeros({prev + context_dim, out_width}));
    biases_.emplace_back(name_prefix + ".b_out", Tensor::zeros({out_width}));
}

CondOutput CouplingConditioner::forward(Tape& tape, Var kept, const std::optional<Var>& context) {
    const Tensor& kv = kept.value();
    const std::size_t K = static_cast<std::size_t>(K_);
    if (kv.rank() != 3 || kv.shape[1] != n_kept_ || kv.shape[2] != K) {
        throw ShapeMismatch("coupling_forward: expected [B," + std::to_string(n_kept_) + "," +
                            std::to_string(K) + "], got " + kv.shape_str());
    }
    if (context_dim_ > 0 && !context) {
        throw ShapeMismatch("coupling_forward: context expected but missing");
    }
    const std::size_t B = kv.shape[0];
    count_pass();

    Var h = reshape(kept, {B, n_kept_ * K});
    const std::size_t n_layers = weights_.size();
    for (std::size_t li = 0; li < n_layers; ++li) {
        Var in = h;
        if (context_dim_ > 0) {
            const Var parts[] = {h, *context};
            in = concat_last(parts);
        }
        Var pre = add_rowwise(matmul(in, tape.param(weights_[li])), tape.param(biases_[li]));
        h = (li + 1 == n_layers) ? pre : dflow::tanh(pre);
    }
    CondOutput out{reshape(slice_last(h, 0, n_transformed_ * K), {B, n_transformed_, K}),
                   std::nullopt};
    if (emit_scale_) {
        out.scale_logits = reshape(slice_last(h, n_transformed_ * K, n_transformed_ * K),
                                   {B, n_transformed_, K});
    }
    return out;
}

std::vector<Parameter*> CouplingConditioner::parameters() {
    std::vector<Parameter*> ps;
    for (auto& w : weights_) ps.push_back(&w);
    for (auto& b : biases_) ps.push_back(&b);
    return ps;
}

// --- ContextEncoder ----------------------------------------------------------

ContextEncoder::ContextEncoder(std::size_t n_positions, int n_symbols, std::size_t dim, Rng& rng,
                               std::string name_prefix)
    : n_positions_(n_positions), n_symbols_(n_symbols), dim_(dim),
      table_(name_prefix + ".emb", Tensor::zeros({n_positions * static_cast<std::size_t>(n_symbols), dim})) {
    const double a = std::sqrt(3.0 / static_cast<double>(dim));
    for (double& v : table_.value().data) v = rng.uniform_range(-a, a);
}

Var ContextEncoder::encode(Tape& tape, const std::vector<std::vector<int>>& symbols) {
    const std::size_t B = symbols.size();
    std::vector<std::size_t> indices;
    indices.reserve(B * n_positions_);
    for (const auto& row : symbols) {
        if (row.size() != n_positions_) {
            throw ShapeMismatch("ContextEncoder: context row length " + std::to_string(row.size()) +
                                " != " + std::to_string(n_positions_));
        }
        for (std::size_t p = 0; p < n_positions_; ++p) {
            const int sym = row[p];
            if (sym < 0 || sym >= n_symbols_) {
                throw SymbolOutOfRange("ContextEncoder: symbol " + std::to_string(sym));
            }
            indices.push_back(p * static_cast<std::size_t>(n_symbols_) + static_cast<std::size_t>(sym));
        }
    }
    Var rows = gather_rows(tape.param(table_), std::move(indices));
    return sum_middle(reshape(rows, {B, n_positions_, dim_}));
}

std::vector<Parameter*> ContextEncoder::parameters() { return {&table_}; }

} // namespace dflow
