#pragma once

// Conditioner networks: map context symbols to per-position location (and
// optionally scale) logits while respecting autoregressive or bipartite
// dependency structure. Masking is structural, so forbidden dependencies are
// exactly zero, not merely small.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dflow/autodiff.hpp"
#include "dflow/rng.hpp"

namespace dflow {

// Generation order over D positions: perm[p] is the dimension generated p-th.
class Ordering {
public:
    explicit Ordering(std::vector<std::size_t> perm);
    static Ordering natural(std::size_t D);
    Ordering reversed() const;

    std::size_t size() const { return perm_.size(); }
    std::size_t dim_at(std::size_t p) const { return perm_[p]; }
    std::size_t position_of(std::size_t d) const { return pos_[d]; }
    const std::vector<std::size_t>& perm() const { return perm_; }

private:
    std::vector<std::size_t> perm_;
    std::vector<std::size_t> pos_;
};

struct CondOutput {
    Var loc_logits;                  // [B, D, K] (or [B, T, K] for coupling)
    std::optional<Var> scale_logits; // same shape when emitted
};

// Base for anything that counts its forward invocations; generation-cost
// accounting reads these counters.
class PassCounted {
public:
    std::uint64_t pass_count() const { return passes_; }
    void reset_pass_count() { passes_ = 0; }

protected:
    void count_pass() { ++passes_; }

private:
    std::uint64_t passes_ = 0;
};

// Conditioner with full-sequence input and per-position autoregressive
// structure under an ordering.
class ArConditioner : public PassCounted {
public:
    virtual ~ArConditioner() = default;

    // y: [B, D, K] one-hot rows (hard or relaxed). context: [B, C] if present.
    virtual CondOutput forward(Tape& tape, Var y, const std::optional<Var>& context) = 0;
    virtual std::vector<Parameter*> parameters() = 0;
    virtual const Ordering& ordering() const = 0;
    virtual bool emits_scale() const = 0;
};

struct MaskedConditionerConfig {
    std::size_t D = 0;
    int K = 0;
    std::vector<std::size_t> hidden_widths;
    bool emit_scale = false;
    std::size_t context_dim = 0;
};

// MADE-style masked dense network. Context features, when present, are
// concatenated into every layer's input and are visible to all units.
// The final layer is zero-initialized so a fresh flow is the identity.
class MaskedDenseConditioner : public ArConditioner {
public:
    MaskedDenseConditioner(MaskedConditionerConfig cfg, Ordering ordering, Rng& rng,
                           std::string name_prefix);

    CondOutput forward(Tape& tape, Var y, const std::optional<Var>& context) override;
    std::vector<Parameter*> parameters() override;
    const Ordering& ordering() const override { return ordering_; }
    bool emits_scale() const override { return cfg_.emit_scale; }

private:
    MaskedConditionerConfig cfg_;
    Ordering ordering_;
    std::vector<Parameter> weights_;
    std::vector<Parameter> biases_;
    std::vector<Tensor> masks_;      // binary, same shape as weights_
};

// Lookup table keyed by the w symbols preceding each position in the
// ordering (in generation order, left-padded with a reserved pad symbol).
// Emits location logits only.
class EmbeddingConditioner : public ArConditioner {
public:
    EmbeddingConditioner(std::size_t D, int K, std::size_t window, Ordering ordering,
                         std::string name_prefix);

    CondOutput forward(Tape& tape, Var y, const std::optional<Var>& context) override;
    std::vector<Parameter*> parameters() override;
    const Ordering& ordering() const override { return ordering_; }
    bool emits_scale() const override { return false; }

    std::size_t window() const { return window_; }
    std::size_t rows_per_position() const { return rows_per_position_; }

private:
    std::size_t D_;
    int K_;
    std::size_t window_;
    std::size_t rows_per_position_;  // (K+1)^window
    Ordering ordering_;
    Parameter table_;                // [D * rows_per_position, K]
};

// Dense network for coupling layers: consumes only the kept subset and emits
// logits for the transformed subset. No masking is needed; independence from
// transformed positions holds because they are not inputs.
class CouplingConditioner : public PassCounted {
public:
    CouplingConditioner(std::size_t n_kept, std::size_t n_transformed, int K,
                        std::vector<std::size_t> hidden_widths, bool emit_scale,
                        std::size_t context_dim, Rng& rng, std::string name_prefix);

    // kept: [B, P, K]; returns logits for the T transformed positions.
    CondOutput forward(Tape& tape, Var kept, const std::optional<Var>& context);
    std::vector<Parameter*> parameters();
    bool emits_scale() const { return emit_scale_; }

private:
    std::size_t n_kept_, n_transformed_;
    int K_;
    bool emit_scale_;
    std::size_t context_dim_;
    std::vector<Parameter> weights_;
    std::vector<Parameter> biases_;
};

// Position-wise embedding sum over context symbols; the fixed minimal encoder
// for conditional tasks.
class ContextEncoder {
public:
    ContextEncoder(std::size_t n_positions, int n_symbols, std::size_t dim, Rng& rng,
                   std::string name_prefix);

    // symbols: B rows of n_positions ints in [0, n_symbols). -> [B, dim]
    Var encode(Tape& tape, const std::vector<std::vector<int>>& symbols);
    std::vector<Parameter*> parameters();
    std::size_t dim() const { return dim_; }
    std::size_t positions() const { return n_positions_; }
    int alphabet() const { return n_symbols_; }

private:
    std::size_t n_positions_;
    int n_symbols_;
    std::size_t dim_;
    Parameter table_;  // [n_positions * n_symbols, dim]
};

// Uniform Glorot init bound sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

} // namespace dflow
