#pragma once

// Base distributions over the latent categorical space x: factorized and
// autoregressive categoricals with exact log-mass and sampling.

#include <memory>
#include <optional>
#include <vector>

#include "dflow/conditioner.hpp"

namespace dflow {

class BaseDistribution {
public:
    virtual ~BaseDistribution() = default;

    // Per-example log-mass [B]. x rows may be hard or simplex-relaxed; the
    // inner products keep gradients flowing to x.
    virtual Var log_prob(Tape& tape, Var x, const std::optional<Var>& context) = 0;

    // i.i.d. samples as symbol sequences. context: encoded [B,C] rows, one per
    // requested sample, when the base is conditional.
    virtual std::vector<std::vector<int>> sample(std::size_t n, Rng& rng,
                                                 const Tensor* context) = 0;

    virtual std::vector<Parameter*> parameters() = 0;
    virtual std::uint64_t pass_count() const { return 0; }
    virtual void reset_pass_count() {}
    virtual std::size_t dims() const = 0;
    virtual int num_classes() const = 0;
};

// Position-specific logits [D, K]; all positions independent.
class FactorizedCategoricalBase : public BaseDistribution {
public:
    FactorizedCategoricalBase(std::size_t D, int K, std::string name_prefix);

    Var log_prob(Tape& tape, Var x, const std::optional<Var>& context) override;
    std::vector<std::vector<int>> sample(std::size_t n, Rng& rng, const Tensor* context) override;
    std::vector<Parameter*> parameters() override { return {&logits_}; }
    std::size_t dims() const override { return D_; }
    int num_classes() const override { return K_; }

    Parameter& logits() { return logits_; }

private:
    std::size_t D_;
    int K_;
    Parameter logits_;
};

// Conditionals parameterized by a masked dense conditioner over x under its
// own ordering. Sampling is sequential in that ordering (D passes); log-prob
// is a single pass.
class AutoregressiveCategoricalBase : public BaseDistribution {
public:
    AutoregressiveCategoricalBase(MaskedConditionerConfig cfg, Ordering ordering, Rng& rng,
                                  std::string name_prefix);

    Var log_prob(Tape& tape, Var x, const std::optional<Var>& context) override;
    std::vector<std::vector<int>> sample(std::size_t n, Rng& rng, const Tensor* context) override;
    std::vector<Parameter*> parameters() override { return conditioner_.parameters(); }
    std::uint64_t pass_count() const override { return conditioner_.pass_count(); }
    void reset_pass_count() override { conditioner_.reset_pass_count(); }
    std::size_t dims() const override { return D_; }
    int num_classes() const override { return K_; }

    const Ordering& ordering() const { return conditioner_.ordering(); }

private:
    std::size_t D_;
    int K_;
    MaskedDenseConditioner conditioner_;
};

} // namespace dflow
