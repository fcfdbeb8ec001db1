#pragma once

// Invertible discrete transforms over the one-hot algebra. Convention:
// data space is y, base space is x. Training uses only inverses (parallel
// for both layer types); sampling uses forwards.

#include <memory>
#include <optional>
#include <vector>

#include "dflow/conditioner.hpp"

namespace dflow {

class FlowLayer {
public:
    virtual ~FlowLayer() = default;

    // Parallel inverse x = f^-1(y); differentiable through the straight-through
    // nodes. y must be hard one-hot [B, D, K].
    virtual Var inverse(Tape& tape, Var y, const std::optional<Var>& context) = 0;

    // Sampling direction y = f(x) on plain tensors; context, when present, is
    // the already-encoded [B, C] matrix.
    virtual Tensor forward_values(const Tensor& x, const Tensor* context) = 0;

    virtual std::vector<Parameter*> parameters() = 0;
    virtual std::uint64_t pass_count() const = 0;
    virtual void reset_pass_count() = 0;
    virtual std::size_t dims() const = 0;
    virtual int num_classes() const = 0;
};

// y_d = (mu_d + sigma_d * x_d) mod K with (mu, sigma) autoregressive in y.
// Inverse costs one conditioner pass; forward costs D passes.
class AutoregressiveFlowLayer : public FlowLayer {
public:
    AutoregressiveFlowLayer(std::unique_ptr<ArConditioner> conditioner, std::size_t D, Modulus K,
                            bool use_scale, double tau = 0.1);

    Var inverse(Tape& tape, Var y, const std::optional<Var>& context) override;
    Tensor forward_values(const Tensor& x, const Tensor* context) override;
    std::vector<Parameter*> parameters() override { return conditioner_->parameters(); }
    std::uint64_t pass_count() const override { return conditioner_->pass_count(); }
    void reset_pass_count() override { conditioner_->reset_pass_count(); }
    std::size_t dims() const override { return D_; }
    int num_classes() const override { return K_.value(); }

    const Ordering& ordering() const { return conditioner_->ordering(); }
    ArConditioner& conditioner() { return *conditioner_; }
    bool use_scale() const { return use_scale_; }

    // Coprime by default; tests may override to inject non-invertible scales.
    SigmaMask& scale_mask() { return scale_mask_; }
    const SigmaMask& scale_mask() const { return scale_mask_; }

private:
    std::unique_ptr<ArConditioner> conditioner_;
    std::size_t D_;
    Modulus K_;
    bool use_scale_;
    double tau_;
    SigmaMask scale_mask_;
};

// Kept positions copied unchanged; transformed positions undergo the modular
// location-scale map with (mu, sigma) computed from kept positions only.
// Both directions cost exactly one conditioner pass.
class BipartiteFlowLayer : public FlowLayer {
public:
    BipartiteFlowLayer(std::vector<bool> kept_mask, int K,
                       std::vector<std::size_t> hidden_widths, bool use_scale,
                       std::size_t context_dim, Rng& rng, std::string name_prefix,
                       double tau = 0.1);

    Var inverse(Tape& tape, Var y, const std::optional<Var>& context) override;
    Tensor forward_values(const Tensor& x, const Tensor* context) override;
    std::vector<Parameter*> parameters() override { return conditioner_.parameters(); }
    std::uint64_t pass_count() const override { return conditioner_.pass_count(); }
    void reset_pass_count() override { conditioner_.reset_pass_count(); }
    std::size_t dims() const override { return kept_mask_.size(); }
    int num_classes() const override { return K_.value(); }

    const std::vector<bool>& kept_mask() const { return kept_mask_; }
    CouplingConditioner& conditioner() { return conditioner_; }
    bool use_scale() const { return use_scale_; }
    SigmaMask& scale_mask() { return scale_mask_; }
    const SigmaMask& scale_mask() const { return scale_mask_; }

private:
    std::vector<bool> kept_mask_;
    std::vector<std::size_t> kept_positions_;
    std::vector<std::size_t> trans_positions_;
    Modulus K_;
    bool use_scale_;
    double tau_;
    CouplingConditioner conditioner_;
    SigmaMask scale_mask_;
};

// Ordered composition. forward applies layers first to last; inverse applies
// layer inverses last to first.
class FlowStack {
public:
    FlowStack() = default;

    void push(std::unique_ptr<FlowLayer> layer);
    bool empty() const { return layers_.empty(); }
    std::size_t size() const { return layers_.size(); }
    FlowLayer& layer(std::size_t i) { return *layers_[i]; }
    const FlowLayer& layer(std::size_t i) const { return *layers_[i]; }

    Var inverse(Tape& tape, Var y, const std::optional<Var>& context);
    Tensor forward_values(const Tensor& x, const Tensor* context);

    std::vector<Parameter*> parameters();
    std::uint64_t pass_count() const;
    void reset_pass_counts();

private:
    std::vector<std::unique_ptr<FlowLayer>> layers_;
};

// Alternating even/odd kept mask. Layer index counts from the data side:
// the data-nearest layer (depth 0) transforms even positions (keeps odd),
// the next transforms odd, and so on.
std::vector<bool> alternating_mask(std::size_t D, std::size_t depth_from_data);

} // namespace dflow
