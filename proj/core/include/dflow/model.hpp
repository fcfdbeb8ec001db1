#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dflow/base_dist.hpp"
#include "dflow/flow.hpp"

namespace dflow {

struct ModelMetadata {
    std::string task;
    std::uint64_t seed = 0;
    std::string config_hash;
};

struct SampleResult {
    std::vector<std::vector<int>> sequences;
    std::uint64_t flow_passes = 0;
    std::uint64_t base_passes = 0;
};

// Base distribution + ordered stack of flow layers + optional context
// encoder. The stack may be empty (pure base model).
class DiscreteFlowModel {
public:
    DiscreteFlowModel(std::unique_ptr<BaseDistribution> base, FlowStack stack,
                      std::unique_ptr<ContextEncoder> context_encoder, ModelMetadata meta);

    // Per-example -log p(y) in nats: -base_log_prob(stack_inverse(one_hot(y))).
    Var nll(Tape& tape, const Tensor& y_onehot,
            const std::vector<std::vector<int>>* context_symbols);

    // Convenience: NLL values for a batch of symbol sequences (no gradients kept).
    std::vector<double> nll_values(const std::vector<std::vector<int>>& seqs,
                                   const std::vector<std::vector<int>>* context_symbols);

    // x ~ base, y = stack_forward(x); conditioner pass counts recorded.
    SampleResult sample(std::size_t n, Rng& rng,
                        const std::vector<std::vector<int>>* context_symbols);

    std::vector<Parameter*> parameters();

    BaseDistribution& base() { return *base_; }
    FlowStack& stack() { return stack_; }
    ContextEncoder* context_encoder() { return context_encoder_.get(); }
    const ModelMetadata& metadata() const { return meta_; }
    ModelMetadata& metadata() { return meta_; }
    std::size_t dims() const { return base_->dims(); }
    int num_classes() const { return base_->num_classes(); }

    std::uint64_t flow_pass_count() const { return stack_.pass_count(); }
    std::uint64_t base_pass_count() const { return base_->pass_count(); }
    void reset_pass_counts();

private:
    std::optional<Var> encode_context(Tape& tape,
                                      const std::vector<std::vector<int>>* context_symbols,
                                      std::size_t batch);

    std::unique_ptr<BaseDistribution> base_;
    FlowStack stack_;
    std::unique_ptr<ContextEncoder> context_encoder_;
    ModelMetadata meta_;
};

// nats / (D * ln 2)
double bits_per_char(double nll_nats, std::size_t D);

} // namespace dflow
