#include "dflow/model.hpp"

#include <cmath>

namespace dflow {

DiscreteFlowModel::DiscreteFlowModel(std::unique_ptr<BaseDistribution> base, FlowStack stack,
                                     std::unique_ptr<ContextEncoder> context_encoder,
                                     ModelMetadata meta)
    : base_(std::move(base)), stack_(std::move(stack)),
      context_encoder_(std::move(context_encoder)), meta_(std::move(meta)) {
    if (!stack_.empty()) {
        if (stack_.layer(0).dims() != base_->dims() ||
            stack_.layer(0).num_classes() != base_->num_classes()) {
            throw ShapeMismatch("DiscreteFlowModel: base and flow stack disagree on D or K");
        }
    }
}

std::optional<Var> DiscreteFlowModel::encode_context(
    Tape& tape, const std::vector<std::vector<int>>* context_symbols, std::size_t batch) {
    if (!context_encoder_) {
        if (context_symbols) throw Error("model has no context encoder but context was given");
        return std::nullopt;
    }
    if (!context_symbols) throw Error("model expects context symbols");
    if (context_symbols->size() != batch) {
        throw ShapeMismatch("context batch " + std::to_string(context_symbols->size()) +
                            " != data batch " + std::to_string(batch));
    }
    return context_encoder_->encode(tape, *context_symbols);
}

Var DiscreteFlowModel::nll(Tape& tape, const Tensor& y_onehot,
                           const std::vector<std::vector<int>>* context_symbols) {
    const std::size_t B = y_onehot.shape.at(0);
    std::optional<Var> ctx = encode_context(tape, context_symbols, B);
    Var x = stack_.inverse(tape, tape.constant(y_onehot), ctx);
    return neg(base_->log_prob(tape, x, ctx));
}

std::vector<double> DiscreteFlowModel::nll_values(
    const std::vector<std::vector<int>>& seqs,
    const std::vector<std::vector<int>>* context_symbols) {
    std::vector<double> out;
    out.reserve(seqs.size());
    // Chunked to bound tape memory on large batches.
    const std::size_t chunk = 512;
    for (std::size_t start = 0; start < seqs.size(); start += chunk) {
        const std::size_t stop = std::min(seqs.size(), start + chunk);
        std::vector<std::vector<int>> batch(seqs.begin() + start, seqs.begin() + stop);
        std::vector<std::vector<int>> ctx_batch;
        const std::vector<std::vector<int>>* ctx_ptr = nullptr;
        if (context_symbols) {
            ctx_batch.assign(context_symbols->begin() + start, context_symbols->begin() + stop);
            ctx_ptr = &ctx_batch;
        }
        Tape tape;
        Var v = nll(tape, one_hot_encode(batch, dims(), num_classes()), ctx_ptr);
        out.insert(out.end(), v.value().data.begin(), v.value().data.end());
    }
    return out;
}

SampleResult DiscreteFlowModel::sample(std::size_t n, Rng& rng,
                                       const std::vector<std::vector<int>>* context_symbols) {
    const std::uint64_t flow0 = stack_.pass_count();
    const std::uint64_t base0 = base_->pass_count();

    Tensor ctx_tensor;
    const Tensor* ctx_ptr = nullptr;
    if (context_encoder_) {
        if (!context_symbols) throw Error("model expects context symbols");
        Tape tape;
        ctx_tensor = context_encoder_->encode(tape, *context_symbols).value();
        ctx_ptr = &ctx_tensor;
    }

    SampleResult result;
    result.sequences = base_->sample(n, rng, ctx_ptr);
    if (!stack_.empty()) {
        Tensor x = one_hot_encode(result.sequences, dims(), num_classes());
        Tensor y = stack_.forward_values(x, ctx_ptr);
        const std::vector<int> syms = argmax_last(y);
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t d = 0; d < dims(); ++d) {
                result.sequences[b][d] = syms[b * dims() + d];
            }
        }
    }
    result.flow_passes = stack_.pass_count() - flow0;
    result.base_passes = base_->pass_count() - base0;
    return result;
}

std::vector<Parameter*> DiscreteFlowModel::parameters() {
    std::vector<Parameter*> ps = base_->parameters();
    for (Parameter* p : stack_.parameters()) ps.push_back(p);
    if (context_encoder_) {
        for (Parameter* p : context_encoder_->parameters()) ps.push_back(p);
    }
    return ps;
}

void DiscreteFlowModel::reset_pass_counts() {
    stack_.reset_pass_counts();
    base_->reset_pass_count();
}

double bits_per_char(double nll_nats, std::size_t D) {
    if (D < 1) throw Error("bits_per_char: D must be >= 1");
    return nll_nats / (static_cast<double>(D) * std::log(2.0));
}

} // namespace dflow
