#pragma once

#include <vector>

#include "dflow/datagen.hpp"
#include "dflow/model.hpp"

namespace dflow {

struct OptimizerConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t batch_size = 64;
    std::size_t steps = 1000;
    std::uint64_t seed = 0;
    double grad_clip_norm = 5.0;
    std::size_t eval_every = 100;

    void validate() const;
};

struct TrainRecord {
    std::size_t step = 0;
    double train_nll = 0.0;  // mean batch NLL since the previous record
    double eval_nll = 0.0;   // NaN when no eval split was given
    double wall_ms = 0.0;    // cumulative
};

struct TrainReport {
    std::vector<TrainRecord> records;
    double final_train_nll = 0.0;
    double final_eval_nll = 0.0;
    std::uint64_t flow_passes = 0;
    std::uint64_t base_passes = 0;
    double total_wall_ms = 0.0;
};

// Adaptive-moment updates with bias correction and global-norm gradient
// clipping. Gradients are consumed (zeroed) by step().
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<Parameter*> params, const OptimizerConfig& cfg);
    void step();

private:
    std::vector<Parameter*> params_;
    OptimizerConfig cfg_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    std::size_t t_ = 0;
};

// Maximum-likelihood training: nll forward, backward, Adam update, for the
// configured step count. Deterministic given the config seed. Throws
// DivergedLoss (with the offending step) on NaN/Inf loss.
TrainReport train(DiscreteFlowModel& model, const Dataset& train_data, const Dataset* eval_data,
                  const OptimizerConfig& cfg);

// Mean NLL of a dataset under the model.
double mean_nll(DiscreteFlowModel& model, const Dataset& data);

} // namespace dflow
