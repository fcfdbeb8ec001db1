#include "dflow/training.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace dflow {

void OptimizerConfig::validate() const {
    if (learning_rate <= 0.0) throw ConfigError("optimizer.learning_rate must be > 0");
    if (steps < 1) throw ConfigError("optimizer.steps must be >= 1");
    if (batch_size < 1) throw ConfigError("optimizer.batch_size must be >= 1");
    if (eval_every < 1) throw ConfigError("optimizer.eval_every must be >= 1");
}

AdamOptimizer::AdamOptimizer(std::vector<Parameter*> params, const OptimizerConfig& cfg)
    : params_(std::move(params)), cfg_(cfg) {
    for (Parameter* p : params_) {
        m_.push_back(Tensor::zeros(p->value().shape));
        v_.push_back(Tensor::zeros(p->value().shape));
    }
}

void AdamOptimizer::step() {
    ++t_;
    double sq_norm = 0.0;
    for (Parameter* p : params_) {
        for (double g : p->grad().data) sq_norm += g * g;
    }
    const double norm = std::sqrt(sq_norm);
    const double clip = cfg_.grad_clip_norm > 0.0 && norm > cfg_.grad_clip_norm
                            ? cfg_.grad_clip_norm / norm
                            : 1.0;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& value = params_[i]->value().data;
        auto& grad = params_[i]->grad().data;
        auto& m = m_[i].data;
        auto& v = v_[i].data;
        for (std::size_t j = 0; j < value.size(); ++j) {
            const double g = grad[j] * clip;
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            value[j] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
        }
        params_[i]->zero_grad();
    }
}

double mean_nll(DiscreteFlowModel& model, const Dataset& data) {
    const std::vector<double> nlls =
        model.nll_values(data.seqs, data.has_context() ? &data.contexts : nullptr);
    double sum = 0.0;
    for (double v : nlls) sum += v;
    return sum / static_cast<double>(nlls.size());
}

TrainReport train(DiscreteFlowModel& model, const Dataset& train_data, const Dataset* eval_data,
                  const OptimizerConfig& cfg) {
    cfg.validate();
    if (train_data.seqs.empty()) throw Error("train: dataset is empty");
    const auto t0 = std::chrono::steady_clock::now();
    const auto wall_ms = [&] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    };

    model.reset_pass_counts();
    AdamOptimizer opt(model.parameters(), cfg);
    Rng rng(cfg.seed);
    const std::size_t n = train_data.seqs.size();
    const bool conditional = train_data.has_context();

    TrainReport report;
    double interval_nll = 0.0;
    std::size_t interval_count = 0;
    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        std::vector<std::vector<int>> batch(cfg.batch_size);
        std::vector<std::vector<int>> ctx(conditional ? cfg.batch_size : 0);
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            const std::size_t idx = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(n)));
            batch[b] = train_data.seqs[idx];
            if (conditional) ctx[b] = train_data.contexts[idx];
        }
        Tape tape;
        Var loss = mean_all(model.nll(tape, one_hot_encode(batch, model.dims(), model.num_classes()),
                                      conditional ? &ctx : nullptr));
        const double loss_value = loss.value().data[0];
        if (!std::isfinite(loss_value)) {
            throw DivergedLoss("train: non-finite loss " + std::to_string(loss_value) +
                               " at step " + std::to_string(step));
        }
        for (Parameter* p : model.parameters()) p->zero_grad();
        tape.backward(loss);
        opt.step();

        interval_nll += loss_value;
        ++interval_count;
        if (step % cfg.eval_every == 0 || step == cfg.steps) {
            TrainRecord rec;
            rec.step = step;
            rec.train_nll = interval_nll / static_cast<double>(interval_count);
            rec.eval_nll = eval_data ? mean_nll(model, *eval_data)
                                     : std::numeric_limits<double>::quiet_NaN();
            rec.wall_ms = wall_ms();
            report.records.push_back(rec);
            interval_nll = 0.0;
            interval_count = 0;
        }
    }
    report.final_train_nll = report.records.back().train_nll;
    report.final_eval_nll = report.records.back().eval_nll;
    report.flow_passes = model.flow_pass_count();
    report.base_passes = model.base_pass_count();
    report.total_wall_ms = wall_ms();
    return report;
}

} // namespace dflow
