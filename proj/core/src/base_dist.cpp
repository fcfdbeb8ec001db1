#include "dflow/base_dist.hpp"

#include <cmath>

namespace dflow {

namespace {

void check_x(const Tensor& x, std::size_t D, int K, const char* what) {
    if (x.rank() != 3 || x.shape[1] != D || x.shape[2] != static_cast<std::size_t>(K)) {
        throw ShapeMismatch(std::string(what) + ": expected [B," + std::to_string(D) + "," +
                            std::to_string(K) + "], got " + x.shape_str());
    }
}

// CDF inversion over softmax(logits).
int sample_from_logits(std::span<const double> logits, Rng& rng) {
    const std::size_t k = logits.size();
    std::vector<double> p(k);
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    const double u = rng.uniform() * sum;
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        acc += p[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(k - 1);
}

} // namespace

// --- FactorizedCategoricalBase ----------------------------------------------

FactorizedCategoricalBase::FactorizedCategoricalBase(std::size_t D, int K, std::string name_prefix)
    : D_(D), K_(K),
      logits_(name_prefix + ".logits", Tensor::zeros({D, static_cast<std::size_t>(K)})) {}

Var FactorizedCategoricalBase::log_prob(Tape& tape, Var x, const std::optional<Var>&) {
    check_x(x.value(), D_, K_, "base_log_prob");
    const std::size_t B = x.value().shape[0];
    Var lp = log_softmax(tape.param(logits_));          // [D, K]
    Var lpb = broadcast_to_batch(lp, B);                // [B, D, K]
    return sum_per_batch(mul(x, lpb));                  // [B]
}

std::vector<std::vector<int>> FactorizedCategoricalBase::sample(std::size_t n, Rng& rng,
                                                                const Tensor*) {
    std::vector<std::vector<int>> out(n, std::vector<int>(D_));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < D_; ++d) {
            out[i][d] = sample_from_logits(logits_.value().row(d), rng);
        }
    }
    return out;
}

// --- AutoregressiveCategoricalBase --------------------------------------------

AutoregressiveCategoricalBase::AutoregressiveCategoricalBase(MaskedConditionerConfig cfg,
                                                             Ordering ordering, Rng& rng,
                                                             std::string name_prefix)
    : D_(cfg.D), K_(cfg.K),
      conditioner_(
          [&] {
              cfg.emit_scale = false;  // base emits categorical logits only
              return cfg;
          }(),
          std::move(ordering), rng, std::move(name_prefix)) {}

Var AutoregressiveCategoricalBase::log_prob(Tape& tape, Var x, const std::optional<Var>& context) {
    check_x(x.value(), D_, K_, "base_log_prob");
    CondOutput co = conditioner_.forward(tape, x, context);
    Var lp = log_softmax(co.loc_logits);  // [B, D, K]
    return sum_per_batch(mul(x, lp));
}

std::vector<std::vector<int>> AutoregressiveCategoricalBase::sample(std::size_t n, Rng& rng,
                                                                    const Tensor* context) {
    const std::size_t K = static_cast<std::size_t>(K_);
    std::vector<std::vector<int>> out(n, std::vector<int>(D_, 0));
    Tensor x = Tensor::zeros({n, D_, K});
    for (std::size_t p = 0; p < D_; ++p) {
        const std::size_t d = conditioner_.ordering().dim_at(p);
        Tape tape;
        Var xv = tape.constant(x);
        std::optional<Var> cv;
        if (context) cv = tape.constant(*context);
        CondOutput co = conditioner_.forward(tape, xv, cv);
        const Tensor& logits = co.loc_logits.value();
        for (std::size_t b = 0; b < n; ++b) {
            const int sym = sample_from_logits(logits.row(b * D_ + d), rng);
            out[b][d] = sym;
            x.data[(b * D_ + d) * K + static_cast<std::size_t>(sym)] = 1.0;
        }
    }
    return out;
}

} // namespace dflow
