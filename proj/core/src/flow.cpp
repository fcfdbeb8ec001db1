#include "dflow/flow.hpp"

namespace dflow {

namespace {

// Argmax with ties to the lowest index, matching st_one_hot_argmax's forward.
int row_argmax(std::span<const double> row) {
    int best = 0;
    for (std::size_t i = 1; i < row.size(); ++i) {
        if (row[i] > row[best]) best = static_cast<int>(i);
    }
    return best;
}

int masked_row_argmax(std::span<const double> row, const SigmaMask& mask) {
    int best = -1;
    double best_v = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) {
        const double v = mask.allowed[i] ? row[i] : kMaskedLogit;
        if (best < 0 || v > best_v) {
            best = static_cast<int>(i);
            best_v = v;
        }
    }
    return best;
}

} // namespace

// --- AutoregressiveFlowLayer -------------------------------------------------

AutoregressiveFlowLayer::AutoregressiveFlowLayer(std::unique_ptr<ArConditioner> conditioner,
                                                 std::size_t D, Modulus K, bool use_scale,
                                                 double tau)
    : conditioner_(std::move(conditioner)), D_(D), K_(K), use_scale_(use_scale), tau_(tau),
      scale_mask_(coprime_mask(K)) {
    if (use_scale_ && !conditioner_->emits_scale()) {
        throw Error("AutoregressiveFlowLayer: use_scale requires a scale-emitting conditioner");
    }
}

Var AutoregressiveFlowLayer::inverse(Tape& tape, Var y, const std::optional<Var>& context) {
    CondOutput co = conditioner_->forward(tape, y, context);
    Var mu = st_one_hot_argmax(co.loc_logits, tau_);
    Var x = mod_sub(y, mu, K_);
    if (use_scale_) {
        Var sigma = st_one_hot_argmax(masked_fill(*co.scale_logits, scale_mask_), tau_);
        x = mod_div(sigma, x, K_, &scale_mask_);
    }
    return x;
}

Tensor AutoregressiveFlowLayer::forward_values(const Tensor& x, const Tensor* context) {
    const std::size_t K = static_cast<std::size_t>(K_.value());
    if (x.rank() != 3 || x.shape[1] != D_ || x.shape[2] != K) {
        throw ShapeMismatch("ar_forward: expected [B,D,K], got " + x.shape_str());
    }
    const std::size_t B = x.shape[0];
    Tensor y = Tensor::zeros({B, D_, K});
    std::vector<double> mu(K), sigma(K), scaled(K);
    // One conditioner pass per generation step; logits for the step's position
    // depend only on already-generated positions.
    for (std::size_t p = 0; p < D_; ++p) {
        const std::size_t d = ordering().dim_at(p);
        Tape tape;
        Var yv = tape.constant(y);
        std::optional<Var> cv;
        if (context) cv = tape.constant(*context);
        CondOutput co = conditioner_->forward(tape, yv, cv);
        const Tensor& loc = co.loc_logits.value();
        const Tensor* scl = co.scale_logits ? &co.scale_logits->value() : nullptr;
        for (std::size_t b = 0; b < B; ++b) {
            const std::size_t r = b * D_ + d;
            std::fill(mu.begin(), mu.end(), 0.0);
            mu[row_argmax(loc.row(r))] = 1.0;
            auto x_row = x.row(r);
            if (use_scale_) {
                std::fill(sigma.begin(), sigma.end(), 0.0);
                sigma[masked_row_argmax(scl->row(r), scale_mask_)] = 1.0;
                one_hot_mul(sigma, x_row, scaled, K_, &scale_mask_);
                one_hot_add(scaled, mu, y.row(r), K_);
            } else {
                one_hot_add(x_row, mu, y.row(r), K_);
            }
        }
    }
    return y;
}

// --- BipartiteFlowLayer --------------------------------------------------------

BipartiteFlowLayer::BipartiteFlowLayer(std::vector<bool> kept_mask, int K,
                                       std::vector<std::size_t> hidden_widths, bool use_scale,
                                       std::size_t context_dim, Rng& rng, std::string name_prefix,
                                       double tau)
    : kept_mask_(std::move(kept_mask)), K_(K), use_scale_(use_scale), tau_(tau),
      conditioner_(
          [&] {
              for (std::size_t i = 0; i < kept_mask_.size(); ++i) {
                  if (kept_mask_[i]) kept_positions_.push_back(i);
                  else trans_positions_.push_back(i);
              }
              if (kept_positions_.empty() || trans_positions_.empty()) {
                  throw Error("BipartiteFlowLayer: mask needs both kept and transformed positions");
              }
              return CouplingConditioner(kept_positions_.size(), trans_positions_.size(), K,
                                         std::move(hidden_widths), use_scale, context_dim, rng,
                                         std::move(name_prefix));
          }()),
      scale_mask_(coprime_mask(K_)) {}

Var BipartiteFlowLayer::inverse(Tape& tape, Var y, const std::optional<Var>& context) {
    const std::size_t D = kept_mask_.size();
    Var kept = select_positions(y, kept_positions_);
    CondOutput co = conditioner_.forward(tape, kept, context);
    Var mu = st_one_hot_argmax(co.loc_logits, tau_);
    Var xt = mod_sub(select_positions(y, trans_positions_), mu, K_);
    if (use_scale_) {
        Var sigma = st_one_hot_argmax(masked_fill(*co.scale_logits, scale_mask_), tau_);
        xt = mod_div(sigma, xt, K_, &scale_mask_);
    }
    return add(scatter_positions(kept, kept_positions_, D),
               scatter_positions(xt, trans_positions_, D));
}

Tensor BipartiteFlowLayer::forward_values(const Tensor& x, const Tensor* context) {
    const std::size_t D = kept_mask_.size();
    const std::size_t K = static_cast<std::size_t>(K_.value());
    if (x.rank() != 3 || x.shape[1] != D || x.shape[2] != K) {
        throw ShapeMismatch("bipartite_forward: expected [B,D,K], got " + x.shape_str());
    }
    const std::size_t B = x.shape[0];
    Tape tape;
    Var xv = tape.constant(x);
    Var kept = select_positions(xv, kept_positions_);
    std::optional<Var> cv;
    if (context) cv = tape.constant(*context);
    CondOutput co = conditioner_.forward(tape, kept, cv);
    const Tensor& loc = co.loc_logits.value();
    const Tensor* scl = co.scale_logits ? &co.scale_logits->value() : nullptr;

    Tensor y = x;
    std::vector<double> mu(K), sigma(K), scaled(K);
    const std::size_t T = trans_positions_.size();
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t ti = 0; ti < T; ++ti) {
            const std::size_t d = trans_positions_[ti];
            const std::size_t lr = b * T + ti;
            std::fill(mu.begin(), mu.end(), 0.0);
            mu[row_argmax(loc.row(lr))] = 1.0;
            auto x_row = x.row(b * D + d);
            if (use_scale_) {
                std::fill(sigma.begin(), sigma.end(), 0.0);
                sigma[masked_row_argmax(scl->row(lr), scale_mask_)] = 1.0;
                one_hot_mul(sigma, x_row, scaled, K_, &scale_mask_);
                one_hot_add(scaled, mu, y.row(b * D + d), K_);
            } else {
                one_hot_add(x_row, mu, y.row(b * D + d), K_);
            }
        }
    }
    return y;
}

// --- FlowStack -------------------------------------------------------------

void FlowStack::push(std::unique_ptr<FlowLayer> layer) {
    if (!layers_.empty()) {
        if (layers_.front()->dims() != layer->dims() ||
            layers_.front()->num_classes() != layer->num_classes()) {
            throw ShapeMismatch("FlowStack: layers must share D and K");
        }
    }
    layers_.push_back(std::move(layer));
}

Var FlowStack::inverse(Tape& tape, Var y, const std::optional<Var>& context) {
    Var x = y;
    for (std::size_t i = layers_.size(); i-- > 0;) {
        x = layers_[i]->inverse(tape, x, context);
    }
    return x;
}

Tensor FlowStack::forward_values(const Tensor& x, const Tensor* context) {
    Tensor y = x;
    for (auto& layer : layers_) y = layer->forward_values(y, context);
    return y;
}

std::vector<Parameter*> FlowStack::parameters() {
    std::vector<Parameter*> ps;
    for (auto& layer : layers_) {
        for (Parameter* p : layer->parameters()) ps.push_back(p);
    }
    return ps;
}

std::uint64_t FlowStack::pass_count() const {
    std::uint64_t n = 0;
    for (const auto& layer : layers_) n += layer->pass_count();
    return n;
}

void FlowStack::reset_pass_counts() {
    for (auto& layer : layers_) layer->reset_pass_count();
}

std::vector<bool> alternating_mask(std::size_t D, std::size_t depth_from_data) {
    std::vector<bool> kept(D);
    // Depth 0 transforms even positions (keeps odd); parity alternates below.
    for (std::size_t i = 0; i < D; ++i) {
        kept[i] = (i % 2 == 1) == (depth_from_data % 2 == 0);
    }
    return kept;
}

} // namespace dflow
