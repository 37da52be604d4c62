#include "fido/mask_opt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "fido/adam.hpp"
#include "fido/rng.hpp"

namespace fido {

std::string objective_name(MaskObjective o) { return o == MaskObjective::ssr ? "ssr" : "sdr"; }

MaskObjective objective_from_name(const std::string& name) {
    if (name == "ssr") return MaskObjective::ssr;
    if (name == "sdr") return MaskObjective::sdr;
    throw ConfigError("unknown objective '" + name + "' (want ssr or sdr)");
}

void ObjectiveConfig::validate() const {
    if (lambda < 0) throw ConfigError("objective: lambda must be >= 0");
    if (tv_weight < 0) throw ConfigError("objective: tv weight must be >= 0");
    if (!(temperature > 0)) throw ConfigError("objective: temperature must be > 0");
    if (batch_size < 1) throw ConfigError("objective: batch size must be >= 1");
    if (steps < 1) throw ConfigError("objective: steps must be >= 1");
    if (!(learning_rate > 0)) throw ConfigError("objective: learning rate must be > 0");
    if (upsample_size < 0) throw ConfigError("objective: upsample size must be >= 0");
    if (!scorer) throw ConfigError("objective: no scorer configured");
    if (!infill) throw ConfigError("objective: no infill strategy configured");
}

void save_trace_csv(const OptimTrace& trace, const std::string& path,
                    const std::string& header_comment) {
    std::ofstream out(path);
    if (!out) throw ConfigError("save_trace_csv: cannot open " + path + " for writing");
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "step,objective,score,sparsity,tv\n";
    char buf[160];
    for (const TraceRow& r : trace.rows) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", r.step, r.objective, r.score,
                      r.sparsity, r.tv);
        out << buf;
    }
}

ag::Node* concrete_sample(ag::Graph& g, ag::Node* theta, const Tensor& u, double temperature) {
    if (!(temperature > 0)) throw ConfigError("concrete_sample: temperature must be > 0");
    if (!theta->value.same_shape(u))
        throw ShapeError("concrete_sample: uniforms " + u.shape_str() + " do not match theta " +
                         theta->value.shape_str());
    Tensor logit_u(u.shape());
    for (long long i = 0; i < u.numel(); ++i) {
        if (!(u[i] > 0.0 && u[i] < 1.0))
            throw ConfigError("concrete_sample: uniforms must lie strictly inside (0,1)");
        logit_u[i] = std::log(u[i]) - std::log(1.0 - u[i]);
    }
    ag::Node* logit_theta = g.sub(g.log(theta), g.log(g.one_minus(theta)));
    return g.sigmoid(g.scale(g.add(logit_theta, g.constant(std::move(logit_u))), 1.0 / temperature));
}

double sparsity_term(const Tensor& z, MaskObjective objective) {
    double m = z.sum() / static_cast<double>(z.numel());
    return objective == MaskObjective::ssr ? m : 1.0 - m;
}

ag::Node* sparsity_node(ag::Graph& g, ag::Node* z, MaskObjective objective) {
    ag::Node* m = g.mean(z);
    return objective == MaskObjective::ssr ? m : g.one_minus(m);
}

double tv_penalty(const Tensor& map) {
    ag::Graph g;
    return g.tv2d(g.leaf(map))->value[0];
}

Tensor upsample_values(const Tensor& map, int out_h, int out_w) {
    ag::Graph g;
    return g.upsample_bilinear(g.leaf(map), out_h, out_w)->value;
}

ObjectiveParts objective_value(ag::Graph& g, const ObjectiveConfig& cfg, const Tensor& x,
                               ag::Node* theta, const std::vector<Tensor>& u_batch,
                               const ReferenceProvider& references) {
    if (u_batch.empty()) throw ConfigError("objective_value: empty batch");
    if (x.ndim() != 3) throw ShapeError("objective_value: image must be (C,H,W)");
    int H = x.dim(1), W = x.dim(2);
    double sign = cfg.objective == MaskObjective::ssr ? -1.0 : 1.0;

    ag::Node* x_node = g.constant(x);
    ag::Node* batch_total = nullptr;
    ObjectiveParts parts;
    for (size_t b = 0; b < u_batch.size(); ++b) {
        ag::Node* z = concrete_sample(g, theta, u_batch[b], cfg.temperature);
        ag::Node* z_up = g.upsample_bilinear(z, H, W);
        Tensor xhat = references(static_cast<int>(b), z_up->value);
        ag::Node* phi = g.mix(x_node, g.constant(std::move(xhat)), z_up);
        ag::Node* score = cfg.scorer->build(g, phi);
        ag::Node* sparsity = sparsity_node(g, z, cfg.objective);
        parts.score += score->value[0];
        parts.sparsity += sparsity->value[0];
        ag::Node* term = g.add(g.scale(score, sign), g.scale(sparsity, cfg.lambda));
        batch_total = batch_total ? g.add(batch_total, term) : term;
    }
    double inv_b = 1.0 / static_cast<double>(u_batch.size());
    parts.score *= inv_b;
    parts.sparsity *= inv_b;

    ag::Node* obj = g.scale(batch_total, inv_b);
    ag::Node* theta_up = g.upsample_bilinear(theta, H, W);
    ag::Node* tv = g.tv2d(theta_up);
    parts.tv = tv->value[0];
    parts.total = g.add(obj, g.scale(tv, cfg.tv_weight));
    return parts;
}

namespace {

BinaryMask threshold_mask(const Tensor& map, double tau) {
    Tensor m(map.shape());
    for (long long i = 0; i < map.numel(); ++i) m[i] = map[i] > tau ? 1.0 : 0.0;
    return BinaryMask(std::move(m));
}

Tensor draw_uniforms(Rng& rng, int h, int w) {
    Tensor u({h, w});
    for (long long i = 0; i < u.numel(); ++i) u[i] = rng.uniform();
    return u;
}

std::pair<int, int> coarse_dims(const ObjectiveConfig& cfg, int H, int W) {
    int h = cfg.upsample_size > 0 ? cfg.upsample_size : std::max(1, H / 4);
    int w = cfg.upsample_size > 0 ? cfg.upsample_size : std::max(1, W / 4);
    if (h > H || w > W) throw ConfigError("objective: coarse mask cannot exceed the image size");
    return {h, w};
}

double linear_lr(const ObjectiveConfig& cfg, int step) {
    return cfg.learning_rate * (1.0 - static_cast<double>(step) / static_cast<double>(cfg.steps));
}

}  // namespace

FidoResult fido_optimize(const ObjectiveConfig& cfg, const Tensor& x) {
    cfg.validate();
    if (x.ndim() != 3) throw ShapeError("fido_optimize: image must be (C,H,W)");
    int H = x.dim(1), W = x.dim(2);
    auto [ch, cw] = coarse_dims(cfg, H, W);

    const double ell_cap = std::log((1.0 - kThetaMin) / kThetaMin);
    Tensor ell({ch, cw});  // logit parameterization; 0 = theta 0.5

    Rng rng(cfg.seed);
    Adam opt({cfg.learning_rate, 0.9, 0.999, 1e-8});

    // Mask-independent references are computed once and reused.
    Tensor cached_ref;
    bool have_cached = false;
    if (cfg.infill->kind() == InfillKind::mean || cfg.infill->kind() == InfillKind::blur) {
        cached_ref = cfg.infill->infill(x, threshold_mask(Tensor::full({H, W}, 1.0), 0.5));
        have_cached = true;
    }

    FidoResult result;
    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<Tensor> u_batch;
        u_batch.reserve(static_cast<size_t>(cfg.batch_size));
        for (int b = 0; b < cfg.batch_size; ++b) u_batch.push_back(draw_uniforms(rng, ch, cw));

        ag::Graph g;
        ag::Node* ell_node = g.leaf(ell);
        ag::Node* theta = g.sigmoid(ell_node);

        auto references = [&](int, const Tensor& z_up) {
            if (have_cached) return cached_ref;
            // Thresholding the relaxed sample at 0.5 recovers the hard
            // Bernoulli sample driven by the same uniforms.
            return cfg.infill->infill(x, threshold_mask(z_up, 0.5), &rng);
        };

        ObjectiveParts parts = objective_value(g, cfg, x, theta, u_batch, references);
        g.backward(parts.total);

        result.trace.rows.push_back(
            {step, parts.total->value[0], parts.score, parts.sparsity, parts.tv});

        Tensor grad = ell_node->grad;
        std::vector<Tensor*> params{&ell};
        std::vector<const Tensor*> grads{&grad};
        opt.step(params, grads, linear_lr(cfg, step));
        for (long long i = 0; i < ell.numel(); ++i)
            ell[i] = std::min(std::max(ell[i], -ell_cap), ell_cap);
    }

    Tensor theta(ell.shape());
    for (long long i = 0; i < ell.numel(); ++i) {
        double t = 1.0 / (1.0 + std::exp(-ell[i]));
        theta[i] = std::min(std::max(t, kThetaMin), 1.0 - kThetaMin);
    }
    result.params = {std::move(theta), H, W, cfg.objective};
    return result;
}

namespace {

BbmpResult bbmp_run(const ObjectiveConfig& cfg, const Tensor& x, bool thresholded, double tau) {
    cfg.validate();
    if (x.ndim() != 3) throw ShapeError("bbmp: image must be (C,H,W)");
    if (!thresholded && cfg.infill->is_generative())
        throw ConfigError("bbmp: conditional infill strategies need the thresholded variant");
    if (thresholded && (tau < 0.0 || tau > 1.0)) throw ConfigError("bbmp_ca: tau must lie in [0,1]");
    int H = x.dim(1), W = x.dim(2);
    auto [ch, cw] = coarse_dims(cfg, H, W);
    double sign = cfg.objective == MaskObjective::ssr ? -1.0 : 1.0;

    Tensor mask = Tensor::full({ch, cw}, 0.5);
    Rng rng(cfg.seed);
    Adam opt({cfg.learning_rate, 0.9, 0.999, 1e-8});

    Tensor cached_ref;
    bool have_cached = false;
    if (cfg.infill->kind() == InfillKind::mean || cfg.infill->kind() == InfillKind::blur) {
        cached_ref = cfg.infill->infill(x, threshold_mask(Tensor::full({H, W}, 1.0), 0.5));
        have_cached = true;
    }

    BbmpResult result;
    for (int step = 0; step < cfg.steps; ++step) {
        for (long long i = 0; i < mask.numel(); ++i) mask[i] = std::min(std::max(mask[i], 0.0), 1.0);

        ag::Graph g;
        ag::Node* m_node = g.leaf(mask);
        ag::Node* m_up = g.upsample_bilinear(m_node, H, W);

        Tensor xhat;
        if (have_cached) {
            xhat = cached_ref;
        } else if (thresholded) {
            xhat = cfg.infill->infill(x, threshold_mask(m_up->value, tau), &rng);
        } else {
            xhat = cfg.infill->infill(x, threshold_mask(m_up->value, 0.5), &rng);  // random kind
        }

        ag::Node* phi = g.mix(g.constant(x), g.constant(std::move(xhat)), m_up);
        ag::Node* score = cfg.scorer->build(g, phi);
        ag::Node* sparsity = sparsity_node(g, m_node, cfg.objective);
        ag::Node* tv = g.tv2d(m_up);
        ag::Node* total = g.add(g.add(g.scale(score, sign), g.scale(sparsity, cfg.lambda)),
                                g.scale(tv, cfg.tv_weight));
        g.backward(total);

        result.trace.rows.push_back(
            {step, total->value[0], score->value[0], sparsity->value[0], tv->value[0]});

        Tensor grad = m_node->grad;
        std::vector<Tensor*> params{&mask};
        std::vector<const Tensor*> grads{&grad};
        opt.step(params, grads, linear_lr(cfg, step));
    }
    for (long long i = 0; i < mask.numel(); ++i) mask[i] = std::min(std::max(mask[i], 0.0), 1.0);

    result.mask = std::move(mask);
    result.out_h = H;
    result.out_w = W;
    result.objective = cfg.objective;
    return result;
}

}  // namespace

BbmpResult bbmp_optimize(const ObjectiveConfig& cfg, const Tensor& x) {
    return bbmp_run(cfg, x, false, 0.0);
}

BbmpResult bbmp_ca(const ObjectiveConfig& cfg, const Tensor& x, double tau) {
    return bbmp_run(cfg, x, true, tau);
}

Tensor map_mask(const SaliencyParams& params) {
    Tensor up = upsample_values(params.theta, params.out_h, params.out_w);
    for (long long i = 0; i < up.numel(); ++i) up[i] = up[i] > 0.5 ? 1.0 : 0.0;
    return up;
}

Tensor saliency_map(const SaliencyParams& params) {
    Tensor up = upsample_values(params.theta, params.out_h, params.out_w);
    if (params.objective == MaskObjective::sdr)
        for (long long i = 0; i < up.numel(); ++i) up[i] = 1.0 - up[i];
    return up;
}

Tensor saliency_map(const BbmpResult& result) {
    Tensor up = upsample_values(result.mask, result.out_h, result.out_w);
    for (long long i = 0; i < up.numel(); ++i) up[i] = std::min(std::max(up[i], 0.0), 1.0);
    if (result.objective == MaskObjective::sdr)
        for (long long i = 0; i < up.numel(); ++i) up[i] = 1.0 - up[i];
    return up;
}

}  // namespace fido
