#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fido/autodiff.hpp"
#include "fido/classifier.hpp"
#include "fido/infill.hpp"
#include "fido/tensor.hpp"

namespace fido {

enum class MaskObjective { ssr, sdr };

std::string objective_name(MaskObjective o);
MaskObjective objective_from_name(const std::string& name);

// Retention probabilities are kept strictly inside (0,1).
inline constexpr double kThetaMin = 1e-4;

// Classifier-confidence score as a differentiable graph; the mask objective
// only needs this surface, so tests can plug in analytic scorers.
struct Scorer {
    virtual ~Scorer() = default;
    virtual ag::Node* build(ag::Graph& g, ag::Node* image) const = 0;
};

class LogOddsScorer : public Scorer {
  public:
    LogOddsScorer(const ClassifierModel& model, int target_class)
        : model_(&model), target_class_(target_class) {}
    ag::Node* build(ag::Graph& g, ag::Node* image) const override {
        return model_->log_odds_node(g, target_class_, image);
    }

  private:
    const ClassifierModel* model_;
    int target_class_;
};

struct ObjectiveConfig {
    MaskObjective objective = MaskObjective::ssr;
    double lambda = 1.0;        // sparsity weight (see kDefaultLambda)
    double tv_weight = 0.01;    // total-variation weight
    double temperature = 0.1;   // Concrete relaxation temperature
    int batch_size = 8;
    int steps = 300;
    double learning_rate = 0.05;  // decays linearly to 0 across steps
    int upsample_size = 0;        // coarse mask side; 0 = image side / 4
    uint64_t seed = 0;
    const Scorer* scorer = nullptr;
    const InfillStrategy* infill = nullptr;

    void validate() const;
};

// Default sparsity weight, calibrated once on the synthetic shapes corpus so
// the supporting region stays compact, then frozen.
inline constexpr double kDefaultLambda = 2.0;

// Per-cell retention probabilities at coarse resolution. For SSR high theta
// marks the supporting (salient) region; for SDR low theta marks the
// deletion (salient) region.
struct SaliencyParams {
    Tensor theta;  // (h',w'), all values in [kThetaMin, 1-kThetaMin]
    int out_h = 0;
    int out_w = 0;
    MaskObjective objective = MaskObjective::ssr;
};

struct TraceRow {
    int step;
    double objective;  // full objective (score + sparsity + tv terms)
    double score;      // batch-mean classifier score
    double sparsity;   // batch-mean sparsity term (unweighted)
    double tv;         // total-variation term (unweighted)
};

struct OptimTrace {
    std::vector<TraceRow> rows;
};

void save_trace_csv(const OptimTrace& trace, const std::string& path,
                    const std::string& header_comment = "");

// Relaxed Bernoulli sample z = sigmoid((logit(theta) + logit(u)) / t),
// elementwise, differentiable w.r.t. theta. u must lie strictly in (0,1).
ag::Node* concrete_sample(ag::Graph& g, ag::Node* theta, const Tensor& u, double temperature);

// Size of the salient region, normalized per cell so weights transfer
// across resolutions. SSR penalizes the retained fraction mean(z); SDR
// penalizes the dropped fraction mean(1-z).
double sparsity_term(const Tensor& z, MaskObjective objective);
ag::Node* sparsity_node(ag::Graph& g, ag::Node* z, MaskObjective objective);

// Mean squared difference over spatially adjacent pairs of a 2-D map.
double tv_penalty(const Tensor& map);

// Supplies the reference image for one relaxed mask sample. The optimizer
// thresholds the upsampled mask at 0.5 (which reproduces the hard Bernoulli
// sample driven by the same uniforms) and infills; gradient checks freeze
// references instead. References are constants: no gradient flows through
// the infiller.
using ReferenceProvider = std::function<Tensor(int batch_index, const Tensor& z_up_values)>;

struct ObjectiveParts {
    ag::Node* total = nullptr;
    double score = 0;     // batch-mean score value
    double sparsity = 0;  // batch-mean sparsity value (unweighted)
    double tv = 0;        // tv value (unweighted)
};

// Builds mean_b[sign * score(mix(x, xhat_b, up(z_b))) + lambda * sparsity(z_b)]
// + tv_weight * tv(up(theta)) with z_b = concrete_sample(theta, u_b).
// sign is -1 for SSR (score maximized) and +1 for SDR.
ObjectiveParts objective_value(ag::Graph& g, const ObjectiveConfig& cfg, const Tensor& x,
                               ag::Node* theta, const std::vector<Tensor>& u_batch,
                               const ReferenceProvider& references);

struct FidoResult {
    SaliencyParams params;
    OptimTrace trace;
};

// Stochastic mask-distribution optimization: theta starts at 0.5, Adam on
// the logit reparameterization, Concrete-relaxed samples, one reference per
// sample per step. Deterministic given cfg.seed.
FidoResult fido_optimize(const ObjectiveConfig& cfg, const Tensor& x);

struct BbmpResult {
    Tensor mask;  // (h',w') continuous in [0,1]
    int out_h = 0;
    int out_w = 0;
    MaskObjective objective = MaskObjective::ssr;
    OptimTrace trace;
};

// Direct gradient descent on a single continuous mask, clipped to [0,1]
// each step. The reference is computed once (Mean/Blur) or resampled per
// step (Random); generative strategies go through bbmp_ca instead.
BbmpResult bbmp_optimize(const ObjectiveConfig& cfg, const Tensor& x);

// BBMP variant that drives a conditional infiller by thresholding the
// continuous mask at tau each step before composing with the relaxed mask.
BbmpResult bbmp_ca(const ObjectiveConfig& cfg, const Tensor& x, double tau);

// Plain bilinear resize of a 2-D map (same kernel as the graph op).
Tensor upsample_values(const Tensor& map, int out_h, int out_w);

// MAP mask: indicator(upsample(theta) > 0.5), strict inequality.
Tensor map_mask(const SaliencyParams& params);

// Full-resolution map oriented so that high values mark salient pixels
// (theta for SSR, 1-theta for SDR).
Tensor saliency_map(const SaliencyParams& params);
Tensor saliency_map(const BbmpResult& result);

}  // namespace fido
