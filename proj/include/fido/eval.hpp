#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fido/boxes.hpp"
#include "fido/classifier.hpp"
#include "fido/infill.hpp"
#include "fido/tensor.hpp"

namespace fido {

double iou(const BoundingBox& a, const BoundingBox& b);

// Successive-deletion curve: pixels are dropped in descending saliency order
// (ties broken by row-major index), infilled in one call per step, and the
// score drop is normalized by the all-pixels-infilled drop.
struct FlippingCurve {
    std::vector<long long> pixels;    // cumulative altered pixel counts, 0 .. U
    std::vector<double> suppression;  // starts at 0, ends at 1 exactly

    // Smallest altered-pixel count reaching the target suppression, measured
    // at pixel granularity by linear interpolation between curve points.
    // Empty optional if the target is never reached.
    std::optional<long long> pixels_at(double fraction) const;
};

FlippingCurve flipping_curve(const ClassifierModel& model, int target_class, const Tensor& x,
                             const Tensor& saliency, const InfillStrategy& infiller,
                             double step_fraction, const std::string& image_id, Rng* rng = nullptr);

enum class ThresholdMode { map, alpha_mean };

// Binarized salient set for a saliency map, shared by the WSL and Saliency
// Metric protocols. MAP mode: map > 0.5. AlphaMean mode: min-max normalize
// to [0,1] first, then threshold at alpha * mean of the normalized map.
std::vector<uint8_t> salient_set(const Tensor& saliency, ThresholdMode mode, double alpha);

struct WslVerdict {
    bool correct = false;
    double iou = 0.0;           // best IoU against any ground-truth box
    bool empty_salient = false; // empty set counts as incorrect
    BoundingBox box;            // tight box of the salient set (meaningless when empty)
};

WslVerdict wsl_verdict(const Tensor& saliency, const std::vector<BoundingBox>& ground_truth,
                       ThresholdMode mode, double alpha = 0.0);

// Fraction of incorrect verdicts.
double wsl_error(const std::vector<WslVerdict>& verdicts);

// Grid search over alpha in {0, 0.2, ..., 5.0} minimizing WSL error on a
// holdout set; ties resolve to the smallest alpha.
double alpha_sweep(const std::vector<Tensor>& saliency_maps,
                   const std::vector<std::vector<BoundingBox>>& ground_truth);

// log(max(area_fraction, 0.05)) - log(max(p, 1e-7)); lower is better.
double saliency_metric_value(double area_fraction, double p);

// Full protocol: binarize, take the tight box, crop, bilinear-upscale to the
// input size, score the in-class probability. An empty salient set falls
// back to the full-image box and sets *empty_fallback.
double saliency_metric(const Tensor& saliency, const ClassifierModel& model, int target_class,
                       const Tensor& x, ThresholdMode mode, double alpha = 0.0,
                       bool* empty_fallback = nullptr);

struct InfillQualityStats {
    std::string name;
    double median = 0, q25 = 0, q75 = 0;
    std::vector<double> probs;  // one in-class probability per (image, trial)
};

// Drops a uniformly random pixel subset per (image, trial), infills with
// each strategy (same mask for all, for pairing) and records the in-class
// probability of the composite. Deterministic given seed.
std::vector<InfillQualityStats> infill_quality(const ClassifierModel& model,
                                               const LabeledImageSet& set,
                                               const std::vector<const InfillStrategy*>& infillers,
                                               double drop_fraction, int trials, uint64_t seed);

struct BaselineMaps {
    Tensor max;     // all ones
    Tensor center;  // centered box covering half the image area
    Tensor grad;    // channel-max absolute input gradient, normalized to [0,1]
};

BaselineMaps baselines(const ClassifierModel& model, int target_class, const Tensor& x);

struct EvaluationRecord {
    std::string image_id;
    std::string method;
    bool wsl_correct = false;
    double iou = 0.0;
    double saliency_metric = 0.0;
    long long px_at_50 = -1;  // -1 encodes "never reached"
    long long px_at_75 = -1;
    long long px_at_90 = -1;
};

// Fixed column order: image_id,method,wsl_correct,iou,saliency_metric,
// px_at_50,px_at_75,px_at_90.
void save_records_csv(const std::vector<EvaluationRecord>& records, const std::string& path,
                      const std::string& header_comment = "");

}  // namespace fido
