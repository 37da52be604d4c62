#include "fido/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "fido/mask_opt.hpp"

namespace fido {

double iou(const BoundingBox& a, const BoundingBox& b) {
    long long ix = std::max(0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
    long long iy = std::max(0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
    long long inter = ix * iy;
    long long uni = a.area() + b.area() - inter;
    return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

std::optional<long long> FlippingCurve::pixels_at(double fraction) const {
    for (size_t i = 0; i < suppression.size(); ++i) {
        if (suppression[i] >= fraction) {
            if (i == 0) return pixels[0];
            double s0 = suppression[i - 1], s1 = suppression[i];
            double k0 = static_cast<double>(pixels[i - 1]), k1 = static_cast<double>(pixels[i]);
            double crossing = k0 + (fraction - s0) * (k1 - k0) / (s1 - s0);
            return static_cast<long long>(std::ceil(crossing - 1e-12));
        }
    }
    return std::nullopt;
}

FlippingCurve flipping_curve(const ClassifierModel& model, int target_class, const Tensor& x,
                             const Tensor& saliency, const InfillStrategy& infiller,
                             double step_fraction, const std::string& image_id, Rng* rng) {
    if (!(step_fraction > 0.0 && step_fraction <= 0.1))
        throw ConfigError("flipping_curve: step_fraction must lie in (0, 0.1]");
    int H = x.dim(1), W = x.dim(2);
    if (saliency.ndim() != 2 || saliency.dim(0) != H || saliency.dim(1) != W)
        throw ShapeError("flipping_curve: saliency " + saliency.shape_str() +
                         " does not match image " + x.shape_str());
    long long U = static_cast<long long>(H) * W;

    std::vector<long long> order(static_cast<size_t>(U));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](long long a, long long b) {
        return saliency[a] > saliency[b];  // descending; stable keeps row-major ties
    });

    long long per_step = std::max<long long>(1, std::llround(step_fraction * static_cast<double>(U)));

    std::vector<long long> counts{0};
    std::vector<double> raw{model.log_odds(target_class, x)};

    Tensor mask = Tensor::full({H, W}, 1.0);
    long long altered = 0;
    while (altered < U) {
        long long k = std::min(per_step, U - altered);
        for (long long i = 0; i < k; ++i) mask[order[static_cast<size_t>(altered + i)]] = 0.0;
        altered += k;
        BinaryMask bm(mask);
        Tensor xhat = infiller.infill(x, bm, rng);
        Tensor phi = compose(x, xhat, mask);
        counts.push_back(altered);
        raw.push_back(model.log_odds(target_class, phi));
    }

    double s0 = raw.front();
    double s_full = raw.back();
    if (s0 == s_full)
        throw NumericError("flipping_curve: degenerate normalization (s0 == s_full) for image " +
                           image_id);

    FlippingCurve curve;
    curve.pixels = std::move(counts);
    curve.suppression.reserve(raw.size());
    for (double s : raw) curve.suppression.push_back((s0 - s) / (s0 - s_full));
    return curve;
}

// ---------------------------------------------------------------------------
// thresholding, WSL, saliency metric

std::vector<uint8_t> salient_set(const Tensor& saliency, ThresholdMode mode, double alpha) {
    if (saliency.ndim() != 2) throw ShapeError("salient_set: saliency must be (H,W)");
    std::vector<uint8_t> out(static_cast<size_t>(saliency.numel()), 0);
    if (mode == ThresholdMode::map) {
        for (long long i = 0; i < saliency.numel(); ++i) out[static_cast<size_t>(i)] = saliency[i] > 0.5;
        return out;
    }
    if (alpha < 0) throw ConfigError("salient_set: alpha must be >= 0");
    double lo = saliency.min(), hi = saliency.max();
    double span = hi - lo;
    if (span <= 0.0) return out;  // constant map normalizes to zero: empty set
    double mean = 0;
    for (long long i = 0; i < saliency.numel(); ++i) mean += (saliency[i] - lo) / span;
    mean /= static_cast<double>(saliency.numel());
    double threshold = alpha * mean;
    for (long long i = 0; i < saliency.numel(); ++i)
        out[static_cast<size_t>(i)] = (saliency[i] - lo) / span > threshold;
    return out;
}

namespace {

std::optional<BoundingBox> tight_box(const std::vector<uint8_t>& salient, int H, int W) {
    int min_x = W, min_y = H, max_x = -1, max_y = -1;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            if (salient[static_cast<size_t>(y) * W + x]) {
                min_x = std::min(min_x, x);
                min_y = std::min(min_y, y);
                max_x = std::max(max_x, x);
                max_y = std::max(max_y, y);
            }
    if (max_x < 0) return std::nullopt;
    return BoundingBox{min_x, min_y, max_x + 1, max_y + 1};
}

}  // namespace

WslVerdict wsl_verdict(const Tensor& saliency, const std::vector<BoundingBox>& ground_truth,
                       ThresholdMode mode, double alpha) {
    if (ground_truth.empty()) throw ConfigError("wsl_verdict: no ground-truth boxes for image");
    int H = saliency.dim(0), W = saliency.dim(1);
    auto salient = salient_set(saliency, mode, alpha);
    auto box = tight_box(salient, H, W);

    WslVerdict v;
    if (!box) {
        v.empty_salient = true;  // no salient pixels: counted as incorrect
        return v;
    }
    v.box = *box;
    for (const BoundingBox& gt : ground_truth) v.iou = std::max(v.iou, iou(*box, gt));
    v.correct = v.iou > 0.5;
    return v;
}

double wsl_error(const std::vector<WslVerdict>& verdicts) {
    if (verdicts.empty()) throw ConfigError("wsl_error: no verdicts");
    long long wrong = 0;
    for (const WslVerdict& v : verdicts)
        if (!v.correct) ++wrong;
    return static_cast<double>(wrong) / static_cast<double>(verdicts.size());
}

double alpha_sweep(const std::vector<Tensor>& saliency_maps,
                   const std::vector<std::vector<BoundingBox>>& ground_truth) {
    if (saliency_maps.size() != ground_truth.size() || saliency_maps.empty())
        throw ConfigError("alpha_sweep: need parallel non-empty maps and boxes");
    double best_alpha = 0.0;
    double best_error = 2.0;
    for (int step = 0; step <= 25; ++step) {
        double alpha = 0.2 * step;
        std::vector<WslVerdict> verdicts;
        verdicts.reserve(saliency_maps.size());
        for (size_t i = 0; i < saliency_maps.size(); ++i)
            verdicts.push_back(
                wsl_verdict(saliency_maps[i], ground_truth[i], ThresholdMode::alpha_mean, alpha));
        double err = wsl_error(verdicts);
        if (err < best_error) {
            best_error = err;
            best_alpha = alpha;
        }
    }
    return best_alpha;
}

double saliency_metric_value(double area_fraction, double p) {
    return std::log(std::max(area_fraction, 0.05)) - std::log(std::max(p, 1e-7));
}

double saliency_metric(const Tensor& saliency, const ClassifierModel& model, int target_class,
                       const Tensor& x, ThresholdMode mode, double alpha, bool* empty_fallback) {
    int H = x.dim(1), W = x.dim(2);
    auto salient = salient_set(saliency, mode, alpha);
    auto box = tight_box(salient, H, W);
    if (empty_fallback) *empty_fallback = !box.has_value();
    BoundingBox a = box.value_or(BoundingBox{0, 0, W, H});  // empty set: full image

    double area_fraction =
        static_cast<double>(a.area()) / (static_cast<double>(H) * static_cast<double>(W));

    int bh = a.y_max - a.y_min, bw = a.x_max - a.x_min;
    Tensor crop({3, bh, bw});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < bh; ++y)
            for (int j = 0; j < bw; ++j) crop.at(c, y, j) = x.at(c, a.y_min + y, a.x_min + j);

    ag::Graph g;
    Tensor upscaled = g.upsample_bilinear(g.leaf(crop), H, W)->value;
    double p = model.predict_probs(upscaled)[target_class];
    return saliency_metric_value(area_fraction, p);
}

// ---------------------------------------------------------------------------
// infill-quality probe

namespace {

double percentile(std::vector<double> sorted, double q) {
    double pos = q * static_cast<double>(sorted.size() - 1);
    size_t lo = static_cast<size_t>(pos);
    size_t hi = std::min(lo + 1, sorted.size() - 1);
    double t = pos - static_cast<double>(lo);
    return (1 - t) * sorted[lo] + t * sorted[hi];
}

}  // namespace

std::vector<InfillQualityStats> infill_quality(const ClassifierModel& model,
                                               const LabeledImageSet& set,
                                               const std::vector<const InfillStrategy*>& infillers,
                                               double drop_fraction, int trials, uint64_t seed) {
    if (!(drop_fraction > 0.0 && drop_fraction < 1.0))
        throw ConfigError("infill_quality: drop_fraction must lie in (0,1)");
    if (trials < 1) throw ConfigError("infill_quality: trials must be >= 1");
    if (set.images.empty() || infillers.empty())
        throw ConfigError("infill_quality: empty image set or infiller list");

    std::vector<InfillQualityStats> stats(infillers.size());
    for (size_t f = 0; f < infillers.size(); ++f) stats[f].name = infillers[f]->name();

    for (size_t i = 0; i < set.size(); ++i) {
        const Tensor& x = set.images[i];
        int H = x.dim(1), W = x.dim(2);
        long long U = static_cast<long long>(H) * W;
        long long drop = std::max<long long>(1, std::llround(drop_fraction * static_cast<double>(U)));
        for (int t = 0; t < trials; ++t) {
            Rng mask_rng = Rng::derive(seed, {static_cast<uint64_t>(i), static_cast<uint64_t>(t)});
            std::vector<long long> idx(static_cast<size_t>(U));
            std::iota(idx.begin(), idx.end(), 0);
            mask_rng.shuffle(idx);
            Tensor mask = Tensor::full({H, W}, 1.0);
            for (long long k = 0; k < drop; ++k) mask[idx[static_cast<size_t>(k)]] = 0.0;
            BinaryMask bm(mask);

            for (size_t f = 0; f < infillers.size(); ++f) {
                Rng fill_rng =
                    Rng::derive(seed, {static_cast<uint64_t>(i), static_cast<uint64_t>(t), 100 + f});
                Tensor xhat = infillers[f]->infill(x, bm, &fill_rng);
                Tensor phi = compose(x, xhat, mask);
                double p = model.predict_probs(phi)[set.labels[i]];
                stats[f].probs.push_back(p);
            }
        }
    }

    for (InfillQualityStats& s : stats) {
        std::vector<double> sorted = s.probs;
        std::sort(sorted.begin(), sorted.end());
        s.median = percentile(sorted, 0.5);
        s.q25 = percentile(sorted, 0.25);
        s.q75 = percentile(sorted, 0.75);
    }
    return stats;
}

// ---------------------------------------------------------------------------
// baselines

BaselineMaps baselines(const ClassifierModel& model, int target_class, const Tensor& x) {
    int H = x.dim(1), W = x.dim(2);
    BaselineMaps maps;
    maps.max = Tensor::full({H, W}, 1.0);

    // Centered box with half the image area: side = round(s / sqrt(2)).
    int bh = static_cast<int>(std::lround(H / std::sqrt(2.0)));
    int bw = static_cast<int>(std::lround(W / std::sqrt(2.0)));
    int y0 = (H - bh) / 2, x0 = (W - bw) / 2;
    maps.center = Tensor({H, W});
    for (int y = y0; y < y0 + bh; ++y)
        for (int j = x0; j < x0 + bw; ++j) maps.center.at(y, j) = 1.0;

    Tensor grad = model.input_gradient(target_class, x);
    maps.grad = Tensor({H, W});
    double peak = 0;
    for (int y = 0; y < H; ++y)
        for (int j = 0; j < W; ++j) {
            double m = 0;
            for (int c = 0; c < 3; ++c) m = std::max(m, std::fabs(grad.at(c, y, j)));
            maps.grad.at(y, j) = m;
            peak = std::max(peak, m);
        }
    if (peak > 0)
        for (long long i = 0; i < maps.grad.numel(); ++i) maps.grad[i] /= peak;
    return maps;
}

void save_records_csv(const std::vector<EvaluationRecord>& records, const std::string& path,
                      const std::string& header_comment) {
    std::ofstream out(path);
    if (!out) throw ConfigError("save_records_csv: cannot open " + path + " for writing");
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "image_id,method,wsl_correct,iou,saliency_metric,px_at_50,px_at_75,px_at_90\n";
    char buf[256];
    for (const EvaluationRecord& r : records) {
        std::snprintf(buf, sizeof buf, "%s,%s,%d,%.17g,%.17g,%lld,%lld,%lld\n", r.image_id.c_str(),
                      r.method.c_str(), r.wsl_correct ? 1 : 0, r.iou, r.saliency_metric, r.px_at_50,
                      r.px_at_75, r.px_at_90);
        out << buf;
    }
}

}  // namespace fido
