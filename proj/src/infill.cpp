#include "fido/infill.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace fido {

BinaryMask::BinaryMask(Tensor v) : values(std::move(v)) {
    if (values.ndim() != 2) throw ShapeError("binary mask must be (H,W), got " + values.shape_str());
    for (long long i = 0; i < values.numel(); ++i)
        if (values[i] != 0.0 && values[i] != 1.0)
            throw ConfigError("binary mask contains a value that is neither 0 nor 1");
}

long long BinaryMask::dropped_count() const {
    long long n = 0;
    for (long long i = 0; i < values.numel(); ++i)
        if (values[i] == 0.0) ++n;
    return n;
}

std::string infill_kind_name(InfillKind k) {
    switch (k) {
        case InfillKind::mean: return "mean";
        case InfillKind::blur: return "blur";
        case InfillKind::random: return "random";
        case InfillKind::local: return "local";
        case InfillKind::harmonic: return "harmonic";
    }
    return "?";
}

InfillKind infill_kind_from_name(const std::string& name) {
    if (name == "mean") return InfillKind::mean;
    if (name == "blur") return InfillKind::blur;
    if (name == "random") return InfillKind::random;
    if (name == "local") return InfillKind::local;
    if (name == "harmonic") return InfillKind::harmonic;
    throw ConfigError("unknown infill strategy '" + name + "'");
}

InfillStrategy::InfillStrategy(InfillKind kind, std::array<double, 3> dataset_channel_means,
                               InfillParams params, uint64_t rng_seed)
    : kind_(kind), means_(dataset_channel_means), params_(params), rng_seed_(rng_seed) {
    if (!(params_.blur_sigma_base > 0)) throw ConfigError("infill: blur sigma must be positive");
    if (!(params_.random_sigma > 0)) throw ConfigError("infill: random sigma must be positive");
    if (params_.local_window_base < 1 || params_.local_window_base % 2 == 0)
        throw ConfigError("infill: local window must be a positive odd size");
    if (!(params_.harmonic_tol > 0)) throw ConfigError("infill: harmonic tolerance must be positive");
    if (params_.harmonic_max_sweeps < 1) throw ConfigError("infill: harmonic sweep cap must be >= 1");
    for (double m : means_)
        if (m < 0.0 || m > 1.0) throw ConfigError("infill: channel means must lie in [0,1]");
}

namespace {

void check_image(const Tensor& x) {
    if (x.ndim() != 3 || x.dim(0) != 3)
        throw ShapeError("infill: image must be (3,H,W), got " + x.shape_str());
}

Tensor clamp01(Tensor t) {
    for (long long i = 0; i < t.numel(); ++i) t[i] = std::min(std::max(t[i], 0.0), 1.0);
    return t;
}

}  // namespace

Tensor InfillStrategy::infill(const Tensor& x, const BinaryMask& z, Rng* rng) const {
    check_image(x);
    if (z.height() != x.dim(1) || z.width() != x.dim(2))
        throw ShapeError("infill: mask " + z.values.shape_str() + " does not match image " +
                         x.shape_str());
    switch (kind_) {
        case InfillKind::mean: return infill_mean(x);
        case InfillKind::blur: return infill_blur(x);
        case InfillKind::random: {
            if (!rng) throw ConfigError("infill: random strategy needs an rng");
            return infill_random(x, *rng);
        }
        case InfillKind::local: return infill_local(x, z);
        case InfillKind::harmonic: return infill_harmonic(x, z);
    }
    throw ConfigError("infill: unreachable kind");
}

Tensor InfillStrategy::infill_mean(const Tensor& x) const {
    Tensor out(x.shape());
    long long plane = static_cast<long long>(x.dim(1)) * x.dim(2);
    for (int c = 0; c < 3; ++c)
        for (long long p = 0; p < plane; ++p) out[c * plane + p] = means_[static_cast<size_t>(c)];
    return out;
}

std::vector<double> blur_kernel(double sigma) {
    if (!(sigma > 0)) throw ConfigError("blur_kernel: sigma must be positive");
    int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> taps(static_cast<size_t>(2 * radius + 1));
    double total = 0;
    for (int k = -radius; k <= radius; ++k) {
        double w = std::exp(-0.5 * (k / sigma) * (k / sigma));
        taps[static_cast<size_t>(k + radius)] = w;
        total += w;
    }
    for (double& w : taps) w /= total;
    return taps;
}

Tensor InfillStrategy::infill_blur(const Tensor& x) const {
    int H = x.dim(1), W = x.dim(2);
    double sigma = params_.blur_sigma_base * static_cast<double>(H) / 224.0;
    std::vector<double> taps = blur_kernel(sigma);
    int radius = static_cast<int>(taps.size() / 2);

    // Separable convolution; at borders the in-bounds taps are renormalized,
    // which keeps constants exactly constant.
    Tensor tmp(x.shape());
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < H; ++y)
            for (int j = 0; j < W; ++j) {
                double acc = 0, wsum = 0;
                for (int k = -radius; k <= radius; ++k) {
                    int jj = j + k;
                    if (jj < 0 || jj >= W) continue;
                    double w = taps[static_cast<size_t>(k + radius)];
                    acc += w * x.at(c, y, jj);
                    wsum += w;
                }
                tmp.at(c, y, j) = acc / wsum;
            }
    Tensor out(x.shape());
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < H; ++y)
            for (int j = 0; j < W; ++j) {
                double acc = 0, wsum = 0;
                for (int k = -radius; k <= radius; ++k) {
                    int yy = y + k;
                    if (yy < 0 || yy >= H) continue;
                    double w = taps[static_cast<size_t>(k + radius)];
                    acc += w * tmp.at(c, yy, j);
                    wsum += w;
                }
                out.at(c, y, j) = acc / wsum;
            }
    return clamp01(std::move(out));
}

Tensor InfillStrategy::infill_random(const Tensor& x, Rng& rng) const {
    Tensor out(x.shape());
    for (long long i = 0; i < out.numel(); ++i)
        out[i] = rng.uniform() + params_.random_sigma * rng.gaussian();
    return clamp01(std::move(out));
}

Tensor InfillStrategy::infill_local(const Tensor& x, const BinaryMask& z) const {
    int H = x.dim(1), W = x.dim(2);
    int window = std::max(3, static_cast<int>(std::lround(params_.local_window_base * H / 224.0)));
    if (window % 2 == 0) ++window;
    int r = window / 2;

    Tensor out = x;
    for (int y = 0; y < H; ++y)
        for (int j = 0; j < W; ++j) {
            if (z.observed(y, j)) continue;
            double acc[3] = {0, 0, 0};
            int count = 0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    int yy = y + dy, jj = j + dx;
                    if (yy < 0 || yy >= H || jj < 0 || jj >= W) continue;
                    if (!z.observed(yy, jj)) continue;
                    for (int c = 0; c < 3; ++c) acc[c] += x.at(c, yy, jj);
                    ++count;
                }
            for (int c = 0; c < 3; ++c)
                out.at(c, y, j) = count > 0 ? acc[c] / count : means_[static_cast<size_t>(c)];
        }
    return clamp01(std::move(out));
}

Tensor InfillStrategy::infill_harmonic(const Tensor& x, const BinaryMask& z) const {
    int H = x.dim(1), W = x.dim(2);
    long long dropped_total = z.dropped_count();
    if (dropped_total == 0) return x;
    if (dropped_total == static_cast<long long>(H) * W) return infill_mean(x);  // no boundary exists

    // Connected components of the dropped region (4-connectivity) so every
    // region can start from the mean of its own Dirichlet boundary. That
    // keeps all Gauss-Seidel iterates inside the boundary range, which makes
    // the discrete maximum principle hold at any stopping tolerance.
    std::vector<int> component(static_cast<size_t>(H) * W, -1);
    std::vector<std::vector<int>> members;  // flat pixel indices per component
    for (int y = 0; y < H; ++y)
        for (int j = 0; j < W; ++j) {
            int p = y * W + j;
            if (z.observed(y, j) || component[static_cast<size_t>(p)] >= 0) continue;
            int id = static_cast<int>(members.size());
            members.emplace_back();
            std::queue<int> frontier;
            frontier.push(p);
            component[static_cast<size_t>(p)] = id;
            while (!frontier.empty()) {
                int q = frontier.front();
                frontier.pop();
                members[static_cast<size_t>(id)].push_back(q);
                int qy = q / W, qx = q % W;
                const int ny[4] = {qy - 1, qy + 1, qy, qy};
                const int nx[4] = {qx, qx, qx - 1, qx + 1};
                for (int k = 0; k < 4; ++k) {
                    if (ny[k] < 0 || ny[k] >= H || nx[k] < 0 || nx[k] >= W) continue;
                    int np = ny[k] * W + nx[k];
                    if (!z.observed(ny[k], nx[k]) && component[static_cast<size_t>(np)] < 0) {
                        component[static_cast<size_t>(np)] = id;
                        frontier.push(np);
                    }
                }
            }
        }

    Tensor out = x;
    long long plane = static_cast<long long>(H) * W;
    for (int c = 0; c < 3; ++c) {
        double* v = out.data() + c * plane;

        // Boundary means per component for the initial guess.
        std::vector<double> bsum(members.size(), 0.0);
        std::vector<long long> bcount(members.size(), 0);
        for (size_t id = 0; id < members.size(); ++id)
            for (int p : members[id]) {
                int py = p / W, px = p % W;
                const int ny[4] = {py - 1, py + 1, py, py};
                const int nx[4] = {px, px, px - 1, px + 1};
                for (int k = 0; k < 4; ++k) {
                    if (ny[k] < 0 || ny[k] >= H || nx[k] < 0 || nx[k] >= W) continue;
                    if (z.observed(ny[k], nx[k])) {
                        bsum[id] += v[ny[k] * W + nx[k]];
                        ++bcount[id];
                    }
                }
            }
        for (size_t id = 0; id < members.size(); ++id) {
            double init = bcount[id] > 0 ? bsum[id] / static_cast<double>(bcount[id])
                                         : means_[static_cast<size_t>(c)];
            for (int p : members[id]) v[p] = init;
        }

        // In-place sweeps in row-major order over all dropped pixels.
        std::vector<int> order;
        order.reserve(static_cast<size_t>(dropped_total));
        for (int p = 0; p < static_cast<int>(plane); ++p)
            if (component[static_cast<size_t>(p)] >= 0) order.push_back(p);

        for (int sweep = 0; sweep < params_.harmonic_max_sweeps; ++sweep) {
            double max_update = 0;
            for (int p : order) {
                int py = p / W, px = p % W;
                double acc = 0;
                int count = 0;
                if (py > 0) { acc += v[p - W]; ++count; }
                if (py + 1 < H) { acc += v[p + W]; ++count; }
                if (px > 0) { acc += v[p - 1]; ++count; }
                if (px + 1 < W) { acc += v[p + 1]; ++count; }
                double next = acc / count;
                max_update = std::max(max_update, std::fabs(next - v[p]));
                v[p] = next;
            }
            if (max_update < params_.harmonic_tol) break;
        }
    }
    return clamp01(std::move(out));
}

Tensor compose(const Tensor& x, const Tensor& xhat, const Tensor& z) {
    if (!x.same_shape(xhat))
        throw ShapeError("compose: image shapes differ: " + x.shape_str() + " vs " + xhat.shape_str());
    bool shared;
    if (z.same_shape(x)) {
        shared = false;
    } else if (x.ndim() == 3 && z.ndim() == 2 && z.dim(0) == x.dim(1) && z.dim(1) == x.dim(2)) {
        shared = true;
    } else {
        throw ShapeError("compose: mask shape " + z.shape_str() + " incompatible with image " +
                         x.shape_str());
    }
    for (long long i = 0; i < z.numel(); ++i)
        if (z[i] < 0.0 || z[i] > 1.0) throw ConfigError("compose: mask values must lie in [0,1]");

    long long plane = shared ? z.numel() : 0;
    Tensor out(x.shape());
    for (long long i = 0; i < x.numel(); ++i) {
        double zi = z[shared ? i % plane : i];
        out[i] = zi * x[i] + (1.0 - zi) * xhat[i];
    }
    return out;
}

}  // namespace fido
