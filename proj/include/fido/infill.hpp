#pragma once

#include <array>
#include <string>
#include <vector>

#include "fido/rng.hpp"
#include "fido/tensor.hpp"

namespace fido {

// Full-resolution pixel mask shared across channels. 1 = observed/kept,
// 0 = dropped (to be replaced by reference values).
struct BinaryMask {
    Tensor values;  // (H,W), every element exactly 0 or 1

    explicit BinaryMask(Tensor v);
    int height() const { return values.dim(0); }
    int width() const { return values.dim(1); }
    bool observed(int y, int x) const { return values.at(y, x) != 0.0; }
    long long dropped_count() const;
};

enum class InfillKind { mean, blur, random, local, harmonic };

std::string infill_kind_name(InfillKind k);
InfillKind infill_kind_from_name(const std::string& name);

struct InfillParams {
    double blur_sigma_base = 10.0;  // Gaussian sigma at the 224-pixel reference scale
    double random_sigma = 0.2;      // noise added to the uniform base color
    int local_window_base = 15;     // window side at the 224-pixel reference scale
    double harmonic_tol = 1e-6;     // Gauss-Seidel stop: max update below this
    int harmonic_max_sweeps = 10000;
};

// Produces reference images xhat for dropped pixels. Mean/Blur/Random ignore
// the mask (heuristics); Local/Harmonic condition on the observed pixels and
// reproduce them exactly. Immutable after construction; stochastic state
// (Random only) lives in the caller-owned Rng.
class InfillStrategy {
  public:
    InfillStrategy(InfillKind kind, std::array<double, 3> dataset_channel_means,
                   InfillParams params = {}, uint64_t rng_seed = 0);

    InfillKind kind() const { return kind_; }
    std::string name() const { return infill_kind_name(kind_); }
    const InfillParams& params() const { return params_; }
    const std::array<double, 3>& means() const { return means_; }
    uint64_t rng_seed() const { return rng_seed_; }

    bool is_generative() const { return kind_ == InfillKind::local || kind_ == InfillKind::harmonic; }
    bool is_stochastic() const { return kind_ == InfillKind::random; }
    // Heuristic references do not depend on the mask and can be cached per image.
    bool mask_independent() const {
        return kind_ == InfillKind::mean || kind_ == InfillKind::blur || kind_ == InfillKind::random;
    }

    // x: (C,H,W) in [0,1]. Returns xhat with the same shape, clamped to [0,1].
    // rng is only consulted by the Random kind and may be null otherwise.
    Tensor infill(const Tensor& x, const BinaryMask& z, Rng* rng = nullptr) const;

    Rng make_run_rng() const { return Rng(rng_seed_); }

  private:
    Tensor infill_mean(const Tensor& x) const;
    Tensor infill_blur(const Tensor& x) const;
    Tensor infill_random(const Tensor& x, Rng& rng) const;
    Tensor infill_local(const Tensor& x, const BinaryMask& z) const;
    Tensor infill_harmonic(const Tensor& x, const BinaryMask& z) const;

    InfillKind kind_;
    std::array<double, 3> means_;
    InfillParams params_;
    uint64_t rng_seed_;
};

// Normalized 1-D Gaussian taps truncated at 3 sigma (odd length, sums to 1).
std::vector<double> blur_kernel(double sigma);

// Convex mixture z*x + (1-z)*xhat. z is an (H,W) map in [0,1] shared across
// channels (or exactly the image shape). Binary z gives the hard composite;
// continuous z is the relaxed mixture used by the optimizers.
Tensor compose(const Tensor& x, const Tensor& xhat, const Tensor& z);

}  // namespace fido
