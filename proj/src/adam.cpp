#include "fido/adam.hpp"

#include <cmath>

namespace fido {

void Adam::step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
    step(params, grads, cfg_.learning_rate);
}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
                double learning_rate) {
    if (params.size() != grads.size())
        throw ConfigError("adam: parameter and gradient group sizes differ");
    if (slots_.empty()) {
        slots_.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            slots_[i].m = Tensor(params[i]->shape());
            slots_[i].v = Tensor(params[i]->shape());
        }
    }
    if (slots_.size() != params.size())
        throw ConfigError("adam: parameter group size changed between steps");

    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        if (!p.same_shape(g))
            throw ShapeError("adam: gradient shape " + g.shape_str() + " does not match parameter " +
                             p.shape_str());
        Slot& s = slots_[i];
        for (long long k = 0; k < p.numel(); ++k) {
            s.m[k] = cfg_.beta1 * s.m[k] + (1.0 - cfg_.beta1) * g[k];
            s.v[k] = cfg_.beta2 * s.v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
            double mhat = s.m[k] / bc1;
            double vhat = s.v[k] / bc2;
            p[k] -= learning_rate * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace fido
