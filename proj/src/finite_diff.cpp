#include "fido/finite_diff.hpp"

#include <cmath>

namespace fido {

double eval_scalar_fn(const ScalarFn& f, const Tensor& x) {
    ag::Graph g;
    ag::Node* root = f(g, g.leaf(x));
    if (root->value.numel() != 1)
        throw ShapeError("finite_diff_check: function is not scalar-valued");
    return root->value[0];
}

double finite_diff_check(const ScalarFn& f, const Tensor& x, double step) {
    if (!(step > 0)) throw ConfigError("finite_diff_check: step must be positive");

    Tensor analytic;
    {
        ag::Graph g;
        ag::Node* in = g.leaf(x);
        ag::Node* root = f(g, in);
        if (root->value.numel() != 1)
            throw ShapeError("finite_diff_check: function is not scalar-valued");
        g.backward(root);
        analytic = in->grad;
    }

    double worst = 0.0;
    Tensor probe = x;
    for (long long i = 0; i < x.numel(); ++i) {
        double saved = probe[i];
        probe[i] = saved + step;
        double up = eval_scalar_fn(f, probe);
        probe[i] = saved - step;
        double down = eval_scalar_fn(f, probe);
        probe[i] = saved;
        double numeric = (up - down) / (2.0 * step);
        double err = std::fabs(analytic[i] - numeric) / std::max(std::fabs(analytic[i]), 1e-8);
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace fido
