#include "vitscope/adam.hpp"

#include <cmath>

#include "vitscope/error.hpp"

namespace vitscope {

void AdamState::init(std::span<const Tensor> params) {
    m.clear();
    v.clear();
    t = 0;
    for (const auto& p : params) {
        m.emplace_back(static_cast<size_t>(p.numel()), 0.0);
        v.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    }
}

void adam_step(std::span<Tensor> params,
               std::span<const std::vector<double>> grads, AdamState& state,
               const AdamHyper& hyper, std::span<const std::string> names) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        raise(ErrorCategory::Contract,
              "adam_step: params/grads/state sizes disagree");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
    for (size_t p = 0; p < params.size(); ++p) {
        const auto& g = grads[p];
        if (static_cast<int64_t>(g.size()) != params[p].numel())
            raise(ErrorCategory::Contract,
                  "adam_step: gradient size mismatch for parameter " +
                      (p < names.size() ? names[p] : std::to_string(p)));
        auto& mm = state.m[p];
        auto& vv = state.v[p];
        double* w = params[p].mutable_data();
        for (size_t i = 0; i < g.size(); ++i) {
            if (!std::isfinite(g[i]))
                raise(ErrorCategory::Training,
                      "non-finite gradient for parameter '" +
                          (p < names.size() ? names[p] : std::to_string(p)) + "'");
            mm[i] = hyper.beta1 * mm[i] + (1.0 - hyper.beta1) * g[i];
            vv[i] = hyper.beta2 * vv[i] + (1.0 - hyper.beta2) * g[i] * g[i];
            const double mhat = mm[i] / bc1;
            const double vhat = vv[i] / bc2;
            w[i] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps);
        }
    }
}

}  // namespace vitscope
