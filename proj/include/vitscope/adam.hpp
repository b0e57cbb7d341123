#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vitscope/tensor.hpp"

namespace vitscope {

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    int64_t t = 0;

    void init(std::span<const Tensor> params);
    bool initialized() const { return !m.empty(); }
};

// Standard Adam with bias correction; params are updated in place. `grads`
// holds one buffer per parameter in the same order; `names` is used for the
// error message when a gradient is non-finite.
void adam_step(std::span<Tensor> params,
               std::span<const std::vector<double>> grads, AdamState& state,
               const AdamHyper& hyper, std::span<const std::string> names);

}  // namespace vitscope
