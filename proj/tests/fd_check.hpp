#pragma once

// Test-only central finite-difference oracle for gradient checks. The forward
// function is re-evaluated with perturbed inputs and NO active tape, so the
// reference never touches the backward path it is checking.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "vitscope/tensor.hpp"

namespace fd {

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

using Forward = std::function<vitscope::Tensor(std::span<vitscope::Tensor>)>;

struct Report {
    double max_rel_err = 0.0;
    int64_t checked = 0;
};

// Compares analytic gradients of `inputs` against central differences.
// `probe_stride` > 1 checks a deterministic subset of elements.
inline Report check_gradients(const Forward& f, std::vector<vitscope::Tensor> inputs,
                              double h = 1e-5, int64_t probe_stride = 1) {
    using vitscope::Tape;
    using vitscope::Tensor;

    for (auto& t : inputs) {
        t.set_requires_grad(true);
        t.zero_grad();  // handles are shared; stale buffers would double-count
    }
    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        Tensor loss = f(inputs);
        tape.backward(loss);
        for (auto& t : inputs) analytic.push_back(t.grad_vector());
    }

    Report report;
    for (size_t which = 0; which < inputs.size(); ++which) {
        double* data = inputs[which].mutable_data();
        const int64_t n = inputs[which].numel();
        for (int64_t j = 0; j < n; j += probe_stride) {
            const double orig = data[j];
            data[j] = orig + h;
            const double fp = f(inputs).item();
            data[j] = orig - h;
            const double fm = f(inputs).item();
            data[j] = orig;
            const double fd_grad = (fp - fm) / (2.0 * h);
            report.max_rel_err =
                std::max(report.max_rel_err, rel_err(analytic[which][j], fd_grad));
            ++report.checked;
        }
    }
    return report;
}

}  // namespace fd
