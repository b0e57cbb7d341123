#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vitscope {

// Dense row-major tensor of 64-bit floats with reverse-mode autodiff.
//
// Tensors are cheap shared handles. Ops record their backward rule on the
// thread-local active Tape when any input participates in gradients (either
// a requires_grad leaf or an output of an earlier recorded op). There is no
// implicit broadcasting: shapes must match exactly except for the dedicated
// scalar-scale and add_rowwise primitives. All reductions run in ascending
// index order so identical inputs always produce bit-identical outputs.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double value);
    static Tensor from_data(std::vector<int> shape, std::vector<double> data);
    static Tensor scalar(double value);  // rank-0

    bool defined() const { return n_ != nullptr; }
    const std::vector<int>& shape() const;
    int rank() const;
    int dim(int axis) const;
    int64_t numel() const;

    const double* data() const;
    double* mutable_data();  // for leaf setup / optimizer updates only
    double item() const;     // requires numel() == 1

    bool requires_grad() const;
    Tensor& set_requires_grad(bool v);
    bool has_grad() const;
    const double* grad() const;
    std::vector<double> grad_vector() const;
    void zero_grad();

    // New leaf sharing this tensor's value storage with its own grad buffer.
    // Used to accumulate per-episode gradients without copying weights.
    Tensor alias() const;
    Tensor clone() const;

    struct Node;
    const std::shared_ptr<Node>& node() const { return n_; }

private:
    explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}
    std::shared_ptr<Node> n_;
    friend class Tape;
    friend struct OpKit;
};

// Records the primitive ops of one forward episode; backward replays them in
// exact reverse order. One backward per tape unless reset() is called.
// Construction pushes the tape as the active one for the current thread,
// destruction pops it; episodes on different threads use disjoint tapes.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    // loss must be a one-element tensor recorded on this tape.
    void backward(const Tensor& loss);
    void reset();
    size_t size() const { return entries_.size(); }

private:
    void record(std::function<void()> fn);
    std::vector<std::function<void()>> entries_;
    bool used_ = false;
    Tape* prev_ = nullptr;
    friend struct OpKit;
};

// --- primitive set ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);  // (n,k)x(k,m) -> (n,m)
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double s);
Tensor add_rowwise(const Tensor& x, const Tensor& row);  // (n,d) + (d)
Tensor transpose(const Tensor& a);                       // 2-D
Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor slice(const Tensor& a, int axis, int begin, int end);
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 double eps);  // normalizes the last axis
Tensor gelu(const Tensor& x);  // exact erf-based form
Tensor relu(const Tensor& x);
Tensor softmax(const Tensor& x, int axis);
Tensor mean(const Tensor& x, std::span<const int> axes);
Tensor sum(const Tensor& x, std::span<const int> axes);
Tensor sum_all(const Tensor& x);  // -> rank-0
// Rows of `targets` are probability vectors; loss is the mean row
// cross-entropy. No gradient flows into targets.
Tensor cross_entropy_with_logits(const Tensor& logits, const Tensor& targets);
// Elementwise binary cross-entropy on logits, averaged over all elements.
Tensor sigmoid_bce(const Tensor& logits, const Tensor& targets);
// Rearranges (H,W,C) pixels into (num_patches, patch*patch*C) rows, patches
// in raster order, pixels row-major inside a patch, channels innermost.
Tensor extract_patches(const Tensor& image_hwc, int patch);

std::string shape_string(std::span<const int> shape);

}  // namespace vitscope
