#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "wamo/tensor.hpp"

namespace wamo {
namespace ad {

// Reverse-mode autodiff over Tensor-valued nodes. A forward pass builds a
// DAG of shared_ptr-linked nodes; backward() walks it once in reverse
// topological order. Ops skip closure construction entirely when no input
// requires gradients, so inference pays only for the forward arithmetic.
struct Node {
    Tensor val;
    Tensor grad;                   // allocated on first contribution
    bool requires_grad = false;
    bool is_leaf = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> back;

    void accum(std::size_t i, double g) {
        if (grad.numel() == 0) grad = Tensor::zeros(val.shape());
        grad[i] += g;
    }
    void ensure_grad() {
        if (grad.numel() == 0) grad = Tensor::zeros(val.shape());
    }
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> n) : n_(std::move(n)) {}

    static Var leaf(Tensor value, bool requires_grad) {
        auto n = std::make_shared<Node>();
        n->val = std::move(value);
        n->requires_grad = requires_grad;
        n->is_leaf = true;
        return Var(n);
    }
    static Var constant(Tensor value) { return leaf(std::move(value), false); }

    const Tensor& val() const { return n_->val; }
    const Tensor& grad() const { return n_->grad; }
    bool requires_grad() const { return n_ && n_->requires_grad; }
    bool defined() const { return static_cast<bool>(n_); }
    std::shared_ptr<Node> node() const { return n_; }

    const std::vector<std::size_t>& shape() const { return n_->val.shape(); }
    double scalar() const { return n_->val[0]; }

private:
    std::shared_ptr<Node> n_;
};

// Seeds: (root, cotangent) pairs. Cotangent shape must match the root value.
// Interior buffers are released as soon as their backward hook has run.
void backward(const std::vector<std::pair<Var, Tensor>>& seeds);
inline void backward(const Var& scalar_loss) {
    backward({{scalar_loss, Tensor::scalar(1.0)}});
}

// --- elementwise / shape ---
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var reshape(const Var& a, std::vector<std::size_t> shape);
Var concat_cols(const std::vector<Var>& xs);          // [R x C_i] -> [R x sum(C_i)]
Var slice_cols(const Var& a, std::size_t start, std::size_t len);

// --- activations / normalizations ---
Var gelu(const Var& a);
Var tanh_v(const Var& a);
Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var l2_normalize_rows(const Var& x);                  // throws on an exactly zero row

// --- linear algebra ---
Var matmul(const Var& a, const Var& b);               // [M x K] * [K x N]
Var transpose2d(const Var& a);
Var linear(const Var& x, const Var& w, const Var& b); // [N x I] * [I x O] + b[O]

// --- gather / reduce ---
Var pick_rows(const Var& table, const std::vector<std::size_t>& idx);   // embedding lookup
Var pick_per_row(const Var& x, const std::vector<std::size_t>& cols);   // y[r] = x[r, cols[r]]
Var diag2d(const Var& a);                                               // [B x B] -> [B]
Var mean_all(const Var& a);
Var mean_rows(const Var& a);                                            // [N x D] -> [D]

// --- signal ops (all circular in time) ---
// y[t,o] = b[o] + sum_{c,j} w[o,c,j] * x[(t + j - k/2) mod T, c]
Var conv1d_circular(const Var& x, const Var& w, const Var& b);
// y[n,c] = sum_k f[k] * x[(n + dil*k) mod T, c]
Var circ_corr_dilated(const Var& x, const Var& f, std::size_t dil);
// y[n,c] = sum_k f[k] * x[(n - dil*k) mod T, c]
Var circ_conv_dilated(const Var& x, const Var& f, std::size_t dil);

// --- losses ---
Var smooth_l1_mean(const Var& pred, const Tensor& target, double beta);

}  // namespace ad
}  // namespace wamo
