#include "wamo/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace wamo {
namespace ad {

namespace {

std::shared_ptr<Node> make_node(Tensor val, std::vector<std::shared_ptr<Node>> parents) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a.val().same_shape(b.val()))
        throw ValidationError(std::string(op) + ": shape mismatch " +
                              Tensor::shape_str(a.shape()) + " vs " + Tensor::shape_str(b.shape()));
}

}  // namespace

void backward(const std::vector<std::pair<Var, Tensor>>& seeds) {
    // Iterative post-order DFS over the union of all seed roots.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    for (const auto& s : seeds) {
        Node* root = s.first.node().get();
        if (!root || !root->requires_grad || seen.count(root)) continue;
        stack.emplace_back(root, 0);
        seen.insert(root);
        while (!stack.empty()) {
            auto& [node, idx] = stack.back();
            if (idx < node->parents.size()) {
                Node* p = node->parents[idx++].get();
                if (p->requires_grad && !seen.count(p)) {
                    seen.insert(p);
                    stack.emplace_back(p, 0);
                }
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }
    }

    for (const auto& s : seeds) {
        Node* root = s.first.node().get();
        if (!root || !root->requires_grad) continue;
        if (!s.second.same_shape(root->val))
            throw ValidationError("backward: seed shape mismatch");
        root->ensure_grad();
        for (std::size_t i = 0; i < s.second.numel(); ++i) root->grad[i] += s.second[i];
    }

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->back) {
            n->ensure_grad();
            n->back(*n);
        }
        if (!n->is_leaf) {
            // This node's value and cotangent are dead past this point.
            n->val = Tensor();
            n->grad = Tensor();
            n->back = nullptr;
        }
    }
}

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out = a.val();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b.val()[i];
    auto n = make_node(std::move(out), {a.node(), b.node()});
    if (n->requires_grad)
        n->back = [](Node& self) {
            for (int k = 0; k < 2; ++k) {
                Node* p = self.parents[k].get();
                if (!p->requires_grad) continue;
                p->ensure_grad();
                for (std::size_t i = 0; i < self.grad.numel(); ++i) p->grad[i] += self.grad[i];
            }
        };
    return Var(n);
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out = a.val();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.val()[i];
    auto n = make_node(std::move(out), {a.node(), b.node()});
    if (n->requires_grad) {
        Tensor av = a.val(), bv = b.val();
        n->back = [av, bv](Node& self) {
            Node* pa = self.parents[0].get();
            Node* pb = self.parents[1].get();
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (std::size_t i = 0; i < self.grad.numel(); ++i)
                    pa->grad[i] += self.grad[i] * bv[i];
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (std::size_t i = 0; i < self.grad.numel(); ++i)
                    pb->grad[i] += self.grad[i] * av[i];
            }
        };
    }
    return Var(n);
}

Var scale(const Var& a, double s) {
    Tensor out = a.val();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= s;
    auto n = make_node(std::move(out), {a.node()});
    if (n->requires_grad)
        n->back = [s](Node& self) {
            Node* p = self.parents[0].get();
            p->ensure_grad();
            for (std::size_t i = 0; i < self.grad.numel(); ++i) p->grad[i] += s * self.grad[i];
        };
    return Var(n);
}

Var reshape(const Var& a, std::vector<std::size_t> shape) {
    Tensor out = a.val().reshaped(std::move(shape));
    auto n = make_node(std::move(out), {a.node()});
    if (n->requires_grad)
        n->back = [](Node& self) {
            Node* p = self.parents[0].get();
            p->ensure_grad();
            for (std::size_t i = 0; i < self.grad.numel(); ++i) p->grad[i] += self.grad[i];
        };
    return Var(n);
}

Var concat_cols(const std::vector<Var>& xs) {
    if (xs.empty()) throw ValidationError("concat_cols: empty input");
    const std::size_t rows = xs[0].val().dim(0);
    std::size_t cols = 0;
    for (const auto& x : xs) {
        if (x.val().rank() != 2 || x.val().dim(0) != rows)
            throw ValidationError("concat_cols: row count mismatch");
        cols += x.val().dim(1);
    }
    Tensor out({rows, cols});
    std::vector<std::shared_ptr<Node>> parents;
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& x : xs) {
        const std::size_t c = x.val().dim(1);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < c; ++j) out.at(r, off + j) = x.val().at(r, j);
        parents.push_back(x.node());
        offsets.push_back(off);
        off += c;
    }
    auto n = make_node(std::move(out), std::move(parents));
    if (n->requires_grad)
        n->back = [rows, offsets](Node& self) {
            for (std::size_t k = 0; k < self.parents.size(); ++k) {
                Node* p = self.parents[k].get();
                if (!p->requires_grad) continue;
                p->ensure_grad();
                const std::size_t c = p->grad.dim(1);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < c; ++j)
                        p->grad.at(r, j) += self.grad.at(r, offsets[k] + j);
            }
        };
    return Var(n);
}

Var slice_cols(const Var& a, std::size_t start, std::size_t len) {
    const std::size_t rows = a.val().dim(0), cols = a.val().dim(1);
    if (start + len > cols) throw ValidationError("slice_cols: out of range");
    Tensor out({rows, len});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < len; ++j) out.at(r, j) = a.val().at(r, start + j);
    auto n = make_node(std::move(out), {a.node()});
    if (n->requires_grad)
        n->back = [start, len, rows](Node& self) {
            Node* p = self.parents[0].get();
            p->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < len; ++j)
                    p->grad.at(r, start + j) += self.grad.at(r, j);
        };
    return Var(n);
}

// --------------------------------------------------------------- activations

Var gelu(const Var& a) {
    // Exact (erf) form; derivative is Phi(x) + x*phi(x).
    Tensor out = a.val();
    for (std::size_t i = 0; i < out.numel(); ++i) {
        double x = out[i];
        out[i] = 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
    }
    auto n = make_node(std::move(out), {a.node()});
    if (n->requires_grad) {
        Tensor xv = a.val();
        n->back = [xv](Node& self) {
            Node* p = self.parents[0].get();
            p->ensure_grad();
            constexpr double inv_sqrt_2pi = 0.3989422804014327;
            for (std::size_t i = 0; i < self.grad.numel(); ++i) {
                double x = xv[i];
                double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
                double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
                p->grad[i] += self.grad[i] * (cdf + x * pdf);
            }
        };
    }
    return Var(n);
}

Var tanh_v(const Var& a) {
    Tensor out = a.val();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
    auto n = make_node(std::move(out), {a.node()});
    if (n->requires_grad) {
        Tensor yv = n->val;
        n->back = [yv](Node& self) {
            Node* p = self.parents[0].get();
            p->ensure_grad();
            for (std::size_t i = 0; i < self.grad.numel(); ++i)
                p->grad[i] += self.grad[i] * (1.0 - yv[i] * yv[i]);
        };
    }
    return Var(n);
}

Var softmax_rows(const Var& a) {
    const std::size_t rows = a.val().dim(0), cols = a.val().dim(1);
    Tensor out = a.val();
    for (std::size_t r = 0; r < rows; ++r) {
        double mx = out.at(r, 0);
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, out.at(r, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            double e = std::exp(out.at(r, j) - mx);
            out.at(r, j) = e;
            sum += e;
        }
        for (std::size_t j = 0; j < cols; ++j) out.at(r, j) /= sum;
    }
    auto n = make_node(std::move(out), {a.node()});
    if (n->requires_grad) {
        Tensor yv = n->val;
        n->back = [yv, rows, cols](Node& self) {
            Node* p = self.parents[0].get();
            p->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                double dot = 0.0;
                for (std::size_t j = 0; j < cols; ++j) dot += self.grad.at(r, j) * yv.at(r, j);
                for (std::size_t j = 0; j < cols; ++j)
                    p->grad.at(r, j) += yv.at(r, j) * (self.grad.at(r, j) - dot);
            }
        };
    }
    return Var(n);
}

Var log_softmax_rows(const Var& a) {
    const std::size_t rows = a.val().dim(0), cols = a.val().dim(1);
    Tensor out = a.val();
    for (std::size_t r = 0; r < rows; ++r) {
        double mx = out.at(r, 0);
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, out.at(r, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) sum += std::exp(out.at(r, j) - mx);
        double lse = mx + std::log(sum);
        for (std::size_t j = 0; j < cols; ++j) out.at(r, j) -= lse;
    }
    auto n = make_node(std::move(out), {a.node()});
    if (n->requires_grad) {
        Tensor logy = n->val;
        n->back = [logy, rows, cols](Node& self) {
            Node* p = self.parents[0].get();
            p->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                double gsum = 0.0;
                for (std::size_t j = 0; j < cols; ++j) gsum += self.grad.at(r, j);
                for (std::size_t j = 0; j < cols; ++j)
                    p->grad.at(r, j) += self.grad.at(r, j) - std::exp(logy.at(r, j)) * gsum;
            }
        };
    }
    return Var(n);
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const std::size_t rows = x.val().dim(0), cols = x.val().dim(1);
    if (gamma.val().numel() != cols || beta.val().numel() != cols)
        throw ValidationError("layer_norm: parameter size mismatch");
    Tensor out({rows, cols});
    Tensor xhat({rows, cols});
    Tensor inv_sigma({rows});
    for (std::size_t r = 0; r < rows; ++r) {
        double mean = 0.0;
        for (std::size_t j = 0; j < cols; ++j) mean += x.val().at(r, j);
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            double d = x.val().at(r, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(cols);
        double is = 1.0 / std::sqrt(var + eps);
        inv_sigma[r] = is;
        for (std::size_t j = 0; j < cols; ++j) {
            double h = (x.val().at(r, j) - mean) * is;
            xhat.at(r, j) = h;
            out.at(r, j) = gamma.val()[j] * h + beta.val()[j];
        }
    }
    auto n = make_node(std::move(out), {x.node(), gamma.node(), beta.node()});
    if (n->requires_grad) {
        Tensor gv = gamma.val();
        n->back = [xhat, inv_sigma, gv, rows, cols](Node& self) {
            Node* px = self.parents[0].get();
            Node* pg = self.parents[1].get();
            Node* pb = self.parents[2].get();
            if (pg->requires_grad) pg->ensure_grad();
            if (pb->requires_grad) pb->ensure_grad();
            if (px->requires_grad) px->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                double m1 = 0.0, m2 = 0.0;
                for (std::size_t j = 0; j < cols; ++j) {
                    double dy = self.grad.at(r, j);
                    if (pg->requires_grad) pg->grad[j] += dy * xhat.at(r, j);
                    if (pb->requires_grad) pb->grad[j] += dy;
                    double dxh = dy * gv[j];
                    m1 += dxh;
                    m2 += dxh * xhat.at(r, j);
                }
                if (!px->requires_grad) continue;
                m1 /= static_cast<double>(cols);
                m2 /= static_cast<double>(cols);
                for (std::size_t j = 0; j < cols; ++j) {
                    double dxh = self.grad.at(r, j) * gv[j];
                    px->grad.at(r, j) += inv_sigma[r] * (dxh - m1 - xhat.at(r, j) * m2);
                }
            }
        };
    }
    return Var(n);
}

Var l2_normalize_rows(const Var& x) {
    const std::size_t rows = x.val().dim(0), cols = x.val().dim(1);
    Tensor out({rows, cols});
    Tensor norms({rows});
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) s += x.val().at(r, j) * x.val().at(r, j);
        double nrm = std::sqrt(s);
        if (nrm == 0.0)
            throw NumericalError("l2_normalize_rows: zero-norm embedding at row " +
                                 std::to_string(r));
        norms[r] = nrm;
        for (std::size_t j = 0; j < cols; ++j) out.at(r, j) = x.val().at(r, j) / nrm;
    }
    auto n = make_node(std::move(out), {x.node()});
    if (n->requires_grad) {
        Tensor yv = n->val;
        n->back = [yv, norms, rows, cols](Node& self) {
            Node* p = self.parents[0].get();
            p->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                double dot = 0.0;
                for (std::size_t j = 0; j < cols; ++j) dot += self.grad.at(r, j) * yv.at(r, j);
                for (std::size_t j = 0; j < cols; ++j)
                    p->grad.at(r, j) += (self.grad.at(r, j) - dot * yv.at(r, j)) / norms[r];
            }
        };
    }
    return Var(n);
}

// ------------------------------------------------------------ linear algebra

namespace {

// C += A * B, row-major, ikj order so the inner loop streams contiguously.
void gemm_acc(const double* a, const double* b, double* c,
              std::size_t M, std::size_t K, std::size_t N) {
    for (std::size_t i = 0; i < M; ++i) {
        const double* arow = a + i * K;
        double* crow = c + i * N;
        for (std::size_t k = 0; k < K; ++k) {
            const double av = arow[k];
            if (av == 0.0) continue;
            const double* brow = b + k * N;
            for (std::size_t j = 0; j < N; ++j) crow[j] += av * brow[j];
        }
    }
}

// C += A^T * B where A is [K x M]: C[m][n] += sum_k A[k][m] * B[k][n]
void gemm_at_b_acc(const double* a, const double* b, double* c,
                   std::size_t K, std::size_t M, std::size_t N) {
    for (std::size_t k = 0; k < K; ++k) {
        const double* arow = a + k * M;
        const double* brow = b + k * N;
        for (std::size_t m = 0; m < M; ++m) {
            const double av = arow[m];
            if (av == 0.0) continue;
            double* crow = c + m * N;
            for (std::size_t j = 0; j < N; ++j) crow[j] += av * brow[j];
        }
    }
}

// C += A * B^T where B is [N x K]: C[m][n] += sum_k A[m][k] * B[n][k]
void gemm_a_bt_acc(const double* a, const double* b, double* c,
                   std::size_t M, std::size_t K, std::size_t N) {
    for (std::size_t m = 0; m < M; ++m) {
        const double* arow = a + m * K;
        double* crow = c + m * N;
        for (std::size_t j = 0; j < N; ++j) {
            const double* brow = b + j * K;
            double s = 0.0;
            for (std::size_t k = 0; k < K; ++k) s += arow[k] * brow[k];
            crow[j] += s;
        }
    }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
    if (a.val().rank() != 2 || b.val().rank() != 2 || a.val().dim(1) != b.val().dim(0))
        throw ValidationError("matmul: incompatible shapes " + Tensor::shape_str(a.shape()) +
                              " vs " + Tensor::shape_str(b.shape()));
    const std::size_t M = a.val().dim(0), K = a.val().dim(1), N = b.val().dim(1);
    Tensor out({M, N});
    gemm_acc(a.val().data(), b.val().data(), out.data(), M, K, N);
    auto n = make_node(std::move(out), {a.node(), b.node()});
    if (n->requires_grad) {
        Tensor av = a.val(), bv = b.val();
        n->back = [av, bv, M, K, N](Node& self) {
            Node* pa = self.parents[0].get();
            Node* pb = self.parents[1].get();
            if (pa->requires_grad) {
                pa->ensure_grad();  // dA = dC * B^T
                gemm_a_bt_acc(self.grad.data(), bv.data(), pa->grad.data(), M, N, K);
            }
            if (pb->requires_grad) {
                pb->ensure_grad();  // dB = A^T * dC
                gemm_at_b_acc(av.data(), self.grad.data(), pb->grad.data(), M, K, N);
            }
        };
    }
    return Var(n);
}

Var transpose2d(const Var& a) {
    const std::size_t R = a.val().dim(0), C = a.val().dim(1);
    Tensor out({C, R});
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) out.at(c, r) = a.val().at(r, c);
    auto n = make_node(std::move(out), {a.node()});
    if (n->requires_grad)
        n->back = [R, C](Node& self) {
            Node* p = self.parents[0].get();
            p->ensure_grad();
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < C; ++c) p->grad.at(r, c) += self.grad.at(c, r);
        };
    return Var(n);
}

Var linear(const Var& x, const Var& w, const Var& b) {
    if (x.val().rank() != 2 || w.val().rank() != 2 || x.val().dim(1) != w.val().dim(0))
        throw ValidationError("linear: incompatible shapes " + Tensor::shape_str(x.shape()) +
                              " vs " + Tensor::shape_str(w.shape()));
    const std::size_t N = x.val().dim(0), I = x.val().dim(1), O = w.val().dim(1);
    if (b.val().numel() != O) throw ValidationError("linear: bias size mismatch");
    Tensor out({N, O});
    for (std::size_t r = 0; r < N; ++r)
        for (std::size_t j = 0; j < O; ++j) out.at(r, j) = b.val()[j];
    gemm_acc(x.val().data(), w.val().data(), out.data(), N, I, O);
    auto n = make_node(std::move(out), {x.node(), w.node(), b.node()});
    if (n->requires_grad) {
        Tensor xv = x.val(), wv = w.val();
        n->back = [xv, wv, N, I, O](Node& self) {
            Node* px = self.parents[0].get();
            Node* pw = self.parents[1].get();
            Node* pb = self.parents[2].get();
            if (px->requires_grad) {
                px->ensure_grad();
                gemm_a_bt_acc(self.grad.data(), wv.data(), px->grad.data(), N, O, I);
            }
            if (pw->requires_grad) {
                pw->ensure_grad();
                gemm_at_b_acc(xv.data(), self.grad.data(), pw->grad.data(), N, I, O);
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (std::size_t r = 0; r < N; ++r)
                    for (std::size_t j = 0; j < O; ++j) pb->grad[j] += self.grad.at(r, j);
            }
        };
    }
    return Var(n);
}

// ------------------------------------------------------------ gather / reduce

Var pick_rows(const Var& table, const std::vector<std::size_t>& idx) {
    const std::size_t V = table.val().dim(0), D = table.val().dim(1);
    Tensor out({idx.size(), D});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= V) throw ValidationError("pick_rows: index out of range");
        for (std::size_t j = 0; j < D; ++j) out.at(i, j) = table.val().at(idx[i], j);
    }
    auto n = make_node(std::move(out), {table.node()});
    if (n->requires_grad)
        n->back = [idx, D](Node& self) {
            Node* p = self.parents[0].get();
            p->ensure_grad();
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (std::size_t j = 0; j < D; ++j)
                    p->grad.at(idx[i], j) += self.grad.at(i, j);
        };
    return Var(n);
}

Var pick_per_row(const Var& x, const std::vector<std::size_t>& cols) {
    const std::size_t R = x.val().dim(0), C = x.val().dim(1);
    if (cols.size() != R) throw ValidationError("pick_per_row: index count mismatch");
    Tensor out({R});
    for (std::size_t r = 0; r < R; ++r) {
        if (cols[r] >= C) throw ValidationError("pick_per_row: column out of range");
        out[r] = x.val().at(r, cols[r]);
    }
    auto n = make_node(std::move(out), {x.node()});
    if (n->requires_grad)
        n->back = [cols](Node& self) {
            Node* p = self.parents[0].get();
            p->ensure_grad();
            for (std::size_t r = 0; r < cols.size(); ++r)
                p->grad.at(r, cols[r]) += self.grad[r];
        };
    return Var(n);
}

Var diag2d(const Var& a) {
    const std::size_t B = a.val().dim(0);
    if (a.val().dim(1) != B) throw ValidationError("diag2d: matrix not square");
    Tensor out({B});
    for (std::size_t i = 0; i < B; ++i) out[i] = a.val().at(i, i);
    auto n = make_node(std::move(out), {a.node()});
    if (n->requires_grad)
        n->back = [B](Node& self) {
            Node* p = self.parents[0].get();
            p->ensure_grad();
            for (std::size_t i = 0; i < B; ++i) p->grad.at(i, i) += self.grad[i];
        };
    return Var(n);
}

Var mean_all(const Var& a) {
    const std::size_t n_el = a.val().numel();
    double s = 0.0;
    for (std::size_t i = 0; i < n_el; ++i) s += a.val()[i];
    auto n = make_node(Tensor::scalar(s / static_cast<double>(n_el)), {a.node()});
    if (n->requires_grad)
        n->back = [n_el](Node& self) {
            Node* p = self.parents[0].get();
            p->ensure_grad();
            const double g = self.grad[0] / static_cast<double>(n_el);
            for (std::size_t i = 0; i < n_el; ++i) p->grad[i] += g;
        };
    return Var(n);
}

Var mean_rows(const Var& a) {
    const std::size_t R = a.val().dim(0), C = a.val().dim(1);
    Tensor out({C});
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t j = 0; j < C; ++j) out[j] += a.val().at(r, j);
    for (std::size_t j = 0; j < C; ++j) out[j] /= static_cast<double>(R);
    auto n = make_node(std::move(out), {a.node()});
    if (n->requires_grad)
        n->back = [R, C](Node& self) {
            Node* p = self.parents[0].get();
            p->ensure_grad();
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t j = 0; j < C; ++j)
                    p->grad.at(r, j) += self.grad[j] / static_cast<double>(R);
        };
    return Var(n);
}

// ----------------------------------------------------------------- signal ops

Var conv1d_circular(const Var& x, const Var& w, const Var& b) {
    const std::size_t T = x.val().dim(0), Ci = x.val().dim(1);
    const std::size_t Co = w.val().dim(0), k = w.val().dim(2);
    if (w.val().dim(1) != Ci) throw ValidationError("conv1d_circular: channel mismatch");
    if (b.val().numel() != Co) throw ValidationError("conv1d_circular: bias size mismatch");
    const std::size_t off = k / 2;
    Tensor out({T, Co});
    // Straight loops; wrap (t + j - off) into [0, T).
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t o = 0; o < Co; ++o) {
            double s = b.val()[o];
            for (std::size_t c = 0; c < Ci; ++c)
                for (std::size_t j = 0; j < k; ++j) {
                    std::size_t tt = (t + j + T * ((off / T) + 1) - off) % T;
                    s += w.val().at(o, c, j) * x.val().at(tt, c);
                }
            out.at(t, o) = s;
        }
    auto n = make_node(std::move(out), {x.node(), w.node(), b.node()});
    if (n->requires_grad) {
        Tensor xv = x.val(), wv = w.val();
        n->back = [xv, wv, T, Ci, Co, k, off](Node& self) {
            Node* px = self.parents[0].get();
            Node* pw = self.parents[1].get();
            Node* pb = self.parents[2].get();
            if (px->requires_grad) {
                px->ensure_grad();
                for (std::size_t t = 0; t < T; ++t)
                    for (std::size_t o = 0; o < Co; ++o) {
                        const double g = self.grad.at(t, o);
                        for (std::size_t c = 0; c < Ci; ++c)
                            for (std::size_t j = 0; j < k; ++j) {
                                std::size_t tt = (t + j + T * ((off / T) + 1) - off) % T;
                                px->grad.at(tt, c) += g * wv.at(o, c, j);
                            }
                    }
            }
            if (pw->requires_grad) {
                pw->ensure_grad();
                for (std::size_t t = 0; t < T; ++t)
                    for (std::size_t o = 0; o < Co; ++o) {
                        const double g = self.grad.at(t, o);
                        for (std::size_t c = 0; c < Ci; ++c)
                            for (std::size_t j = 0; j < k; ++j) {
                                std::size_t tt = (t + j + T * ((off / T) + 1) - off) % T;
                                pw->grad.at(o, c, j) += g * xv.at(tt, c);
                            }
                    }
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (std::size_t t = 0; t < T; ++t)
                    for (std::size_t o = 0; o < Co; ++o) pb->grad[o] += self.grad.at(t, o);
            }
        };
    }
    return Var(n);
}

Var circ_corr_dilated(const Var& x, const Var& f, std::size_t dil) {
    const std::size_t T = x.val().dim(0), C = x.val().dim(1), L = f.val().numel();
    Tensor out({T, C});
    for (std::size_t nn = 0; nn < T; ++nn)
        for (std::size_t k = 0; k < L; ++k) {
            const std::size_t src = (nn + dil * k) % T;
            const double fk = f.val()[k];
            for (std::size_t c = 0; c < C; ++c) out.at(nn, c) += fk * x.val().at(src, c);
        }
    auto n = make_node(std::move(out), {x.node(), f.node()});
    if (n->requires_grad) {
        Tensor xv = x.val(), fv = f.val();
        n->back = [xv, fv, T, C, L, dil](Node& self) {
            Node* px = self.parents[0].get();
            Node* pf = self.parents[1].get();
            if (px->requires_grad) {
                px->ensure_grad();
                for (std::size_t nn = 0; nn < T; ++nn)
                    for (std::size_t k = 0; k < L; ++k) {
                        const std::size_t src = (nn + dil * k) % T;
                        const double fk = fv[k];
                        for (std::size_t c = 0; c < C; ++c)
                            px->grad.at(src, c) += fk * self.grad.at(nn, c);
                    }
            }
            if (pf->requires_grad) {
                pf->ensure_grad();
                for (std::size_t k = 0; k < L; ++k) {
                    double s = 0.0;
                    for (std::size_t nn = 0; nn < T; ++nn) {
                        const std::size_t src = (nn + dil * k) % T;
                        for (std::size_t c = 0; c < C; ++c)
                            s += self.grad.at(nn, c) * xv.at(src, c);
                    }
                    pf->grad[k] += s;
                }
            }
        };
    }
    return Var(n);
}

Var circ_conv_dilated(const Var& x, const Var& f, std::size_t dil) {
    const std::size_t T = x.val().dim(0), C = x.val().dim(1), L = f.val().numel();
    Tensor out({T, C});
    for (std::size_t nn = 0; nn < T; ++nn)
        for (std::size_t k = 0; k < L; ++k) {
            const std::size_t src = (nn + T * ((dil * k) / T + 1) - dil * k) % T;
            const double fk = f.val()[k];
            for (std::size_t c = 0; c < C; ++c) out.at(nn, c) += fk * x.val().at(src, c);
        }
    auto n = make_node(std::move(out), {x.node(), f.node()});
    if (n->requires_grad) {
        Tensor xv = x.val(), fv = f.val();
        n->back = [xv, fv, T, C, L, dil](Node& self) {
            Node* px = self.parents[0].get();
            Node* pf = self.parents[1].get();
            if (px->requires_grad) {
                px->ensure_grad();
                for (std::size_t nn = 0; nn < T; ++nn)
                    for (std::size_t k = 0; k < L; ++k) {
                        const std::size_t src = (nn + T * ((dil * k) / T + 1) - dil * k) % T;
                        const double fk = fv[k];
                        for (std::size_t c = 0; c < C; ++c)
                            px->grad.at(src, c) += fk * self.grad.at(nn, c);
                    }
            }
            if (pf->requires_grad) {
                pf->ensure_grad();
                for (std::size_t k = 0; k < L; ++k) {
                    double s = 0.0;
                    for (std::size_t nn = 0; nn < T; ++nn) {
                        const std::size_t src = (nn + T * ((dil * k) / T + 1) - dil * k) % T;
                        for (std::size_t c = 0; c < C; ++c)
                            s += self.grad.at(nn, c) * xv.at(src, c);
                    }
                    pf->grad[k] += s;
                }
            }
        };
    }
    return Var(n);
}

// --------------------------------------------------------------------- losses

Var smooth_l1_mean(const Var& pred, const Tensor& target, double beta) {
    if (!pred.val().same_shape(target))
        throw ValidationError("smooth_l1: shape mismatch " + Tensor::shape_str(pred.shape()) +
                              " vs " + Tensor::shape_str(target.shape()));
    if (beta <= 0.0) throw ValidationError("smooth_l1: beta must be positive");
    const std::size_t N = pred.val().numel();
    double acc = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const double e = pred.val()[i] - target[i];
        const double ae = std::fabs(e);
        acc += (ae < beta) ? 0.5 * e * e / beta : ae - 0.5 * beta;
    }
    auto n = make_node(Tensor::scalar(acc / static_cast<double>(N)), {pred.node()});
    if (n->requires_grad) {
        Tensor pv = pred.val();
        n->back = [pv, target, beta, N](Node& self) {
            Node* p = self.parents[0].get();
            p->ensure_grad();
            const double g = self.grad[0] / static_cast<double>(N);
            for (std::size_t i = 0; i < N; ++i) {
                const double e = pv[i] - target[i];
                p->grad[i] += g * ((std::fabs(e) < beta) ? e / beta : (e > 0 ? 1.0 : -1.0));
            }
        };
    }
    return Var(n);
}

}  // namespace ad
}  // namespace wamo
