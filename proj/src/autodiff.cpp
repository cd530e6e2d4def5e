#include "stainforge/autodiff.hpp"

#include <cmath>
#include <unordered_set>

namespace stainforge::ad {

namespace {

Var make_node(Arr v, Dims d, std::vector<Var> parents, std::function<void(Node&)> back) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    n->dims = d;
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    n->requires_grad = rg;
    n->parents = std::move(parents);
    if (rg) n->back = std::move(back);
    return n;
}

void check_same_size(const Var& a, const Var& b, const char* op) {
    if (a->val.size() != b->val.size())
        throw InputError(std::string(op) + ": size mismatch");
}

bool is_scalar(const Var& v) { return v->val.size() == 1; }

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// im2col for row-major (C,H,W) tensors with zero padding.
RowMat im2col(const Arr& x, Dims d, int kh, int kw, int stride, int pad, int ho, int wo) {
    const int K = d.c * kh * kw;
    RowMat col = RowMat::Zero(K, ho * wo);
    for (int c = 0; c < d.c; ++c) {
        const double* plane = x.data() + static_cast<std::ptrdiff_t>(c) * d.h * d.w;
        for (int dy = 0; dy < kh; ++dy) {
            for (int dx = 0; dx < kw; ++dx) {
                const int r = (c * kh + dy) * kw + dx;
                for (int oy = 0; oy < ho; ++oy) {
                    const int y = oy * stride - pad + dy;
                    if (y < 0 || y >= d.h) continue;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int xx = ox * stride - pad + dx;
                        if (xx < 0 || xx >= d.w) continue;
                        col(r, oy * wo + ox) = plane[y * d.w + xx];
                    }
                }
            }
        }
    }
    return col;
}

void col2im_add(Arr& gx, Dims d, const RowMat& gcol, int kh, int kw, int stride, int pad,
                int ho, int wo) {
    for (int c = 0; c < d.c; ++c) {
        double* plane = gx.data() + static_cast<std::ptrdiff_t>(c) * d.h * d.w;
        for (int dy = 0; dy < kh; ++dy) {
            for (int dx = 0; dx < kw; ++dx) {
                const int r = (c * kh + dy) * kw + dx;
                for (int oy = 0; oy < ho; ++oy) {
                    const int y = oy * stride - pad + dy;
                    if (y < 0 || y >= d.h) continue;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int xx = ox * stride - pad + dx;
                        if (xx < 0 || xx >= d.w) continue;
                        plane[y * d.w + xx] += gcol(r, oy * wo + ox);
                    }
                }
            }
        }
    }
}

}  // namespace

Var constant(Arr v, Dims d) {
    if (v.size() != d.size()) throw InputError("constant: dims/value size mismatch");
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    n->dims = d;
    return n;
}

Var constant_scalar(double v) {
    Arr a(1);
    a[0] = v;
    return constant(std::move(a), scalar_dims());
}

Var leaf(Arr v, Dims d) {
    auto n = constant(std::move(v), d);
    n->requires_grad = true;
    return n;
}

void ensure_grad(Node& n) {
    if (n.grad.size() != n.val.size()) n.grad = Arr::Zero(n.val.size());
}

void backward(const Var& root) {
    if (root->val.size() != 1) throw InputError("backward: root must be scalar");
    // Iterative topological sort.
    std::vector<Node*> order;
    std::unordered_set<Node*> done;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    std::unordered_set<Node*> on_path{root.get()};
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx].get();
            ++idx;
            if (p->requires_grad && !done.count(p) && !on_path.count(p)) {
                on_path.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            done.insert(node);
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (Node* n : order) n->grad = Arr::Zero(n->val.size());
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->back) n->back(*n);
    }
}

Var add(const Var& a, const Var& b) {
    if (is_scalar(b) && !is_scalar(a)) {
        return make_node(a->val + b->val[0], a->dims, {a, b}, [](Node& n) {
            auto& a_ = *n.parents[0];
            auto& b_ = *n.parents[1];
            if (a_.requires_grad) { ensure_grad(a_); a_.grad += n.grad; }
            if (b_.requires_grad) { ensure_grad(b_); b_.grad[0] += n.grad.sum(); }
        });
    }
    if (is_scalar(a) && !is_scalar(b)) return add(b, a);
    check_same_size(a, b, "add");
    return make_node(a->val + b->val, a->dims, {a, b}, [](Node& n) {
        auto& a_ = *n.parents[0];
        auto& b_ = *n.parents[1];
        if (a_.requires_grad) { ensure_grad(a_); a_.grad += n.grad; }
        if (b_.requires_grad) { ensure_grad(b_); b_.grad += n.grad; }
    });
}

Var sub(const Var& a, const Var& b) { return add(a, neg(b)); }

Var mul(const Var& a, const Var& b) {
    if (is_scalar(b) && !is_scalar(a)) {
        return make_node(a->val * b->val[0], a->dims, {a, b}, [](Node& n) {
            auto& a_ = *n.parents[0];
            auto& b_ = *n.parents[1];
            if (a_.requires_grad) { ensure_grad(a_); a_.grad += n.grad * b_.val[0]; }
            if (b_.requires_grad) { ensure_grad(b_); b_.grad[0] += (n.grad * a_.val).sum(); }
        });
    }
    if (is_scalar(a) && !is_scalar(b)) return mul(b, a);
    check_same_size(a, b, "mul");
    return make_node(a->val * b->val, a->dims, {a, b}, [](Node& n) {
        auto& a_ = *n.parents[0];
        auto& b_ = *n.parents[1];
        if (a_.requires_grad) { ensure_grad(a_); a_.grad += n.grad * b_.val; }
        if (b_.requires_grad) { ensure_grad(b_); b_.grad += n.grad * a_.val; }
    });
}

Var div(const Var& a, const Var& b) {
    if (is_scalar(b)) {
        return make_node(a->val / b->val[0], a->dims, {a, b}, [](Node& n) {
            auto& a_ = *n.parents[0];
            auto& b_ = *n.parents[1];
            const double bv = b_.val[0];
            if (a_.requires_grad) { ensure_grad(a_); a_.grad += n.grad / bv; }
            if (b_.requires_grad) {
                ensure_grad(b_);
                b_.grad[0] += -(n.grad * a_.val).sum() / (bv * bv);
            }
        });
    }
    check_same_size(a, b, "div");
    return make_node(a->val / b->val, a->dims, {a, b}, [](Node& n) {
        auto& a_ = *n.parents[0];
        auto& b_ = *n.parents[1];
        if (a_.requires_grad) { ensure_grad(a_); a_.grad += n.grad / b_.val; }
        if (b_.requires_grad) {
            ensure_grad(b_);
            b_.grad += -n.grad * a_.val / (b_.val * b_.val);
        }
    });
}

Var add_const(const Var& a, double c) {
    return make_node(a->val + c, a->dims, {a}, [](Node& n) {
        auto& a_ = *n.parents[0];
        ensure_grad(a_);
        a_.grad += n.grad;
    });
}

Var mul_const(const Var& a, double c) {
    return make_node(a->val * c, a->dims, {a}, [c](Node& n) {
        auto& a_ = *n.parents[0];
        ensure_grad(a_);
        a_.grad += n.grad * c;
    });
}

Var neg(const Var& a) { return mul_const(a, -1.0); }

Var vsum(const Var& a) {
    Arr v(1);
    v[0] = a->val.sum();
    return make_node(std::move(v), scalar_dims(), {a}, [](Node& n) {
        auto& a_ = *n.parents[0];
        ensure_grad(a_);
        a_.grad += n.grad[0];
    });
}

Var vmean(const Var& a) { return mul_const(vsum(a), 1.0 / static_cast<double>(a->val.size())); }

Var dot(const Var& a, const Var& b) {
    check_same_size(a, b, "dot");
    Arr v(1);
    v[0] = (a->val * b->val).sum();
    return make_node(std::move(v), scalar_dims(), {a, b}, [](Node& n) {
        auto& a_ = *n.parents[0];
        auto& b_ = *n.parents[1];
        if (a_.requires_grad) { ensure_grad(a_); a_.grad += n.grad[0] * b_.val; }
        if (b_.requires_grad) { ensure_grad(b_); b_.grad += n.grad[0] * a_.val; }
    });
}

Var vexp(const Var& a) {
    auto n = make_node(a->val.exp(), a->dims, {a}, [](Node& n_) {
        auto& a_ = *n_.parents[0];
        ensure_grad(a_);
        a_.grad += n_.grad * n_.val;
    });
    return n;
}

Var vlog(const Var& a) {
    return make_node(a->val.log(), a->dims, {a}, [](Node& n) {
        auto& a_ = *n.parents[0];
        ensure_grad(a_);
        a_.grad += n.grad / a_.val;
    });
}

Var vtanh(const Var& a) {
    return make_node(a->val.tanh(), a->dims, {a}, [](Node& n) {
        auto& a_ = *n.parents[0];
        ensure_grad(a_);
        a_.grad += n.grad * (1.0 - n.val.square());
    });
}

Var vsigmoid(const Var& a) {
    Arr v = 1.0 / (1.0 + (-a->val).exp());
    return make_node(std::move(v), a->dims, {a}, [](Node& n) {
        auto& a_ = *n.parents[0];
        ensure_grad(a_);
        a_.grad += n.grad * n.val * (1.0 - n.val);
    });
}

Var vrelu(const Var& a) {
    return make_node(a->val.max(0.0), a->dims, {a}, [](Node& n) {
        auto& a_ = *n.parents[0];
        ensure_grad(a_);
        a_.grad += n.grad * (a_.val > 0.0).cast<double>();
    });
}

Var vlrelu(const Var& a, double slope) {
    Arr v = (a->val > 0.0).select(a->val, a->val * slope);
    return make_node(std::move(v), a->dims, {a}, [slope](Node& n) {
        auto& a_ = *n.parents[0];
        ensure_grad(a_);
        a_.grad += n.grad * (a_.val > 0.0).select(Arr::Ones(a_.val.size()),
                                                  Arr::Constant(a_.val.size(), slope));
    });
}

Var vsquare(const Var& a) {
    return make_node(a->val.square(), a->dims, {a}, [](Node& n) {
        auto& a_ = *n.parents[0];
        ensure_grad(a_);
        a_.grad += n.grad * 2.0 * a_.val;
    });
}

Var vsqrt(const Var& a) {
    return make_node(a->val.sqrt(), a->dims, {a}, [](Node& n) {
        auto& a_ = *n.parents[0];
        ensure_grad(a_);
        a_.grad += n.grad * 0.5 / n.val;
    });
}

Var vabs(const Var& a) {
    return make_node(a->val.abs(), a->dims, {a}, [](Node& n) {
        auto& a_ = *n.parents[0];
        ensure_grad(a_);
        a_.grad += n.grad * a_.val.sign();  // subgradient 0 at the origin
    });
}

Var vclamp(const Var& a, double lo, double hi) {
    return make_node(a->val.max(lo).min(hi), a->dims, {a}, [lo, hi](Node& n) {
        auto& a_ = *n.parents[0];
        ensure_grad(a_);
        a_.grad += n.grad * ((a_.val > lo) && (a_.val < hi)).cast<double>();
    });
}

Var matvec_const(std::shared_ptr<const Eigen::MatrixXd> W, const Var& x) {
    if (W->cols() != x->val.size()) throw InputError("matvec_const: dimension mismatch");
    Eigen::VectorXd y = (*W) * x->val.matrix();
    return make_node(y.array(), vec_dims(static_cast<int>(W->rows())), {x},
                     [W](Node& n) {
                         auto& x_ = *n.parents[0];
                         ensure_grad(x_);
                         x_.grad += (W->transpose() * n.grad.matrix()).array();
                     });
}

Var linear(const Var& W, const Var& x, const Var& b) {
    const int rows = W->dims.h, cols = W->dims.w;
    if (cols != x->val.size() || rows != b->val.size())
        throw InputError("linear: dimension mismatch");
    Eigen::Map<const RowMat> Wm(W->val.data(), rows, cols);
    Eigen::VectorXd y = Wm * x->val.matrix() + b->val.matrix();
    return make_node(y.array(), vec_dims(rows), {W, x, b}, [rows, cols](Node& n) {
        auto& W_ = *n.parents[0];
        auto& x_ = *n.parents[1];
        auto& b_ = *n.parents[2];
        Eigen::Map<const RowMat> Wm_(W_.val.data(), rows, cols);
        if (W_.requires_grad) {
            ensure_grad(W_);
            Eigen::Map<RowMat> gW(W_.grad.data(), rows, cols);
            gW += n.grad.matrix() * x_.val.matrix().transpose();
        }
        if (x_.requires_grad) {
            ensure_grad(x_);
            x_.grad += (Wm_.transpose() * n.grad.matrix()).array();
        }
        if (b_.requires_grad) {
            ensure_grad(b_);
            b_.grad += n.grad;
        }
    });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int kh, int kw, int stride, int pad) {
    const Dims d = x->dims;
    const int cout = w->dims.h;
    const int K = d.c * kh * kw;
    if (w->dims.w != K) throw InputError("conv2d: weight/input channel mismatch");
    if (b->val.size() != cout) throw InputError("conv2d: bias size mismatch");
    const int ho = (d.h + 2 * pad - kh) / stride + 1;
    const int wo = (d.w + 2 * pad - kw) / stride + 1;
    if (ho <= 0 || wo <= 0) throw InputError("conv2d: output would be empty");

    RowMat col = im2col(x->val, d, kh, kw, stride, pad, ho, wo);
    Eigen::Map<const RowMat> Wm(w->val.data(), cout, K);
    RowMat y = Wm * col;
    Arr out(cout * ho * wo);
    Eigen::Map<RowMat>(out.data(), cout, ho * wo) = y;
    for (int o = 0; o < cout; ++o)
        out.segment(static_cast<std::ptrdiff_t>(o) * ho * wo, ho * wo) += b->val[o];

    Dims od{cout, ho, wo};
    // The column matrix is rebuilt in the backward pass to keep graph memory
    // proportional to activations rather than unrolled patches.
    return make_node(std::move(out), od, {x, w, b},
                     [d, cout, K, kh, kw, stride, pad, ho, wo](Node& n) {
                         auto& x_ = *n.parents[0];
                         auto& w_ = *n.parents[1];
                         auto& b_ = *n.parents[2];
                         Eigen::Map<const RowMat> gY(n.grad.data(), cout, ho * wo);
                         if (b_.requires_grad) {
                             ensure_grad(b_);
                             for (int o = 0; o < cout; ++o) b_.grad[o] += gY.row(o).sum();
                         }
                         if (w_.requires_grad || x_.requires_grad) {
                             RowMat col_ = im2col(x_.val, d, kh, kw, stride, pad, ho, wo);
                             if (w_.requires_grad) {
                                 ensure_grad(w_);
                                 Eigen::Map<RowMat> gW(w_.grad.data(), cout, K);
                                 gW += gY * col_.transpose();
                             }
                             if (x_.requires_grad) {
                                 ensure_grad(x_);
                                 Eigen::Map<const RowMat> Wm_(w_.val.data(), cout, K);
                                 RowMat gcol = Wm_.transpose() * gY;
                                 col2im_add(x_.grad, d, gcol, kh, kw, stride, pad, ho, wo);
                             }
                         }
                     });
}

Var avg_pool(const Var& x, int fy, int fx) {
    const Dims d = x->dims;
    if (fy < 1 || fx < 1) throw InputError("avg_pool: bad factor");
    const int ho = (d.h + fy - 1) / fy;
    const int wo = (d.w + fx - 1) / fx;
    Arr out = Arr::Zero(d.c * ho * wo);
    for (int c = 0; c < d.c; ++c) {
        const double* plane = x->val.data() + static_cast<std::ptrdiff_t>(c) * d.h * d.w;
        double* oplane = out.data() + static_cast<std::ptrdiff_t>(c) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
            const int y0 = oy * fy, y1 = std::min(d.h, y0 + fy);
            for (int ox = 0; ox < wo; ++ox) {
                const int x0 = ox * fx, x1 = std::min(d.w, x0 + fx);
                double s = 0.0;
                for (int y = y0; y < y1; ++y)
                    for (int xx = x0; xx < x1; ++xx) s += plane[y * d.w + xx];
                oplane[oy * wo + ox] = s / ((y1 - y0) * (x1 - x0));
            }
        }
    }
    Dims od{d.c, ho, wo};
    return make_node(std::move(out), od, {x}, [d, fy, fx, ho, wo](Node& n) {
        auto& x_ = *n.parents[0];
        ensure_grad(x_);
        for (int c = 0; c < d.c; ++c) {
            double* gplane = x_.grad.data() + static_cast<std::ptrdiff_t>(c) * d.h * d.w;
            const double* goplane = n.grad.data() + static_cast<std::ptrdiff_t>(c) * ho * wo;
            for (int oy = 0; oy < ho; ++oy) {
                const int y0 = oy * fy, y1 = std::min(d.h, y0 + fy);
                for (int ox = 0; ox < wo; ++ox) {
                    const int x0 = ox * fx, x1 = std::min(d.w, x0 + fx);
                    const double g = goplane[oy * wo + ox] / ((y1 - y0) * (x1 - x0));
                    for (int y = y0; y < y1; ++y)
                        for (int xx = x0; xx < x1; ++xx) gplane[y * d.w + xx] += g;
                }
            }
        }
    });
}

Var upsample_nearest(const Var& x, int f) {
    const Dims d = x->dims;
    const int ho = d.h * f, wo = d.w * f;
    Arr out(d.c * ho * wo);
    for (int c = 0; c < d.c; ++c) {
        const double* plane = x->val.data() + static_cast<std::ptrdiff_t>(c) * d.h * d.w;
        double* oplane = out.data() + static_cast<std::ptrdiff_t>(c) * ho * wo;
        for (int y = 0; y < ho; ++y)
            for (int xx = 0; xx < wo; ++xx)
                oplane[y * wo + xx] = plane[(y / f) * d.w + (xx / f)];
    }
    Dims od{d.c, ho, wo};
    return make_node(std::move(out), od, {x}, [d, f, ho, wo](Node& n) {
        auto& x_ = *n.parents[0];
        ensure_grad(x_);
        for (int c = 0; c < d.c; ++c) {
            double* gplane = x_.grad.data() + static_cast<std::ptrdiff_t>(c) * d.h * d.w;
            const double* goplane = n.grad.data() + static_cast<std::ptrdiff_t>(c) * ho * wo;
            for (int y = 0; y < ho; ++y)
                for (int xx = 0; xx < wo; ++xx)
                    gplane[(y / f) * d.w + (xx / f)] += goplane[y * wo + xx];
        }
    });
}

namespace {

Var filter1d(const Var& x, const Eigen::VectorXd& k, bool along_x) {
    const Dims d = x->dims;
    const int klen = static_cast<int>(k.size());
    const int ho = along_x ? d.h : d.h - klen + 1;
    const int wo = along_x ? d.w - klen + 1 : d.w;
    if (ho <= 0 || wo <= 0) throw InputError("filter1d: kernel larger than input");
    Arr out = Arr::Zero(d.c * ho * wo);
    for (int c = 0; c < d.c; ++c) {
        const double* plane = x->val.data() + static_cast<std::ptrdiff_t>(c) * d.h * d.w;
        double* oplane = out.data() + static_cast<std::ptrdiff_t>(c) * ho * wo;
        for (int y = 0; y < ho; ++y) {
            for (int xx = 0; xx < wo; ++xx) {
                double s = 0.0;
                for (int i = 0; i < klen; ++i)
                    s += k[i] * (along_x ? plane[y * d.w + xx + i] : plane[(y + i) * d.w + xx]);
                oplane[y * wo + xx] = s;
            }
        }
    }
    Dims od{d.c, ho, wo};
    return make_node(std::move(out), od, {x}, [d, k, along_x, ho, wo](Node& n) {
        auto& x_ = *n.parents[0];
        ensure_grad(x_);
        const int klen_ = static_cast<int>(k.size());
        for (int c = 0; c < d.c; ++c) {
            double* gplane = x_.grad.data() + static_cast<std::ptrdiff_t>(c) * d.h * d.w;
            const double* goplane = n.grad.data() + static_cast<std::ptrdiff_t>(c) * ho * wo;
            for (int y = 0; y < ho; ++y)
                for (int xx = 0; xx < wo; ++xx) {
                    const double g = goplane[y * wo + xx];
                    for (int i = 0; i < klen_; ++i) {
                        if (along_x)
                            gplane[y * d.w + xx + i] += k[i] * g;
                        else
                            gplane[(y + i) * d.w + xx] += k[i] * g;
                    }
                }
        }
    });
}

}  // namespace

Var filter1d_x(const Var& x, const Eigen::VectorXd& k) { return filter1d(x, k, true); }
Var filter1d_y(const Var& x, const Eigen::VectorXd& k) { return filter1d(x, k, false); }

Var add_channel_bias(const Var& x, const Var& b) {
    const Dims d = x->dims;
    if (b->val.size() != d.c) throw InputError("add_channel_bias: channel mismatch");
    Arr out = x->val;
    const int plane = d.h * d.w;
    for (int c = 0; c < d.c; ++c)
        out.segment(static_cast<std::ptrdiff_t>(c) * plane, plane) += b->val[c];
    return make_node(std::move(out), d, {x, b}, [d, plane](Node& n) {
        auto& x_ = *n.parents[0];
        auto& b_ = *n.parents[1];
        if (x_.requires_grad) { ensure_grad(x_); x_.grad += n.grad; }
        if (b_.requires_grad) {
            ensure_grad(b_);
            for (int c = 0; c < d.c; ++c)
                b_.grad[c] += n.grad.segment(static_cast<std::ptrdiff_t>(c) * plane, plane).sum();
        }
    });
}

Var softmax_vec(const Var& x) {
    const double m = x->val.maxCoeff();
    Arr e = (x->val - m).exp();
    Arr y = e / e.sum();
    return make_node(std::move(y), x->dims, {x}, [](Node& n) {
        auto& x_ = *n.parents[0];
        ensure_grad(x_);
        const double gy = (n.grad * n.val).sum();
        x_.grad += n.val * (n.grad - gy);
    });
}

Var concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw InputError("concat: empty");
    int total = 0;
    for (const auto& p : parts) total += static_cast<int>(p->val.size());
    Arr out(total);
    int off = 0;
    for (const auto& p : parts) {
        out.segment(off, p->val.size()) = p->val;
        off += static_cast<int>(p->val.size());
    }
    return make_node(std::move(out), vec_dims(total), parts, [](Node& n) {
        int off_ = 0;
        for (auto& p : n.parents) {
            if (p->requires_grad) {
                ensure_grad(*p);
                p->grad += n.grad.segment(off_, p->val.size());
            }
            off_ += static_cast<int>(p->val.size());
        }
    });
}

Var pick(const Var& x, int index) {
    if (index < 0 || index >= x->val.size()) throw InputError("pick: index out of range");
    Arr v(1);
    v[0] = x->val[index];
    return make_node(std::move(v), scalar_dims(), {x}, [index](Node& n) {
        auto& x_ = *n.parents[0];
        ensure_grad(x_);
        x_.grad[index] += n.grad[0];
    });
}

Var pick_row(const Var& x, int index) {
    const int rows = x->dims.h, cols = x->dims.w;
    if (index < 0 || index >= rows) throw InputError("pick_row: index out of range");
    Arr v = x->val.segment(static_cast<std::ptrdiff_t>(index) * cols, cols);
    return make_node(std::move(v), vec_dims(cols), {x}, [index, cols](Node& n) {
        auto& x_ = *n.parents[0];
        ensure_grad(x_);
        x_.grad.segment(static_cast<std::ptrdiff_t>(index) * cols, cols) += n.grad;
    });
}

Var l2_norm(const Var& a) { return vsqrt(vsum(vsquare(a))); }

Var normalize(const Var& a) { return div(a, l2_norm(a)); }

Var cosine(const Var& a, const Var& b) {
    return div(dot(a, b), mul(l2_norm(a), l2_norm(b)));
}

}  // namespace stainforge::ad
