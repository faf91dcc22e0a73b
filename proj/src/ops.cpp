#include "dsmt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <initializer_list>

#include "dsmt/rng.hpp"

namespace dsmt {

namespace {

#ifdef NDEBUG
bool g_strict_finite = false;
#else
bool g_strict_finite = true;
#endif

Tape* common_tape(std::initializer_list<const Var*> vs) {
    Tape* t = nullptr;
    for (const Var* v : vs) {
        if (!v->recorded()) continue;
        if (!t)
            t = v->tape;
        else if (t != v->tape)
            throw ContractError("op: inputs recorded on different tapes");
    }
    return t;
}

std::shared_ptr<const Tensor> share(Tensor&& out, const char* opname) {
    if (g_strict_finite && !out.all_finite())
        throw NumericError(std::string(opname) + ": non-finite output");
    return std::make_shared<const Tensor>(std::move(out));
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw ContractError(msg);
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

// C = A·B
Tensor mm(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    Tensor c(Shape{m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = pa[i * k + kk];
            if (av == 0.0) continue;
            const double* brow = pb + kk * n;
            double* crow = pc + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

// C = A·Bᵀ, B is (n,k)
Tensor mm_nt(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(0);
    Tensor c(Shape{m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = pa + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = pb + j * k;
            double s = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
            pc[i * n + j] = s;
        }
    }
    return c;
}

// C = Aᵀ·B, A is (k,m), B is (k,n)
Tensor mm_tn(const Tensor& a, const Tensor& b) {
    const std::size_t k = a.extent(0), m = a.extent(1), n = b.extent(1);
    Tensor c(Shape{m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (std::size_t kk = 0; kk < k; ++kk) {
        const double* arow = pa + kk * m;
        const double* brow = pb + kk * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = pc + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

std::size_t prod(const Shape& s, std::size_t lo, std::size_t hi) {
    std::size_t p = 1;
    for (std::size_t i = lo; i < hi; ++i) p *= s[i];
    return p;
}

constexpr double kNormEps = 1e-12;

}  // namespace

void set_strict_finite_checks(bool on) { g_strict_finite = on; }
bool strict_finite_checks() { return g_strict_finite; }

// ---------------------------------------------------------------- add/sub/mul

Var add(const Var& a, const Var& b) {
    require(a.val().same_shape(b.val()), "add: shape mismatch " + shape_str(a.val().shape()) +
                                             " vs " + shape_str(b.val().shape()));
    Tensor out = a.val();
    const double* pb = b.val().data();
    double* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] += pb[i];
    Tape* tape = common_tape({&a, &b});
    auto sp = share(std::move(out), "add");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int pa = a.node, pbn = b.node;
        r.tape = tape;
        r.node = tape->record(sp->shape(), {pa, pbn}, [pa, pbn](const Tensor& g, Tape& t) {
            t.accumulate(pa, g);
            t.accumulate(pbn, g);
        });
    }
    return r;
}

Var sub(const Var& a, const Var& b) {
    require(a.val().same_shape(b.val()), "sub: shape mismatch " + shape_str(a.val().shape()) +
                                             " vs " + shape_str(b.val().shape()));
    Tensor out = a.val();
    const double* pb = b.val().data();
    double* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] -= pb[i];
    Tape* tape = common_tape({&a, &b});
    auto sp = share(std::move(out), "sub");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int pa = a.node, pbn = b.node;
        r.tape = tape;
        r.node = tape->record(sp->shape(), {pa, pbn}, [pa, pbn](const Tensor& g, Tape& t) {
            t.accumulate(pa, g);
            if (pbn >= 0) {
                Tensor neg = g;
                for (double& v : neg.values()) v = -v;
                t.accumulate(pbn, neg);
            }
        });
    }
    return r;
}

Var mul(const Var& a, const Var& b) {
    require(a.val().same_shape(b.val()), "mul: shape mismatch " + shape_str(a.val().shape()) +
                                             " vs " + shape_str(b.val().shape()));
    Tensor out = a.val();
    const double* pb = b.val().data();
    double* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] *= pb[i];
    Tape* tape = common_tape({&a, &b});
    auto sp = share(std::move(out), "mul");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int pa = a.node, pbn = b.node;
        auto av = a.value, bv = b.value;
        r.tape = tape;
        r.node = tape->record(sp->shape(), {pa, pbn}, [pa, pbn, av, bv](const Tensor& g, Tape& t) {
            if (pa >= 0) {
                Tensor da = g;
                const double* p = bv->data();
                double* d = da.data();
                for (std::size_t i = 0; i < da.size(); ++i) d[i] *= p[i];
                t.accumulate(pa, da);
            }
            if (pbn >= 0) {
                Tensor db = g;
                const double* p = av->data();
                double* d = db.data();
                for (std::size_t i = 0; i < db.size(); ++i) d[i] *= p[i];
                t.accumulate(pbn, db);
            }
        });
    }
    return r;
}

Var scale(const Var& a, double c) {
    Tensor out = a.val();
    for (double& v : out.values()) v *= c;
    Tape* tape = common_tape({&a});
    auto sp = share(std::move(out), "scale");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int pa = a.node;
        r.tape = tape;
        r.node = tape->record(sp->shape(), {pa}, [pa, c](const Tensor& g, Tape& t) {
            Tensor d = g;
            for (double& v : d.values()) v *= c;
            t.accumulate(pa, d);
        });
    }
    return r;
}

Var add_scalar(const Var& a, double c) {
    Tensor out = a.val();
    for (double& v : out.values()) v += c;
    Tape* tape = common_tape({&a});
    auto sp = share(std::move(out), "add_scalar");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int pa = a.node;
        r.tape = tape;
        r.node = tape->record(sp->shape(), {pa},
                              [pa](const Tensor& g, Tape& t) { t.accumulate(pa, g); });
    }
    return r;
}

// ---------------------------------------------------------------- matmul

Var matmul(const Var& a, const Var& b) {
    require(a.val().rank() == 2 && b.val().rank() == 2 && a.val().extent(1) == b.val().extent(0),
            "matmul: shape mismatch " + shape_str(a.val().shape()) + "·" +
                shape_str(b.val().shape()));
    Tensor out = mm(a.val(), b.val());
    Tape* tape = common_tape({&a, &b});
    auto sp = share(std::move(out), "matmul");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int pa = a.node, pb = b.node;
        auto av = a.value, bv = b.value;
        r.tape = tape;
        r.node = tape->record(sp->shape(), {pa, pb}, [pa, pb, av, bv](const Tensor& g, Tape& t) {
            if (pa >= 0) t.accumulate(pa, mm_nt(g, *bv));  // g·Bᵀ
            if (pb >= 0) t.accumulate(pb, mm_tn(*av, g));  // Aᵀ·g
        });
    }
    return r;
}

Var matmul_nt(const Var& a, const Var& b) {
    require(a.val().rank() == 2 && b.val().rank() == 2 && a.val().extent(1) == b.val().extent(1),
            "matmul_nt: shape mismatch " + shape_str(a.val().shape()) + "·" +
                shape_str(b.val().shape()) + "ᵀ");
    Tensor out = mm_nt(a.val(), b.val());
    Tape* tape = common_tape({&a, &b});
    auto sp = share(std::move(out), "matmul_nt");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int pa = a.node, pb = b.node;
        auto av = a.value, bv = b.value;
        r.tape = tape;
        r.node = tape->record(sp->shape(), {pa, pb}, [pa, pb, av, bv](const Tensor& g, Tape& t) {
            if (pa >= 0) t.accumulate(pa, mm(g, *bv));     // g·B
            if (pb >= 0) t.accumulate(pb, mm_tn(g, *av));  // gᵀ·A
        });
    }
    return r;
}

Var bmm_nt(const Var& a, const Var& b) {
    const Tensor& A = a.val();
    const Tensor& B = b.val();
    require(A.rank() == 3 && B.rank() == 3 && A.extent(0) == B.extent(0) &&
                A.extent(2) == B.extent(2),
            "bmm_nt: shape mismatch " + shape_str(A.shape()) + "·" + shape_str(B.shape()) + "ᵀ");
    const std::size_t nb = A.extent(0), p = A.extent(1), q = A.extent(2), rr = B.extent(1);
    Tensor out(Shape{nb, p, rr});
    for (std::size_t bi = 0; bi < nb; ++bi) {
        const double* pa = A.data() + bi * p * q;
        const double* pb = B.data() + bi * rr * q;
        double* po = out.data() + bi * p * rr;
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < rr; ++j) {
                double s = 0.0;
                for (std::size_t kk = 0; kk < q; ++kk) s += pa[i * q + kk] * pb[j * q + kk];
                po[i * rr + j] = s;
            }
    }
    Tape* tape = common_tape({&a, &b});
    auto sp = share(std::move(out), "bmm_nt");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int pan = a.node, pbn = b.node;
        auto av = a.value, bv = b.value;
        r.tape = tape;
        r.node = tape->record(
            sp->shape(), {pan, pbn},
            [pan, pbn, av, bv, nb, p, q, rr](const Tensor& g, Tape& t) {
                if (pan >= 0) {
                    Tensor da(av->shape());
                    for (std::size_t bi = 0; bi < nb; ++bi) {
                        const double* pg = g.data() + bi * p * rr;
                        const double* pb = bv->data() + bi * rr * q;
                        double* pd = da.data() + bi * p * q;
                        for (std::size_t i = 0; i < p; ++i)
                            for (std::size_t j = 0; j < rr; ++j) {
                                const double gv = pg[i * rr + j];
                                if (gv == 0.0) continue;
                                for (std::size_t kk = 0; kk < q; ++kk)
                                    pd[i * q + kk] += gv * pb[j * q + kk];
                            }
                    }
                    t.accumulate(pan, da);
                }
                if (pbn >= 0) {
                    Tensor db(bv->shape());
                    for (std::size_t bi = 0; bi < nb; ++bi) {
                        const double* pg = g.data() + bi * p * rr;
                        const double* pa = av->data() + bi * p * q;
                        double* pd = db.data() + bi * rr * q;
                        for (std::size_t i = 0; i < p; ++i)
                            for (std::size_t j = 0; j < rr; ++j) {
                                const double gv = pg[i * rr + j];
                                if (gv == 0.0) continue;
                                for (std::size_t kk = 0; kk < q; ++kk)
                                    pd[j * q + kk] += gv * pa[i * q + kk];
                            }
                    }
                    t.accumulate(pbn, db);
                }
            });
    }
    return r;
}

Var scaled_dot(const Var& q, const Var& k) {
    require(q.val().rank() == 3, "scaled_dot: expected rank-3 input, got " +
                                     shape_str(q.val().shape()));
    const double s = 1.0 / std::sqrt(static_cast<double>(q.val().extent(2)));
    return scale(bmm_nt(q, k), s);
}

// ---------------------------------------------------------------- shape ops

Var reshape(const Var& a, Shape target) {
    std::size_t n = 1;
    for (std::size_t e : target) n *= e;
    require(n == a.val().size(), "reshape: cannot view " + shape_str(a.val().shape()) + " as " +
                                     shape_str(target));
    Tensor out = Tensor::from(target, a.val().values());
    Tape* tape = common_tape({&a});
    auto sp = share(std::move(out), "reshape");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int pa = a.node;
        Shape src = a.val().shape();
        r.tape = tape;
        r.node = tape->record(sp->shape(), {pa}, [pa, src](const Tensor& g, Tape& t) {
            t.accumulate(pa, Tensor::from(src, g.values()));
        });
    }
    return r;
}

Var concat(const Var& a, const Var& b, std::size_t axis) {
    const Tensor& A = a.val();
    const Tensor& B = b.val();
    require(A.rank() == B.rank() && axis < A.rank(),
            "concat: rank mismatch " + shape_str(A.shape()) + " vs " + shape_str(B.shape()));
    for (std::size_t i = 0; i < A.rank(); ++i)
        require(i == axis || A.extent(i) == B.extent(i),
                "concat: shape mismatch " + shape_str(A.shape()) + " vs " + shape_str(B.shape()) +
                    " on axis " + std::to_string(axis));
    Shape os = A.shape();
    os[axis] += B.extent(axis);
    const std::size_t outer = prod(A.shape(), 0, axis);
    const std::size_t ia = A.extent(axis) * prod(A.shape(), axis + 1, A.rank());
    const std::size_t ib = B.extent(axis) * prod(B.shape(), axis + 1, B.rank());
    Tensor out(os);
    for (std::size_t o = 0; o < outer; ++o) {
        std::memcpy(out.data() + o * (ia + ib), A.data() + o * ia, ia * sizeof(double));
        std::memcpy(out.data() + o * (ia + ib) + ia, B.data() + o * ib, ib * sizeof(double));
    }
    Tape* tape = common_tape({&a, &b});
    auto sp = share(std::move(out), "concat");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int pa = a.node, pb = b.node;
        Shape sa = A.shape(), sb = B.shape();
        r.tape = tape;
        r.node = tape->record(sp->shape(), {pa, pb},
                              [pa, pb, sa, sb, outer, ia, ib](const Tensor& g, Tape& t) {
                                  if (pa >= 0) {
                                      Tensor da(sa);
                                      for (std::size_t o = 0; o < outer; ++o)
                                          std::memcpy(da.data() + o * ia,
                                                      g.data() + o * (ia + ib), ia * sizeof(double));
                                      t.accumulate(pa, da);
                                  }
                                  if (pb >= 0) {
                                      Tensor db(sb);
                                      for (std::size_t o = 0; o < outer; ++o)
                                          std::memcpy(db.data() + o * ib,
                                                      g.data() + o * (ia + ib) + ia,
                                                      ib * sizeof(double));
                                      t.accumulate(pb, db);
                                  }
                              });
    }
    return r;
}

Var slice(const Var& a, std::size_t axis, std::size_t lo, std::size_t hi) {
    const Tensor& A = a.val();
    require(axis < A.rank() && lo < hi && hi <= A.extent(axis),
            "slice: bad range [" + std::to_string(lo) + "," + std::to_string(hi) + ") on axis " +
                std::to_string(axis) + " of " + shape_str(A.shape()));
    Shape os = A.shape();
    os[axis] = hi - lo;
    const std::size_t outer = prod(A.shape(), 0, axis);
    const std::size_t inner = prod(A.shape(), axis + 1, A.rank());
    const std::size_t in_stride = A.extent(axis) * inner;
    const std::size_t out_stride = (hi - lo) * inner;
    Tensor out(os);
    for (std::size_t o = 0; o < outer; ++o)
        std::memcpy(out.data() + o * out_stride, A.data() + o * in_stride + lo * inner,
                    out_stride * sizeof(double));
    Tape* tape = common_tape({&a});
    auto sp = share(std::move(out), "slice");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int pa = a.node;
        Shape sa = A.shape();
        r.tape = tape;
        r.node = tape->record(sp->shape(), {pa},
                              [pa, sa, outer, inner, in_stride, out_stride, lo](const Tensor& g,
                                                                                Tape& t) {
                                  Tensor da(sa);
                                  for (std::size_t o = 0; o < outer; ++o)
                                      std::memcpy(da.data() + o * in_stride + lo * inner,
                                                  g.data() + o * out_stride,
                                                  out_stride * sizeof(double));
                                  t.accumulate(pa, da);
                              });
    }
    return r;
}

Var stack3(const Var& a, const Var& b, const Var& c) {
    const Tensor& A = a.val();
    require(A.rank() == 2 && A.same_shape(b.val()) && A.same_shape(c.val()),
            "stack3: inputs must share shape (n,d), got " + shape_str(A.shape()) + ", " +
                shape_str(b.val().shape()) + ", " + shape_str(c.val().shape()));
    const std::size_t n = A.extent(0), d = A.extent(1);
    Tensor out(Shape{n, 3, d});
    for (std::size_t i = 0; i < n; ++i) {
        std::memcpy(out.data() + (i * 3 + 0) * d, A.data() + i * d, d * sizeof(double));
        std::memcpy(out.data() + (i * 3 + 1) * d, b.val().data() + i * d, d * sizeof(double));
        std::memcpy(out.data() + (i * 3 + 2) * d, c.val().data() + i * d, d * sizeof(double));
    }
    Tape* tape = common_tape({&a, &b, &c});
    auto sp = share(std::move(out), "stack3");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int ps[3] = {a.node, b.node, c.node};
        r.tape = tape;
        r.node = tape->record(sp->shape(), {ps[0], ps[1], ps[2]},
                              [p0 = ps[0], p1 = ps[1], p2 = ps[2], n, d](const Tensor& g, Tape& t) {
                                  const int ids[3] = {p0, p1, p2};
                                  for (int s = 0; s < 3; ++s) {
                                      if (ids[s] < 0) continue;
                                      Tensor dd(Shape{n, d});
                                      for (std::size_t i = 0; i < n; ++i)
                                          std::memcpy(dd.data() + i * d,
                                                      g.data() + (i * 3 + static_cast<std::size_t>(s)) * d,
                                                      d * sizeof(double));
                                      t.accumulate(ids[s], dd);
                                  }
                              });
    }
    return r;
}

// ---------------------------------------------------------------- nonlinearities

Var sigmoid(const Var& a) {
    Tensor out = a.val();
    for (double& v : out.values()) v = stable_sigmoid(v);
    Tape* tape = common_tape({&a});
    auto sp = share(std::move(out), "sigmoid");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int pa = a.node;
        r.tape = tape;
        r.node = tape->record(sp->shape(), {pa}, [pa, sp](const Tensor& g, Tape& t) {
            Tensor d = g;
            const double* s = sp->data();
            double* pd = d.data();
            for (std::size_t i = 0; i < d.size(); ++i) pd[i] *= s[i] * (1.0 - s[i]);
            t.accumulate(pa, d);
        });
    }
    return r;
}

Var tanh_op(const Var& a) {
    Tensor out = a.val();
    for (double& v : out.values()) v = std::tanh(v);
    Tape* tape = common_tape({&a});
    auto sp = share(std::move(out), "tanh");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int pa = a.node;
        r.tape = tape;
        r.node = tape->record(sp->shape(), {pa}, [pa, sp](const Tensor& g, Tape& t) {
            Tensor d = g;
            const double* s = sp->data();
            double* pd = d.data();
            for (std::size_t i = 0; i < d.size(); ++i) pd[i] *= 1.0 - s[i] * s[i];
            t.accumulate(pa, d);
        });
    }
    return r;
}

Var relu(const Var& a) {
    Tensor out = a.val();
    for (double& v : out.values())
        if (v < 0.0) v = 0.0;
    Tape* tape = common_tape({&a});
    auto sp = share(std::move(out), "relu");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int pa = a.node;
        auto av = a.value;
        r.tape = tape;
        r.node = tape->record(sp->shape(), {pa}, [pa, av](const Tensor& g, Tape& t) {
            Tensor d = g;
            const double* x = av->data();
            double* pd = d.data();
            for (std::size_t i = 0; i < d.size(); ++i)
                if (x[i] <= 0.0) pd[i] = 0.0;
            t.accumulate(pa, d);
        });
    }
    return r;
}

Var softmax_rows(const Var& a) {
    const Tensor& A = a.val();
    require(A.rank() >= 1, "softmax_rows: rank-0 input");
    const std::size_t w = A.extent(A.rank() - 1);
    const std::size_t rows = A.size() / w;
    Tensor out = A;
    double* p = out.data();
    for (std::size_t rix = 0; rix < rows; ++rix) {
        double* row = p + rix * w;
        double m = row[0];
        for (std::size_t j = 1; j < w; ++j) m = std::max(m, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < w; ++j) {
            row[j] = std::exp(row[j] - m);
            sum += row[j];
        }
        for (std::size_t j = 0; j < w; ++j) row[j] /= sum;
    }
    Tape* tape = common_tape({&a});
    auto sp = share(std::move(out), "softmax_rows");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int pa = a.node;
        r.tape = tape;
        r.node = tape->record(sp->shape(), {pa}, [pa, sp, rows, w](const Tensor& g, Tape& t) {
            Tensor d(sp->shape());
            const double* s = sp->data();
            const double* pg = g.data();
            double* pd = d.data();
            for (std::size_t rix = 0; rix < rows; ++rix) {
                const double* srow = s + rix * w;
                const double* grow = pg + rix * w;
                double dot = 0.0;
                for (std::size_t j = 0; j < w; ++j) dot += grow[j] * srow[j];
                double* drow = pd + rix * w;
                for (std::size_t j = 0; j < w; ++j) drow[j] = srow[j] * (grow[j] - dot);
            }
            t.accumulate(pa, d);
        });
    }
    return r;
}

// ---------------------------------------------------------------- reductions

Var sum_all(const Var& a) {
    double s = 0.0;
    for (double v : a.val().values()) s += v;
    Tape* tape = common_tape({&a});
    auto sp = share(Tensor::scalar(s), "sum_all");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int pa = a.node;
        Shape sa = a.val().shape();
        r.tape = tape;
        r.node = tape->record(sp->shape(), {pa}, [pa, sa](const Tensor& g, Tape& t) {
            t.accumulate(pa, Tensor(sa, g[0]));
        });
    }
    return r;
}

Var mean_all(const Var& a) {
    double s = 0.0;
    for (double v : a.val().values()) s += v;
    const double n = static_cast<double>(a.val().size());
    Tape* tape = common_tape({&a});
    auto sp = share(Tensor::scalar(s / n), "mean_all");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int pa = a.node;
        Shape sa = a.val().shape();
        r.tape = tape;
        r.node = tape->record(sp->shape(), {pa}, [pa, sa, n](const Tensor& g, Tape& t) {
            t.accumulate(pa, Tensor(sa, g[0] / n));
        });
    }
    return r;
}

Var mean_axis(const Var& a, std::size_t axis) {
    const Tensor& A = a.val();
    require(axis < A.rank() && A.rank() >= 2,
            "mean_axis: axis " + std::to_string(axis) + " of " + shape_str(A.shape()));
    const std::size_t outer = prod(A.shape(), 0, axis);
    const std::size_t k = A.extent(axis);
    const std::size_t inner = prod(A.shape(), axis + 1, A.rank());
    Shape os;
    for (std::size_t i = 0; i < A.rank(); ++i)
        if (i != axis) os.push_back(A.extent(i));
    Tensor out(os);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < k; ++j) {
            const double* src = A.data() + (o * k + j) * inner;
            double* dst = out.data() + o * inner;
            for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
    for (double& v : out.values()) v /= static_cast<double>(k);
    Tape* tape = common_tape({&a});
    auto sp = share(std::move(out), "mean_axis");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int pa = a.node;
        Shape sa = A.shape();
        r.tape = tape;
        r.node = tape->record(sp->shape(), {pa},
                              [pa, sa, outer, k, inner](const Tensor& g, Tape& t) {
                                  Tensor d(sa);
                                  const double inv = 1.0 / static_cast<double>(k);
                                  for (std::size_t o = 0; o < outer; ++o)
                                      for (std::size_t j = 0; j < k; ++j) {
                                          double* dst = d.data() + (o * k + j) * inner;
                                          const double* src = g.data() + o * inner;
                                          for (std::size_t i = 0; i < inner; ++i)
                                              dst[i] = src[i] * inv;
                                      }
                                  t.accumulate(pa, d);
                              });
    }
    return r;
}

// ---------------------------------------------------------------- indexed ops

Var gather_rows(const Var& m, std::vector<std::int64_t> idx) {
    const Tensor& M = m.val();
    require(M.rank() >= 2, "gather_rows: input must have rows, got " + shape_str(M.shape()));
    const std::size_t rows = M.extent(0);
    const std::size_t inner = M.size() / rows;
    for (std::int64_t i : idx)
        require(i >= 0 && static_cast<std::size_t>(i) < rows,
                "gather_rows: row index " + std::to_string(i) + " out of " + std::to_string(rows));
    Shape os = M.shape();
    os[0] = idx.size();
    Tensor out(os);
    for (std::size_t e = 0; e < idx.size(); ++e)
        std::memcpy(out.data() + e * inner, M.data() + static_cast<std::size_t>(idx[e]) * inner,
                    inner * sizeof(double));
    Tape* tape = common_tape({&m});
    auto sp = share(std::move(out), "gather_rows");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int pm = m.node;
        Shape sm = M.shape();
        r.tape = tape;
        r.node = tape->record(sp->shape(), {pm},
                              [pm, sm, inner, ix = std::move(idx)](const Tensor& g, Tape& t) {
                                  Tensor d(sm);
                                  for (std::size_t e = 0; e < ix.size(); ++e) {
                                      double* dst = d.data() + static_cast<std::size_t>(ix[e]) * inner;
                                      const double* src = g.data() + e * inner;
                                      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
                                  }
                                  t.accumulate(pm, d);
                              });
    }
    return r;
}

Var scatter_sum_rows(const Var& m, std::vector<std::int64_t> dst, std::size_t n_rows) {
    const Tensor& M = m.val();
    require(M.rank() >= 2 && dst.size() == M.extent(0),
            "scatter_sum_rows: " + std::to_string(dst.size()) + " destinations for " +
                shape_str(M.shape()));
    const std::size_t inner = M.size() / M.extent(0);
    for (std::int64_t i : dst)
        require(i >= 0 && static_cast<std::size_t>(i) < n_rows,
                "scatter_sum_rows: destination " + std::to_string(i) + " out of " +
                    std::to_string(n_rows));
    Shape os = M.shape();
    os[0] = n_rows;
    Tensor out(os);
    for (std::size_t e = 0; e < dst.size(); ++e) {
        double* po = out.data() + static_cast<std::size_t>(dst[e]) * inner;
        const double* src = M.data() + e * inner;
        for (std::size_t i = 0; i < inner; ++i) po[i] += src[i];
    }
    Tape* tape = common_tape({&m});
    auto sp = share(std::move(out), "scatter_sum_rows");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int pm = m.node;
        Shape sm = M.shape();
        r.tape = tape;
        r.node = tape->record(sp->shape(), {pm},
                              [pm, sm, inner, dx = std::move(dst)](const Tensor& g, Tape& t) {
                                  Tensor d(sm);
                                  for (std::size_t e = 0; e < dx.size(); ++e)
                                      std::memcpy(d.data() + e * inner,
                                                  g.data() + static_cast<std::size_t>(dx[e]) * inner,
                                                  inner * sizeof(double));
                                  t.accumulate(pm, d);
                              });
    }
    return r;
}

namespace {

void corr_forward(const double* a, const double* b, double* out, std::size_t d) {
    for (std::size_t k = 0; k < d; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += a[i] * b[(i + k) % d];
        out[k] = s;
    }
}

}  // namespace

Var compose_edges(const Var& rel_feats, const Var& ent_feats, std::vector<std::int64_t> rel_idx,
                  std::vector<std::int64_t> ent_idx, Composition mode) {
    const Tensor& R = rel_feats.val();
    const Tensor& V = ent_feats.val();
    require(R.rank() == 2 && V.rank() == 2 && R.extent(1) == V.extent(1),
            "compose_edges: feature dims differ, " + shape_str(R.shape()) + " vs " +
                shape_str(V.shape()));
    require(rel_idx.size() == ent_idx.size(), "compose_edges: index lists differ in length");
    require(!rel_idx.empty(), "compose_edges: empty edge list");
    const std::size_t d = R.extent(1);
    const std::size_t ne = rel_idx.size();
    for (std::int64_t i : rel_idx)
        require(i >= 0 && static_cast<std::size_t>(i) < R.extent(0),
                "compose_edges: relation index " + std::to_string(i) + " out of range");
    for (std::int64_t i : ent_idx)
        require(i >= 0 && static_cast<std::size_t>(i) < V.extent(0),
                "compose_edges: entity index " + std::to_string(i) + " out of range");
    Tensor out(Shape{ne, d});
    for (std::size_t e = 0; e < ne; ++e) {
        const double* vr = R.data() + static_cast<std::size_t>(rel_idx[e]) * d;
        const double* vt = V.data() + static_cast<std::size_t>(ent_idx[e]) * d;
        double* po = out.data() + e * d;
        if (mode == Composition::Mult) {
            for (std::size_t i = 0; i < d; ++i) po[i] = vr[i] * vt[i];
        } else {
            corr_forward(vr, vt, po, d);
        }
    }
    Tape* tape = common_tape({&rel_feats, &ent_feats});
    auto sp = share(std::move(out), "compose_edges");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int pr = rel_feats.node, pv = ent_feats.node;
        auto rv = rel_feats.value, vv = ent_feats.value;
        r.tape = tape;
        r.node = tape->record(
            sp->shape(), {pr, pv},
            [pr, pv, rv, vv, d, mode, ri = std::move(rel_idx),
             ei = std::move(ent_idx)](const Tensor& g, Tape& t) {
                Tensor dR(rv->shape());
                Tensor dV(vv->shape());
                for (std::size_t e = 0; e < ri.size(); ++e) {
                    const double* ge = g.data() + e * d;
                    const double* vr = rv->data() + static_cast<std::size_t>(ri[e]) * d;
                    const double* vt = vv->data() + static_cast<std::size_t>(ei[e]) * d;
                    double* dr = dR.data() + static_cast<std::size_t>(ri[e]) * d;
                    double* dv = dV.data() + static_cast<std::size_t>(ei[e]) * d;
                    if (mode == Composition::Mult) {
                        for (std::size_t i = 0; i < d; ++i) {
                            dr[i] += ge[i] * vt[i];
                            dv[i] += ge[i] * vr[i];
                        }
                    } else {
                        // out[k] = Σ_i vr[i]·vt[(i+k)%d]
                        for (std::size_t k = 0; k < d; ++k) {
                            const double gv = ge[k];
                            if (gv == 0.0) continue;
                            for (std::size_t i = 0; i < d; ++i) {
                                dr[i] += gv * vt[(i + k) % d];
                                dv[(i + k) % d] += gv * vr[i];
                            }
                        }
                    }
                }
                if (pr >= 0) t.accumulate(pr, dR);
                if (pv >= 0) t.accumulate(pv, dV);
            });
    }
    return r;
}

Var circular_correlation(const Var& a, const Var& b) {
    const Tensor& A = a.val();
    const Tensor& B = b.val();
    require(A.rank() == 1 && B.rank() == 1 && A.size() == B.size(),
            "circular_correlation: length mismatch " + shape_str(A.shape()) + " vs " +
                shape_str(B.shape()));
    const std::size_t d = A.size();
    Tensor out(Shape{d});
    corr_forward(A.data(), B.data(), out.data(), d);
    Tape* tape = common_tape({&a, &b});
    auto sp = share(std::move(out), "circular_correlation");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int pa = a.node, pb = b.node;
        auto av = a.value, bv = b.value;
        r.tape = tape;
        r.node = tape->record(sp->shape(), {pa, pb}, [pa, pb, av, bv, d](const Tensor& g, Tape& t) {
            Tensor da(Shape{d});
            Tensor db(Shape{d});
            for (std::size_t k = 0; k < d; ++k) {
                const double gv = g[k];
                if (gv == 0.0) continue;
                for (std::size_t i = 0; i < d; ++i) {
                    da[i] += gv * (*bv)[(i + k) % d];
                    db[(i + k) % d] += gv * (*av)[i];
                }
            }
            if (pa >= 0) t.accumulate(pa, da);
            if (pb >= 0) t.accumulate(pb, db);
        });
    }
    return r;
}

// ---------------------------------------------------------------- broadcasts

Var colscale(const Var& x, const Var& a) {
    const Tensor& X = x.val();
    const Tensor& A = a.val();
    require(X.rank() == 2 && A.rank() == 1 && A.size() == X.extent(0),
            "colscale: shapes " + shape_str(X.shape()) + " vs " + shape_str(A.shape()));
    const std::size_t n = X.extent(0), d = X.extent(1);
    Tensor out = X;
    for (std::size_t i = 0; i < n; ++i) {
        const double c = A[i];
        double* row = out.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) row[j] *= c;
    }
    Tape* tape = common_tape({&x, &a});
    auto sp = share(std::move(out), "colscale");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int px = x.node, pa = a.node;
        auto xv = x.value, av = a.value;
        r.tape = tape;
        r.node = tape->record(sp->shape(), {px, pa},
                              [px, pa, xv, av, n, d](const Tensor& g, Tape& t) {
                                  if (px >= 0) {
                                      Tensor dx = g;
                                      for (std::size_t i = 0; i < n; ++i) {
                                          const double c = (*av)[i];
                                          double* row = dx.data() + i * d;
                                          for (std::size_t j = 0; j < d; ++j) row[j] *= c;
                                      }
                                      t.accumulate(px, dx);
                                  }
                                  if (pa >= 0) {
                                      Tensor da(Shape{n});
                                      for (std::size_t i = 0; i < n; ++i) {
                                          const double* grow = g.data() + i * d;
                                          const double* xrow = xv->data() + i * d;
                                          double s = 0.0;
                                          for (std::size_t j = 0; j < d; ++j) s += grow[j] * xrow[j];
                                          da[i] = s;
                                      }
                                      t.accumulate(pa, da);
                                  }
                              });
    }
    return r;
}

Var add_bias_cols(const Var& s, const Var& b) {
    const Tensor& S = s.val();
    const Tensor& B = b.val();
    require(S.rank() == 2 && B.rank() == 1 && B.size() == S.extent(1),
            "add_bias_cols: shapes " + shape_str(S.shape()) + " vs " + shape_str(B.shape()));
    const std::size_t n = S.extent(0), m = S.extent(1);
    Tensor out = S;
    for (std::size_t i = 0; i < n; ++i) {
        double* row = out.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) row[j] += B[j];
    }
    Tape* tape = common_tape({&s, &b});
    auto sp = share(std::move(out), "add_bias_cols");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int ps = s.node, pb = b.node;
        r.tape = tape;
        r.node = tape->record(sp->shape(), {ps, pb}, [ps, pb, n, m](const Tensor& g, Tape& t) {
            t.accumulate(ps, g);
            if (pb >= 0) {
                Tensor db(Shape{m});
                for (std::size_t i = 0; i < n; ++i) {
                    const double* grow = g.data() + i * m;
                    for (std::size_t j = 0; j < m; ++j) db[j] += grow[j];
                }
                t.accumulate(pb, db);
            }
        });
    }
    return r;
}

Var repeat_row(const Var& row, std::size_t n) {
    const Tensor& A = row.val();
    require(A.rank() == 1, "repeat_row: expected vector, got " + shape_str(A.shape()));
    const std::size_t k = A.size();
    Tensor out(Shape{n, k});
    for (std::size_t i = 0; i < n; ++i)
        std::memcpy(out.data() + i * k, A.data(), k * sizeof(double));
    Tape* tape = common_tape({&row});
    auto sp = share(std::move(out), "repeat_row");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int pa = row.node;
        r.tape = tape;
        r.node = tape->record(sp->shape(), {pa}, [pa, n, k](const Tensor& g, Tape& t) {
            Tensor da(Shape{k});
            for (std::size_t i = 0; i < n; ++i) {
                const double* grow = g.data() + i * k;
                for (std::size_t j = 0; j < k; ++j) da[j] += grow[j];
            }
            t.accumulate(pa, da);
        });
    }
    return r;
}

// ---------------------------------------------------------------- conv / dropout

Var conv2d(const Var& x, const Var& f, std::size_t pad) {
    const Tensor& X = x.val();
    const Tensor& F = f.val();
    require(X.rank() == 4 && F.rank() == 4 && X.extent(1) == F.extent(1),
            "conv2d: shapes " + shape_str(X.shape()) + " vs filters " + shape_str(F.shape()));
    const std::size_t nb = X.extent(0), nc = X.extent(1), h = X.extent(2), w = X.extent(3);
    const std::size_t nf = F.extent(0), kh = F.extent(2), kw = F.extent(3);
    require(h + 2 * pad >= kh && w + 2 * pad >= kw,
            "conv2d: kernel " + shape_str(F.shape()) + " larger than padded input " +
                shape_str(X.shape()));
    const std::size_t oh = h + 2 * pad - kh + 1, ow = w + 2 * pad - kw + 1;
    Tensor out(Shape{nb, nf, oh, ow});
    for (std::size_t b = 0; b < nb; ++b)
        for (std::size_t fo = 0; fo < nf; ++fo)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double s = 0.0;
                    for (std::size_t c = 0; c < nc; ++c)
                        for (std::size_t ky = 0; ky < kh; ++ky) {
                            const std::ptrdiff_t iy =
                                static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(pad);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t kx = 0; kx < kw; ++kx) {
                                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) -
                                                          static_cast<std::ptrdiff_t>(pad);
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                                s += X(b, c, static_cast<std::size_t>(iy),
                                       static_cast<std::size_t>(ix)) *
                                     F(fo, c, ky, kx);
                            }
                        }
                    out(b, fo, oy, ox) = s;
                }
    Tape* tape = common_tape({&x, &f});
    auto sp = share(std::move(out), "conv2d");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int px = x.node, pf = f.node;
        auto xv = x.value, fv = f.value;
        r.tape = tape;
        r.node = tape->record(
            sp->shape(), {px, pf},
            [px, pf, xv, fv, pad, nb, nc, h, w, nf, kh, kw, oh, ow](const Tensor& g, Tape& t) {
                Tensor dX(xv->shape());
                Tensor dF(fv->shape());
                const Tensor& X = *xv;
                const Tensor& F = *fv;
                for (std::size_t b = 0; b < nb; ++b)
                    for (std::size_t fo = 0; fo < nf; ++fo)
                        for (std::size_t oy = 0; oy < oh; ++oy)
                            for (std::size_t ox = 0; ox < ow; ++ox) {
                                const double gv = g(b, fo, oy, ox);
                                if (gv == 0.0) continue;
                                for (std::size_t c = 0; c < nc; ++c)
                                    for (std::size_t ky = 0; ky < kh; ++ky) {
                                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) -
                                                                  static_cast<std::ptrdiff_t>(pad);
                                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                                        for (std::size_t kx = 0; kx < kw; ++kx) {
                                            const std::ptrdiff_t ix =
                                                static_cast<std::ptrdiff_t>(ox + kx) -
                                                static_cast<std::ptrdiff_t>(pad);
                                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w))
                                                continue;
                                            dX(b, c, static_cast<std::size_t>(iy),
                                               static_cast<std::size_t>(ix)) += gv * F(fo, c, ky, kx);
                                            dF(fo, c, ky, kx) +=
                                                gv * X(b, c, static_cast<std::size_t>(iy),
                                                       static_cast<std::size_t>(ix));
                                        }
                                    }
                            }
                if (px >= 0) t.accumulate(px, dX);
                if (pf >= 0) t.accumulate(pf, dF);
            });
    }
    return r;
}

Var dropout(const Var& x, double rate, std::uint64_t seed, bool training) {
    require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0,1), got " + std::to_string(rate));
    if (!training || rate == 0.0) return x;
    const double keep = 1.0 - rate;
    Rng rng(seed);
    auto mask = std::make_shared<Tensor>(x.val().shape());
    Tensor out = x.val();
    double* pm = mask->data();
    double* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double m = rng.uniform() >= rate ? 1.0 / keep : 0.0;
        pm[i] = m;
        po[i] *= m;
    }
    Tape* tape = common_tape({&x});
    auto sp = share(std::move(out), "dropout");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int px = x.node;
        r.tape = tape;
        r.node = tape->record(sp->shape(), {px}, [px, mask](const Tensor& g, Tape& t) {
            Tensor d = g;
            const double* pm = mask->data();
            double* pd = d.data();
            for (std::size_t i = 0; i < d.size(); ++i) pd[i] *= pm[i];
            t.accumulate(px, d);
        });
    }
    return r;
}

// ---------------------------------------------------------------- constraints / loss

Var row_distance_mean(const Var& a, const Var& b) {
    const Tensor& A = a.val();
    const Tensor& B = b.val();
    require(A.rank() == 2 && A.same_shape(B), "row_distance_mean: shape mismatch " +
                                                  shape_str(A.shape()) + " vs " +
                                                  shape_str(B.shape()));
    const std::size_t n = A.extent(0), d = A.extent(1);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = A(i, j) - B(i, j);
            s += diff * diff;
        }
        total += std::sqrt(s);
    }
    Tape* tape = common_tape({&a, &b});
    auto sp = share(Tensor::scalar(total / static_cast<double>(n)), "row_distance_mean");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int pa = a.node, pb = b.node;
        auto av = a.value, bv = b.value;
        r.tape = tape;
        r.node = tape->record(sp->shape(), {pa, pb}, [pa, pb, av, bv, n, d](const Tensor& g,
                                                                            Tape& t) {
            const double u = g[0] / static_cast<double>(n);
            Tensor da(av->shape());
            Tensor db(bv->shape());
            for (std::size_t i = 0; i < n; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    const double diff = (*av)(i, j) - (*bv)(i, j);
                    s += diff * diff;
                }
                const double dist = std::sqrt(s);
                if (dist <= 0.0) continue;  // subgradient 0 at coincident rows
                for (std::size_t j = 0; j < d; ++j) {
                    const double gd = u * ((*av)(i, j) - (*bv)(i, j)) / dist;
                    da(i, j) = gd;
                    db(i, j) = -gd;
                }
            }
            if (pa >= 0) t.accumulate(pa, da);
            if (pb >= 0) t.accumulate(pb, db);
        });
    }
    return r;
}

Var conicity_op(const Var& e) {
    const Tensor& E = e.val();
    require(E.rank() == 2 && E.extent(0) >= 1, "conicity: need a nonempty (n,d) matrix, got " +
                                                   shape_str(E.shape()));
    const std::size_t n = E.extent(0), d = E.extent(1);
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += E(i, j);
    for (double& v : mean) v /= static_cast<double>(n);
    double mean_norm = 0.0;
    for (double v : mean) mean_norm += v * v;
    mean_norm = std::sqrt(mean_norm);

    double total = 0.0;
    std::vector<double> row_norm(n, 0.0), cosine(n, 0.0);
    if (mean_norm >= kNormEps) {
        for (std::size_t i = 0; i < n; ++i) {
            double nn = 0.0, dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                nn += E(i, j) * E(i, j);
                dot += E(i, j) * mean[j];
            }
            row_norm[i] = std::sqrt(nn);
            if (row_norm[i] >= kNormEps) {
                cosine[i] = dot / (row_norm[i] * mean_norm);
                total += cosine[i];
            }
        }
    }
    const double con = mean_norm < kNormEps ? 0.0 : total / static_cast<double>(n);
    Tape* tape = common_tape({&e});
    auto sp = share(Tensor::scalar(con), "conicity");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int pe = e.node;
        auto ev = e.value;
        r.tape = tape;
        r.node = tape->record(
            sp->shape(), {pe},
            [pe, ev, n, d, mean, mean_norm, row_norm, cosine](const Tensor& g, Tape& t) {
                Tensor de(ev->shape());
                if (mean_norm >= kNormEps) {
                    const double u = g[0];
                    const double nn = static_cast<double>(n);
                    // Shared term: (1/n²)·Σ_i ∂cos_i/∂mean
                    std::vector<double> shared(d, 0.0);
                    double cos_sum = 0.0;
                    for (std::size_t i = 0; i < n; ++i) {
                        if (row_norm[i] < kNormEps) continue;
                        cos_sum += cosine[i];
                        const double inv = 1.0 / (row_norm[i] * mean_norm);
                        for (std::size_t j = 0; j < d; ++j) shared[j] += (*ev)(i, j) * inv;
                    }
                    for (std::size_t j = 0; j < d; ++j)
                        shared[j] = (shared[j] - cos_sum * mean[j] / (mean_norm * mean_norm)) /
                                    (nn * nn);
                    for (std::size_t i = 0; i < n; ++i) {
                        for (std::size_t j = 0; j < d; ++j) de(i, j) = u * shared[j];
                        if (row_norm[i] < kNormEps) continue;
                        const double inv = 1.0 / (row_norm[i] * mean_norm);
                        const double self = cosine[i] / (row_norm[i] * row_norm[i]);
                        for (std::size_t j = 0; j < d; ++j)
                            de(i, j) += u * (mean[j] * inv - self * (*ev)(i, j)) / nn;
                    }
                }
                t.accumulate(pe, de);
            });
    }
    return r;
}

Var soft_bce_mean(const Var& scores, Tensor targets) {
    const Tensor& S = scores.val();
    require(S.same_shape(targets), "soft_bce_mean: scores " + shape_str(S.shape()) +
                                       " vs targets " + shape_str(targets.shape()));
    const std::size_t nelem = S.size();
    double total = 0.0;
    const double* ps = S.data();
    const double* py = targets.data();
    for (std::size_t i = 0; i < nelem; ++i)
        total += py[i] * softplus(-ps[i]) + (1.0 - py[i]) * softplus(ps[i]);
    Tape* tape = common_tape({&scores});
    auto sp = share(Tensor::scalar(total / static_cast<double>(nelem)), "soft_bce_mean");
    Var r{sp, nullptr, -1};
    if (tape) {
        const int pn = scores.node;
        auto sv = scores.value;
        auto ty = std::make_shared<Tensor>(std::move(targets));
        r.tape = tape;
        r.node = tape->record(sp->shape(), {pn}, [pn, sv, ty, nelem](const Tensor& g, Tape& t) {
            Tensor d(sv->shape());
            const double u = g[0] / static_cast<double>(nelem);
            const double* ps = sv->data();
            const double* py = ty->data();
            double* pd = d.data();
            for (std::size_t i = 0; i < nelem; ++i)
                pd[i] = u * (stable_sigmoid(ps[i]) - py[i]);
            t.accumulate(pn, d);
        });
    }
    return r;
}

}  // namespace dsmt
