#pragma once

#include <cstdint>
#include <vector>

#include "dsmt/autodiff.hpp"

namespace dsmt {

// Entity-relation composition flavors.
enum class Composition { Mult, Corr };

// ---- elementwise / scalar ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);

// ---- linear algebra ----
Var matmul(const Var& a, const Var& b);      // (m,k)·(k,n)
Var matmul_nt(const Var& a, const Var& b);   // (m,k)·(n,k)ᵀ -> (m,n)
Var bmm_nt(const Var& a, const Var& b);      // (B,p,q)·(B,r,q)ᵀ -> (B,p,r)
Var scaled_dot(const Var& q, const Var& k);  // bmm_nt(q,k)/sqrt(q.last_extent)

// ---- shape ----
Var reshape(const Var& a, Shape target);
Var concat(const Var& a, const Var& b, std::size_t axis);
Var slice(const Var& a, std::size_t axis, std::size_t lo, std::size_t hi);
Var stack3(const Var& a, const Var& b, const Var& c);  // 3×(n,d) -> (n,3,d)

// ---- nonlinearities ----
Var sigmoid(const Var& a);
Var tanh_op(const Var& a);
Var relu(const Var& a);
Var softmax_rows(const Var& a);  // softmax over the last axis

// ---- reductions ----
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var mean_axis(const Var& a, std::size_t axis);

// ---- indexed ----
Var gather_rows(const Var& m, std::vector<std::int64_t> idx);
Var scatter_sum_rows(const Var& m, std::vector<std::int64_t> dst, std::size_t n_rows);

// Fused gather+compose over an edge list: row e is φ(rel[rel_idx[e]],
// ent[ent_idx[e]]). Corr is the direct O(d²) circular correlation.
Var compose_edges(const Var& rel_feats, const Var& ent_feats,
                  std::vector<std::int64_t> rel_idx, std::vector<std::int64_t> ent_idx,
                  Composition mode);
Var circular_correlation(const Var& a, const Var& b);  // 1-D, length d each

// ---- broadcasts ----
Var colscale(const Var& x, const Var& a);       // out[i,j] = x[i,j]·a[i], a is (n)
Var add_bias_cols(const Var& s, const Var& b);  // out[i,j] = s[i,j]+b[j], b is (m)
Var repeat_row(const Var& row, std::size_t n);  // (k) -> (n,k)

// ---- convolution / regularizers / losses ----
// x: (B,C,H,W), f: (F,C,kh,kw), stride 1, zero padding `pad`.
Var conv2d(const Var& x, const Var& f, std::size_t pad);

// Inverted dropout: train mode zeroes with prob `rate` and scales kept
// units by 1/(1-rate); eval mode is the identity.
Var dropout(const Var& x, double rate, std::uint64_t seed, bool training);

// Mean over rows of the Euclidean distance between paired rows.
Var row_distance_mean(const Var& a, const Var& b);

// Mean cosine similarity of each row with the mean row. Zero-norm mean
// (or row) contributes 0.
Var conicity_op(const Var& e);

// Mean over all elements of -[y·logσ(s) + (1-y)·logσ(-s)], targets constant.
Var soft_bce_mean(const Var& scores, Tensor targets);

}  // namespace dsmt
