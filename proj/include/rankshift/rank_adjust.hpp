#pragma once

#include "rankshift/layers.hpp"
#include "rankshift/rng.hpp"
#include "rankshift/tensor.hpp"

namespace rankshift {

enum class DeflationPolicy { kZeroB, kRandomBoth, kZeroBoth };

/// How fresh adaptor factors are drawn at deflation. kZeroB and kZeroBoth
/// guarantee the adaptor contributes exactly zero at the deflation instant.
struct DeflationInit {
  DeflationPolicy policy = DeflationPolicy::kZeroB;
  double scale = 1.0;
};

/// Initial low-rank reparameterization (base = 0): decompose the layer's
/// current full-rank weight with the given method at rank k. Throws
/// std::logic_error when the layer is not full-rank.
void reparameterize(Layer& layer, std::size_t k, Decomp decomp);

/// Collapse base + factors into one full-rank trainable weight
/// (W <- W0 + reconstruction). The layer function is unchanged. Throws
/// std::logic_error when the layer is already full-rank.
void inflate(Layer& layer);

/// Freeze the current weight as the base and attach fresh trainable
/// low-rank factors per the init policy. Throws std::logic_error when the
/// layer is already low-rank, std::invalid_argument when k is out of range.
void deflate(Layer& layer, std::size_t k, Decomp decomp,
             const DeflationInit& init, Rng& rng);

struct Prop1Result {
  int r = 0;       // numerical rank of the base
  int rank_w = 0;  // numerical rank of base + A B^T
  bool holds = false;
};

/// Rank bound after reconstruction: max(r - k, 0) <= rank(W0 + A B^T)
/// <= min(r + k, min(m, n)). Empty factors mean k = 0.
Prop1Result prop1_bounds_check(const Tensor& w0, const Tensor& a,
                               const Tensor& b, double rel_tol);

struct Prop2Result {
  double d = 0.0;
  double bound = 0.0;
};

/// Gap between the full-rank update and the factored update,
/// d = ||G - (-X - Y + eta Z)||_F with X = G B B^T, Y = A A^T G,
/// Z = G B A^T G, and its upper bound
/// ||G||_F (1 + ||A||_2^2 + ||B||_2^2) + eta ||G||_F ||G||_2 ||A||_2 ||B||_2.
Prop2Result prop2_gap(const Tensor& a, const Tensor& b, const Tensor& grad,
                      double eta);

}  // namespace rankshift
