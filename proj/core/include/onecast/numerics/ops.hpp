#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "onecast/numerics/tape.hpp"

namespace onecast::numerics {

// Differentiable operations over rank-2 values (rows x cols) unless noted.
// Every op checks shapes and throws DimensionError naming both operands.

Var matmul(Var a, Var b);
/// y = xW + b, x: n x d_in, W: d_in x d_out, b: 1 x d_out (or d_out).
Var linear(Var x, Var weight, std::optional<Var> bias);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// Adds a row vector (1 x cols) to every row.
Var add_row(Var x, Var row);
/// Multiplies every row elementwise by a row vector (1 x cols).
Var mul_row(Var x, Var row);

Var relu(Var x);
Var gelu(Var x);  // tanh approximation; smooth everywhere
Var tanh(Var x);

Var transpose(Var x);
Var reshape(Var x, Shape shape);
Var slice_rows(Var x, std::size_t begin, std::size_t count);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
/// out[i] = table[ids[i]]
Var gather_rows(Var table, std::span<const int> ids);

Var softmax_rows(Var x);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

/// Cross-correlation. x: C_in x L, kernels: C_out x C_in x k, bias: C_out.
/// Output C_out x L_out, L_out = floor((L + 2*padding - k)/stride) + 1.
Var conv1d(Var x, Var kernels, std::optional<Var> bias, std::size_t stride, std::size_t padding);
/// Adjoint of an unpadded conv1d. x: C_in x L, kernels: C_in x C_out x k.
/// Output C_out x ((L-1)*stride + k).
Var conv_transpose1d(Var x, Var kernels, std::optional<Var> bias, std::size_t stride);

Var sum(Var x);
Var mean(Var x);
/// mean((a - b)^2) over all elements.
Var mse(Var a, Var b);

/// Same value, no gradient flows back.
Var stop_gradient(Var x);
/// Value of `quantized`, gradient routed unchanged to `continuous`.
Var straight_through(Var continuous, Var quantized);

/// -(1/sum w) * sum_i w_i log softmax(logits_i)[target_i].
/// Throws DegenerateBatchError if all weights are zero.
Var softmax_cross_entropy(Var logits, std::span<const int> targets, std::span<const double> weights);

// Plain helpers (no tape).
Tensor softmax_rows(const Tensor& x);
Tensor matmul(const Tensor& a, const Tensor& b);

}  // namespace onecast::numerics
