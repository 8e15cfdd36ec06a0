#pragma once

#include <cstddef>

#include "vhp/diffcore/tape.hpp"

namespace vhp::diffcore {

// Binary ops accept equal shapes, a row operand ([1 x c] or [c]) broadcast over
// the rows of a matrix, or a single-element operand broadcast everywhere.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }

/// Standard matrix product of [m x k] and [k x n].
Var matmul(Var a, Var b);

/// x * W^T + b for x [batch x in], W [out x in], b [out].
Var linear(Var x, Var weight, Var bias);

enum class Elementwise { relu, tanh, sigmoid, exp, log, neg, square, softplus };

Var elementwise(Elementwise op, Var a);

inline Var relu(Var a) { return elementwise(Elementwise::relu, a); }
inline Var tanh(Var a) { return elementwise(Elementwise::tanh, a); }
inline Var sigmoid(Var a) { return elementwise(Elementwise::sigmoid, a); }
inline Var exp(Var a) { return elementwise(Elementwise::exp, a); }
/// Throws DomainError for non-positive entries.
inline Var log(Var a) { return elementwise(Elementwise::log, a); }
inline Var neg(Var a) { return elementwise(Elementwise::neg, a); }
inline Var square(Var a) { return elementwise(Elementwise::square, a); }
inline Var softplus(Var a) { return elementwise(Elementwise::softplus, a); }
inline Var operator-(Var a) { return neg(a); }

Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);

/// Clamps into [lo, hi]; the gradient is zero where the bound is active.
Var clamp(Var a, double lo, double hi);

/// Sum of all entries, as a scalar.
Var sum(Var a);
/// Mean of all entries, as a scalar.
Var mean(Var a);

/// Reduction along one axis. For matrices axis 0 gives [1 x c] and axis 1
/// gives [r x 1]; a rank-1 tensor has the single axis 0 and reduces to a scalar.
Var sum(Var a, std::size_t axis);

/// Max-shifted log-sum-exp along an axis (same axis convention as sum).
Var logsumexp(Var a, std::size_t axis);

/// Columns [begin, end) of a matrix.
Var slice_cols(Var a, std::size_t begin, std::size_t end);

Var reshape(Var a, Shape shape);

/// Repeats each row `times` times consecutively: row i becomes rows i*times .. i*times+times-1.
Var repeat_rows(Var a, std::size_t times);

}  // namespace vhp::diffcore
