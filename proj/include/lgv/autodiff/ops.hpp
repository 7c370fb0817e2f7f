// Differentiable operations on Var. Binary elementwise ops broadcast operands
// whose row or column count is 1 (numpy-style, restricted to 2-D).
#pragma once

#include "lgv/autodiff/tape.hpp"

#include <vector>

namespace lgv::ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double s);
Var shift(Var a, double s);

Var matmul(Var a, Var b);
Var transpose(Var a);

Var tanh(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var square(Var a);
Var sin(Var a);
Var cos(Var a);

Var sum(Var a);      // -> 1x1
Var row_sum(Var a);  // -> rows x 1
Var mean(Var a);     // -> 1x1

Var slice_cols(Var a, Index start, Index count);
Var col(Var a, Index c);
Var hcat(const std::vector<Var>& parts);
Var slice_rows(Var a, Index start, Index count);
Var vcat(const std::vector<Var>& parts);
// Repeats a 1xC row `rows` times.
Var repeat_rows(Var a, Index rows);

// Batched small-matrix algebra. Each row of a batched operand stores one
// matrix flattened row-major.
//   bmm:        [B x r*k] . [B x k*c] -> [B x r*c]
//   bmv:        [B x r*c] . [B x c]   -> [B x r]
//   btranspose: [B x r*c]             -> [B x c*r]
//   bsolve:     solves M x = b per row, M [B x m*m], b [B x m]; throws
//               SingularMassError when cond(M) exceeds `max_condition`.
Var bmm(Var a, Var b, Index r, Index k, Index c);
Var bmv(Var a, Var v, Index r, Index c);
Var btranspose(Var a, Index r, Index c);
Var bsolve(Var m, Var b, double max_condition = 1e12);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator+(Var a, double s) { return shift(a, s); }
inline Var operator-(Var a, double s) { return shift(a, -s); }

}  // namespace lgv::ad
