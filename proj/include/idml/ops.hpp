#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "idml/tensor.hpp"

namespace idml {

// Differentiable ops. Each takes the tape to record on (nullptr runs the
// forward pass only, for inference) and throws std::invalid_argument on
// shape mismatches, naming both shapes.

Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);
// a (m,k) x b (k,n) -> (m,n)
Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);
// x (N,C,H,W), w (OC,IC,KH,KW), bias (OC); zero padding, no dilation.
Tensor conv2d(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& bias,
              std::int64_t stride = 1, std::int64_t pad = 0);
Tensor relu(Tape* tape, const Tensor& x);
// x (N,C,H,W) -> (N,C)
Tensor global_avg_pool(Tape* tape, const Tensor& x);
// x (N,in), w (out,in), bias (out) -> (N,out); y = x w^T + bias.
Tensor affine(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& bias);
// Rows of x (N,D) divided by their Euclidean norm; a row with norm < 1e-12
// is an error (degenerate embedding).
Tensor l2_normalize(Tape* tape, const Tensor& x);
Tensor concat(Tape* tape, const std::vector<Tensor>& xs, int axis);
// Keeps [start, end) along axis.
Tensor slice(Tape* tape, const Tensor& x, int axis, std::int64_t start,
             std::int64_t end);
Tensor reduce_sum(Tape* tape, const Tensor& x);   // -> shape [1]
Tensor reduce_mean(Tape* tape, const Tensor& x);  // -> shape [1]
Tensor log(Tape* tape, const Tensor& x);   // error on x <= 0
Tensor exp(Tape* tape, const Tensor& x);
Tensor sqrt(Tape* tape, const Tensor& x);  // error on x < 0; gradient at 0 is 0
Tensor square(Tape* tape, const Tensor& x);
Tensor softplus(Tape* tape, const Tensor& x);
// Elementwise max; on ties the gradient goes to the first input.
Tensor max(Tape* tape, const Tensor& a, const Tensor& b);

enum class OpKind {
  kAdd,
  kSub,
  kMul,
  kMatmul,
  kConv2d,
  kRelu,
  kGlobalAvgPool,
  kAffine,
  kL2Normalize,
  kConcat,
  kSlice,
  kReduceSum,
  kReduceMean,
  kLog,
  kExp,
  kSqrt,
  kSquare,
  kSoftplus,
  kMax,
};

inline constexpr std::array<OpKind, 19> kAllOpKinds = {
    OpKind::kAdd,        OpKind::kSub,           OpKind::kMul,
    OpKind::kMatmul,     OpKind::kConv2d,        OpKind::kRelu,
    OpKind::kGlobalAvgPool, OpKind::kAffine,     OpKind::kL2Normalize,
    OpKind::kConcat,     OpKind::kSlice,         OpKind::kReduceSum,
    OpKind::kReduceMean, OpKind::kLog,           OpKind::kExp,
    OpKind::kSqrt,       OpKind::kSquare,        OpKind::kSoftplus,
    OpKind::kMax,
};

std::string op_kind_name(OpKind kind);
OpKind parse_op_kind(const std::string& name);

struct OpAttrs {
  int axis = 0;                        // concat, slice
  std::int64_t start = 0, end = 0;     // slice
  std::int64_t stride = 1, pad = 0;    // conv2d
};

// Generic dispatcher over the op kinds above. conv2d expects inputs
// {x, w, bias}; affine expects {x, w, bias}; concat takes any number.
Tensor forward_op(Tape* tape, OpKind kind, const std::vector<Tensor>& inputs,
                  const OpAttrs& attrs = {});

struct GradCheckFailure {
  std::int64_t index = 0;
  double analytic = 0.0;
  double fd = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::vector<GradCheckFailure> failures;
  bool ok() const { return failures.empty(); }
};

// Compares the taped gradient of f at x against central finite differences
// (f(x+h) - f(x-h)) / 2h per element. Relative error uses
// |ga - gf| / (|ga| + |gf| + 1e-12). f must be deterministic and return a
// scalar; it is called with a null tape for the difference evaluations.
GradCheckReport gradient_check(
    const std::function<Tensor(Tape*, const Tensor&)>& f, const Tensor& x,
    double h = 1e-5, double tol = 1e-4);

}  // namespace idml
