#pragma once

#include <cstdint>

// Dense numeric kernels. Each kernel exists twice: the optimized form in
// idml::kern (blocked loops, std::fma, OpenMP when the problem is large
// enough) and a plain-loop reference in idml::kern::ref used by the tests
// and the benchmark. Every output element keeps one fixed accumulation
// order, so the optimized kernels produce the same bits regardless of the
// thread count; gemm/conv2d/conv2d_grad_weight match the reference
// bit-for-bit, conv2d_grad_input regroups partial sums and matches to
// ~1e-14 relative.
namespace idml::kern {

// Enables OpenMP execution of kernel loops (on by default when compiled
// with OpenMP). Results do not depend on this switch or the thread count.
void set_parallel(bool enabled);
bool parallel_enabled();

struct Conv2dShape {
  std::int64_t n, c_in, h, w;  // input  N x C x H x W
  std::int64_t c_out, kh, kw;  // kernel C_out x C_in x KH x KW
  std::int64_t stride = 1, pad = 0;

  std::int64_t out_h() const { return (h + 2 * pad - kh) / stride + 1; }
  std::int64_t out_w() const { return (w + 2 * pad - kw) / stride + 1; }
};

// C (m x n) = op(A) * op(B), or += when accumulate is set.
// op(A) is A (m x k) or, when trans_a, A stored k x m; likewise op(B).
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n,
          std::int64_t k, const double* a, const double* b, double* c,
          bool accumulate = false);

// y (N x C_out x OH x OW); bias may be null.
void conv2d(const Conv2dShape& s, const double* x, const double* w,
            const double* bias, double* y);
// gx (+)= correlation of gy with w. Accumulates when accumulate is set.
void conv2d_grad_input(const Conv2dShape& s, const double* w,
                       const double* gy, double* gx, bool accumulate = false);
// gw (OC x C x KH x KW), gbias (OC, may be null). Accumulate as above.
void conv2d_grad_weight(const Conv2dShape& s, const double* x,
                        const double* gy, double* gw, double* gbias,
                        bool accumulate = false);

namespace ref {
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n,
          std::int64_t k, const double* a, const double* b, double* c,
          bool accumulate = false);
void conv2d(const Conv2dShape& s, const double* x, const double* w,
            const double* bias, double* y);
void conv2d_grad_input(const Conv2dShape& s, const double* w,
                       const double* gy, double* gx, bool accumulate = false);
void conv2d_grad_weight(const Conv2dShape& s, const double* x,
                        const double* gy, double* gw, double* gbias,
                        bool accumulate = false);
}  // namespace ref

}  // namespace idml::kern
