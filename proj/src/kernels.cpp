#include "idml/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

// Optimized kernels. gemm runs i-k-j with an fma inner loop so the per
// element accumulation order is identical to the naive reference; conv2d is
// im2col + gemm over the whole batch. OpenMP splits work across rows (gemm)
// or images (col2im), which never changes any element's accumulation order.

namespace idml::kern {

namespace {

std::atomic<bool> g_parallel{true};

// Work below this many fused multiply-adds is not worth a parallel region.
constexpr std::int64_t kParGrain = 1 << 15;

inline bool use_par(std::int64_t work) {
#ifdef _OPENMP
  return g_parallel.load(std::memory_order_relaxed) && work >= kParGrain;
#else
  (void)work;
  return false;
#endif
}

// Grow-only scratch buffers, one set per thread.
thread_local std::vector<double> tl_col;
thread_local std::vector<double> tl_mat;
thread_local std::vector<double> tl_bt;

double* scratch(std::vector<double>& buf, std::int64_t n) {
  if (static_cast<std::int64_t>(buf.size()) < n) buf.resize(n);
  return buf.data();
}

// C (m x n) = or += A (m x k) * B (k x n), row-major.
void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const double* a,
             const double* b, double* c, bool accumulate) {
  const bool par = use_par(m * n * k);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    if (!accumulate)
      for (std::int64_t j = 0; j < n; ++j) crow[j] = 0.0;
    const double* arow = a + i * k;
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::int64_t j = 0; j < n; ++j)
        crow[j] = std::fma(av, brow[j], crow[j]);
    }
  }
}

// C (m x n) = or += A^T * B with A stored k x m.
void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const double* a,
             const double* b, double* c, bool accumulate) {
  const bool par = use_par(m * n * k);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    if (!accumulate)
      for (std::int64_t j = 0; j < n; ++j) crow[j] = 0.0;
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = a[p * m + i];
      const double* brow = b + p * n;
      for (std::int64_t j = 0; j < n; ++j)
        crow[j] = std::fma(av, brow[j], crow[j]);
    }
  }
}

// Transpose src (r x c) into dst (c x r).
void transpose(std::int64_t r, std::int64_t c, const double* src, double* dst) {
  const bool par = use_par(r * c);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
}

// col (C*KH*KW x N*OH*OW) from x; padded taps become zero.
void im2col(const Conv2dShape& s, const double* x, double* col) {
  const std::int64_t oh = s.out_h(), ow = s.out_w();
  const std::int64_t cols = s.n * oh * ow;
  const std::int64_t rows = s.c_in * s.kh * s.kw;
  const bool par = use_par(rows * cols);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t row = 0; row < rows; ++row) {
    const std::int64_t v = row % s.kw;
    const std::int64_t u = (row / s.kw) % s.kh;
    const std::int64_t ic = row / (s.kw * s.kh);
    double* out = col + row * cols;
    for (std::int64_t img = 0; img < s.n; ++img) {
      const double* xc = x + (img * s.c_in + ic) * s.h * s.w;
      for (std::int64_t r = 0; r < oh; ++r) {
        const std::int64_t ih = r * s.stride - s.pad + u;
        double* o = out + (img * oh + r) * ow;
        if (ih < 0 || ih >= s.h) {
          for (std::int64_t q = 0; q < ow; ++q) o[q] = 0.0;
          continue;
        }
        const double* xr = xc + ih * s.w;
        for (std::int64_t q = 0; q < ow; ++q) {
          const std::int64_t iw = q * s.stride - s.pad + v;
          o[q] = (iw < 0 || iw >= s.w) ? 0.0 : xr[iw];
        }
      }
    }
  }
}

}  // namespace

void set_parallel(bool enabled) { g_parallel.store(enabled); }
bool parallel_enabled() { return g_parallel.load(); }

void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n,
          std::int64_t k, const double* a, const double* b, double* c,
          bool accumulate) {
  if (!trans_b) {
    if (!trans_a)
      gemm_nn(m, n, k, a, b, c, accumulate);
    else
      gemm_tn(m, n, k, a, b, c, accumulate);
    return;
  }
  // B arrives n x k; transpose once so the inner loop stays unit-stride and
  // the accumulation order matches the non-transposed path.
  double* bt = scratch(tl_bt, k * n);
  transpose(n, k, b, bt);
  if (!trans_a)
    gemm_nn(m, n, k, a, bt, c, accumulate);
  else
    gemm_tn(m, n, k, a, bt, c, accumulate);
}

void conv2d(const Conv2dShape& s, const double* x, const double* w,
            double const* bias, double* y) {
  const std::int64_t oh = s.out_h(), ow = s.out_w();
  const std::int64_t cols = s.n * oh * ow;
  const std::int64_t rows = s.c_in * s.kh * s.kw;
  double* col = scratch(tl_col, rows * cols);
  im2col(s, x, col);
  double* ymat = scratch(tl_mat, s.c_out * cols);  // c_out x (n*oh*ow)
  gemm_nn(s.c_out, cols, rows, w, col, ymat, false);
  const std::int64_t plane = oh * ow;
  const bool par = use_par(s.n * s.c_out * plane);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t t = 0; t < s.n * s.c_out; ++t) {
    const std::int64_t img = t / s.c_out, oc = t % s.c_out;
    const double add = bias ? bias[oc] : 0.0;
    const double* src = ymat + oc * cols + img * plane;
    double* dst = y + t * plane;
    for (std::int64_t p = 0; p < plane; ++p) dst[p] = src[p] + add;
  }
}

void conv2d_grad_input(const Conv2dShape& s, const double* w,
                       const double* gy, double* gx, bool accumulate) {
  const std::int64_t oh = s.out_h(), ow = s.out_w();
  const std::int64_t cols = s.n * oh * ow;
  const std::int64_t rows = s.c_in * s.kh * s.kw;
  const std::int64_t plane = oh * ow;
  // gy (N x OC x OH x OW) -> gymat (OC x N*OH*OW)
  double* gymat = scratch(tl_mat, s.c_out * cols);
  {
    const bool par = use_par(s.n * s.c_out * plane);
#pragma omp parallel for schedule(static) if (par)
    for (std::int64_t t = 0; t < s.n * s.c_out; ++t) {
      const std::int64_t img = t / s.c_out, oc = t % s.c_out;
      const double* src = gy + t * plane;
      double* dst = gymat + oc * cols + img * plane;
      std::memcpy(dst, src, plane * sizeof(double));
    }
  }
  double* dcol = scratch(tl_col, rows * cols);
  gemm_tn(rows, cols, s.c_out, w, gymat, dcol, false);
  // col2im: each image owns a disjoint slab of gx, so images are a safe
  // parallel axis; rows are walked in order within an image.
  if (!accumulate) std::memset(gx, 0, s.n * s.c_in * s.h * s.w * sizeof(double));
  const bool par = use_par(rows * cols);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t img = 0; img < s.n; ++img) {
    for (std::int64_t row = 0; row < rows; ++row) {
      const std::int64_t v = row % s.kw;
      const std::int64_t u = (row / s.kw) % s.kh;
      const std::int64_t ic = row / (s.kw * s.kh);
      const double* src = dcol + row * cols + img * plane;
      double* xc = gx + (img * s.c_in + ic) * s.h * s.w;
      for (std::int64_t r = 0; r < oh; ++r) {
        const std::int64_t ih = r * s.stride - s.pad + u;
        if (ih < 0 || ih >= s.h) continue;
        for (std::int64_t q = 0; q < ow; ++q) {
          const std::int64_t iw = q * s.stride - s.pad + v;
          if (iw < 0 || iw >= s.w) continue;
          xc[ih * s.w + iw] += src[r * ow + q];
        }
      }
    }
  }
}

void conv2d_grad_weight(const Conv2dShape& s, const double* x,
                        const double* gy, double* gw, double* gbias,
                        bool accumulate) {
  const std::int64_t oh = s.out_h(), ow = s.out_w();
  const std::int64_t cols = s.n * oh * ow;
  const std::int64_t rows = s.c_in * s.kh * s.kw;
  const std::int64_t plane = oh * ow;
  double* col = scratch(tl_col, rows * cols);
  im2col(s, x, col);
  double* gymat = scratch(tl_mat, s.c_out * cols);
  {
    const bool par = use_par(s.n * s.c_out * plane);
#pragma omp parallel for schedule(static) if (par)
    for (std::int64_t t = 0; t < s.n * s.c_out; ++t) {
      const std::int64_t img = t / s.c_out, oc = t % s.c_out;
      std::memcpy(gymat + oc * cols + img * plane, gy + t * plane,
                  plane * sizeof(double));
    }
  }
  // gw = gymat * col^T, k dimension = (img, r, q) ascending as in ref.
  gemm(false, true, s.c_out, rows, cols, gymat, col, gw, accumulate);
  if (gbias) {
    const bool par = use_par(s.c_out * cols);
#pragma omp parallel for schedule(static) if (par)
    for (std::int64_t oc = 0; oc < s.c_out; ++oc) {
      double acc = accumulate ? gbias[oc] : 0.0;
      const double* row = gymat + oc * cols;
      for (std::int64_t l = 0; l < cols; ++l) acc += row[l];
      gbias[oc] = acc;
    }
  }
}

}  // namespace idml::kern
