#include "idml/kernels.hpp"

#include <cmath>

// Plain-loop reference kernels. Deliberately naive: the point is that
// correctness is obvious on inspection. The optimized kernels are tested
// against these.

namespace idml::kern::ref {

void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n,
          std::int64_t k, const double* a, const double* b, double* c,
          bool accumulate) {
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      double acc = accumulate ? c[i * n + j] : 0.0;
      for (std::int64_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * m + i] : a[i * k + p];
        const double bv = trans_b ? b[j * k + p] : b[p * n + j];
        acc = std::fma(av, bv, acc);
      }
      c[i * n + j] = acc;
    }
  }
}

void conv2d(const Conv2dShape& s, const double* x, const double* w,
            const double* bias, double* y) {
  const std::int64_t oh = s.out_h(), ow = s.out_w();
  for (std::int64_t img = 0; img < s.n; ++img) {
    for (std::int64_t oc = 0; oc < s.c_out; ++oc) {
      for (std::int64_t r = 0; r < oh; ++r) {
        for (std::int64_t q = 0; q < ow; ++q) {
          double acc = 0.0;
          for (std::int64_t ic = 0; ic < s.c_in; ++ic) {
            for (std::int64_t u = 0; u < s.kh; ++u) {
              const std::int64_t ih = r * s.stride - s.pad + u;
              if (ih < 0 || ih >= s.h) continue;
              for (std::int64_t v = 0; v < s.kw; ++v) {
                const std::int64_t iw = q * s.stride - s.pad + v;
                if (iw < 0 || iw >= s.w) continue;
                acc = std::fma(x[((img * s.c_in + ic) * s.h + ih) * s.w + iw],
                               w[((oc * s.c_in + ic) * s.kh + u) * s.kw + v],
                               acc);
              }
            }
          }
          if (bias) acc += bias[oc];  // added last, as the gemm path does
          y[((img * s.c_out + oc) * oh + r) * ow + q] = acc;
        }
      }
    }
  }
}

void conv2d_grad_input(const Conv2dShape& s, const double* w,
                       const double* gy, double* gx, bool accumulate) {
  const std::int64_t oh = s.out_h(), ow = s.out_w();
  for (std::int64_t img = 0; img < s.n; ++img) {
    for (std::int64_t ic = 0; ic < s.c_in; ++ic) {
      for (std::int64_t ih = 0; ih < s.h; ++ih) {
        for (std::int64_t iw = 0; iw < s.w; ++iw) {
          const std::int64_t at = ((img * s.c_in + ic) * s.h + ih) * s.w + iw;
          double acc = accumulate ? gx[at] : 0.0;
          for (std::int64_t oc = 0; oc < s.c_out; ++oc) {
            for (std::int64_t u = 0; u < s.kh; ++u) {
              const std::int64_t num_r = ih + s.pad - u;
              if (num_r < 0 || num_r % s.stride != 0) continue;
              const std::int64_t r = num_r / s.stride;
              if (r >= oh) continue;
              for (std::int64_t v = 0; v < s.kw; ++v) {
                const std::int64_t num_q = iw + s.pad - v;
                if (num_q < 0 || num_q % s.stride != 0) continue;
                const std::int64_t q = num_q / s.stride;
                if (q >= ow) continue;
                acc = std::fma(gy[((img * s.c_out + oc) * oh + r) * ow + q],
                               w[((oc * s.c_in + ic) * s.kh + u) * s.kw + v],
                               acc);
              }
            }
          }
          gx[at] = acc;
        }
      }
    }
  }
}

void conv2d_grad_weight(const Conv2dShape& s, const double* x,
                        const double* gy, double* gw, double* gbias,
                        bool accumulate) {
  const std::int64_t oh = s.out_h(), ow = s.out_w();
  for (std::int64_t oc = 0; oc < s.c_out; ++oc) {
    for (std::int64_t ic = 0; ic < s.c_in; ++ic) {
      for (std::int64_t u = 0; u < s.kh; ++u) {
        for (std::int64_t v = 0; v < s.kw; ++v) {
          const std::int64_t at = ((oc * s.c_in + ic) * s.kh + u) * s.kw + v;
          double acc = accumulate ? gw[at] : 0.0;
          for (std::int64_t img = 0; img < s.n; ++img) {
            for (std::int64_t r = 0; r < oh; ++r) {
              const std::int64_t ih = r * s.stride - s.pad + u;
              if (ih < 0 || ih >= s.h) continue;
              for (std::int64_t q = 0; q < ow; ++q) {
                const std::int64_t iw = q * s.stride - s.pad + v;
                if (iw < 0 || iw >= s.w) continue;
                acc = std::fma(x[((img * s.c_in + ic) * s.h + ih) * s.w + iw],
                               gy[((img * s.c_out + oc) * oh + r) * ow + q],
                               acc);
              }
            }
          }
          gw[at] = acc;
        }
      }
    }
  }
  if (gbias) {
    for (std::int64_t oc = 0; oc < s.c_out; ++oc) {
      double acc = accumulate ? gbias[oc] : 0.0;
      for (std::int64_t img = 0; img < s.n; ++img)
        for (std::int64_t r = 0; r < oh; ++r)
          for (std::int64_t q = 0; q < ow; ++q)
            acc += gy[((img * s.c_out + oc) * oh + r) * ow + q];
      gbias[oc] = acc;
    }
  }
}

}  // namespace idml::kern::ref
