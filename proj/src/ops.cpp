#include "idml/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "idml/kernels.hpp"

namespace idml {

namespace {

bool tracked(Tape* tape, std::initializer_list<const Tensor*> ins) {
  if (!tape) return false;
  for (const Tensor* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

[[noreturn]] void op_error(const std::string& op, const std::string& detail) {
  throw std::invalid_argument(op + ": " + detail);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!same_shape(a.shape(), b.shape())) {
    op_error(op, "shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// Row-major block sizes around `axis`.
void split_at_axis(const Shape& s, int axis, std::int64_t* outer,
                   std::int64_t* inner) {
  *outer = 1;
  *inner = 1;
  for (int i = 0; i < axis; ++i) *outer *= s[i];
  for (int i = axis + 1; i < static_cast<int>(s.size()); ++i) *inner *= s[i];
}

}  // namespace

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Tensor y = Tensor::zeros(a.shape());
  auto yd = y.mutable_data();
  auto ad = a.data();
  auto bd = b.data();
  for (std::int64_t i = 0; i < y.numel(); ++i) yd[i] = ad[i] + bd[i];
  if (tracked(tape, {&a, &b})) {
    y.set_requires_grad(true);
    tape->record({a, b}, y, [a, b, y]() mutable {
      auto gy = y.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
      }
    });
  }
  return y;
}

Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Tensor y = Tensor::zeros(a.shape());
  auto yd = y.mutable_data();
  auto ad = a.data();
  auto bd = b.data();
  for (std::int64_t i = 0; i < y.numel(); ++i) yd[i] = ad[i] - bd[i];
  if (tracked(tape, {&a, &b})) {
    y.set_requires_grad(true);
    tape->record({a, b}, y, [a, b, y]() mutable {
      auto gy = y.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i];
      }
    });
  }
  return y;
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
  require_same_shape("mul-elementwise", a, b);
  Tensor y = Tensor::zeros(a.shape());
  auto yd = y.mutable_data();
  auto ad = a.data();
  auto bd = b.data();
  for (std::int64_t i = 0; i < y.numel(); ++i) yd[i] = ad[i] * bd[i];
  if (tracked(tape, {&a, &b})) {
    y.set_requires_grad(true);
    tape->record({a, b}, y, [a, b, y]() mutable {
      auto gy = y.grad();
      auto ad2 = a.data();
      auto bd2 = b.data();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bd2[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * ad2[i];
      }
    });
  }
  return y;
}

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    op_error("matmul", "incompatible shapes " + shape_str(a.shape()) + " vs " +
                           shape_str(b.shape()));
  }
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor y = Tensor::zeros({m, n});
  kern::gemm(false, false, m, n, k, a.data().data(), b.data().data(),
             y.mutable_data().data());
  if (tracked(tape, {&a, &b})) {
    y.set_requires_grad(true);
    tape->record({a, b}, y, [a, b, y, m, k, n]() mutable {
      const double* gy = y.grad().data();
      if (a.requires_grad()) {
        kern::gemm(false, true, m, k, n, gy, b.data().data(),
                   a.grad_buffer().data(), /*accumulate=*/true);
      }
      if (b.requires_grad()) {
        kern::gemm(true, false, k, n, m, a.data().data(), gy,
                   b.grad_buffer().data(), /*accumulate=*/true);
      }
    });
  }
  return y;
}

Tensor conv2d(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& bias,
              std::int64_t stride, std::int64_t pad) {
  if (x.ndim() != 4 || w.ndim() != 4) {
    op_error("conv2d", "expected 4-d input and weight, got " +
                           shape_str(x.shape()) + " and " +
                           shape_str(w.shape()));
  }
  if (x.dim(1) != w.dim(1)) {
    op_error("conv2d", "channel mismatch " + shape_str(x.shape()) + " vs " +
                           shape_str(w.shape()));
  }
  if (bias.ndim() != 1 || bias.dim(0) != w.dim(0)) {
    op_error("conv2d", "bias shape " + shape_str(bias.shape()) +
                           " does not match weight " + shape_str(w.shape()));
  }
  if (stride < 1 || pad < 0) {
    op_error("conv2d", "stride must be >= 1 and pad >= 0, got stride=" +
                           std::to_string(stride) +
                           " pad=" + std::to_string(pad));
  }
  kern::Conv2dShape s{x.dim(0), x.dim(1), x.dim(2), x.dim(3),
                      w.dim(0), w.dim(2), w.dim(3), stride,  pad};
  if (s.kh > s.h + 2 * pad || s.kw > s.w + 2 * pad) {
    op_error("conv2d", "kernel " + shape_str(w.shape()) +
                           " does not fit input " + shape_str(x.shape()) +
                           " with pad " + std::to_string(pad));
  }
  Tensor y = Tensor::zeros({s.n, s.c_out, s.out_h(), s.out_w()});
  kern::conv2d(s, x.data().data(), w.data().data(), bias.data().data(),
               y.mutable_data().data());
  if (tracked(tape, {&x, &w, &bias})) {
    y.set_requires_grad(true);
    tape->record({x, w, bias}, y, [x, w, bias, y, s]() mutable {
      const double* gy = y.grad().data();
      if (x.requires_grad()) {
        kern::conv2d_grad_input(s, w.data().data(), gy,
                                x.grad_buffer().data(), /*accumulate=*/true);
      }
      if (w.requires_grad() || bias.requires_grad()) {
        std::vector<double> gw(static_cast<std::size_t>(w.numel()), 0.0);
        std::vector<double> gb(static_cast<std::size_t>(bias.numel()), 0.0);
        kern::conv2d_grad_weight(s, x.data().data(), gy, gw.data(), gb.data());
        if (w.requires_grad()) {
          auto dst = w.grad_buffer();
          for (std::size_t i = 0; i < gw.size(); ++i) dst[i] += gw[i];
        }
        if (bias.requires_grad()) {
          auto dst = bias.grad_buffer();
          for (std::size_t i = 0; i < gb.size(); ++i) dst[i] += gb[i];
        }
      }
    });
  }
  return y;
}

Tensor relu(Tape* tape, const Tensor& x) {
  Tensor y = Tensor::zeros(x.shape());
  auto yd = y.mutable_data();
  auto xd = x.data();
  for (std::int64_t i = 0; i < y.numel(); ++i)
    yd[i] = xd[i] > 0.0 ? xd[i] : 0.0;
  if (tracked(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [x, y]() mutable {
      if (!x.requires_grad()) return;
      auto gy = y.grad();
      auto xd2 = x.data();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < gy.size(); ++i)
        if (xd2[i] > 0.0) gx[i] += gy[i];
    });
  }
  return y;
}

Tensor global_avg_pool(Tape* tape, const Tensor& x) {
  if (x.ndim() != 4) {
    op_error("global_avg_pool",
             "expected 4-d input, got " + shape_str(x.shape()));
  }
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor y = Tensor::zeros({n, c});
  auto yd = y.mutable_data();
  auto xd = x.data();
  for (std::int64_t i = 0; i < n * c; ++i) {
    double acc = 0.0;
    for (std::int64_t j = 0; j < hw; ++j) acc += xd[i * hw + j];
    yd[i] = acc / static_cast<double>(hw);
  }
  if (tracked(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [x, y, n, c, hw]() mutable {
      if (!x.requires_grad()) return;
      auto gy = y.grad();
      auto gx = x.grad_buffer();
      for (std::int64_t i = 0; i < n * c; ++i) {
        const double g = gy[i] / static_cast<double>(hw);
        for (std::int64_t j = 0; j < hw; ++j) gx[i * hw + j] += g;
      }
    });
  }
  return y;
}

Tensor affine(Tape* tape, const Tensor& x, const Tensor& w,
              const Tensor& bias) {
  if (x.ndim() != 2 || w.ndim() != 2 || x.dim(1) != w.dim(1)) {
    op_error("affine", "incompatible shapes " + shape_str(x.shape()) +
                           " vs weight " + shape_str(w.shape()));
  }
  if (bias.ndim() != 1 || bias.dim(0) != w.dim(0)) {
    op_error("affine", "bias shape " + shape_str(bias.shape()) +
                           " does not match weight " + shape_str(w.shape()));
  }
  const std::int64_t n = x.dim(0), in = x.dim(1), out = w.dim(0);
  Tensor y = Tensor::zeros({n, out});
  kern::gemm(false, true, n, out, in, x.data().data(), w.data().data(),
             y.mutable_data().data());
  auto yd = y.mutable_data();
  auto bd = bias.data();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t o = 0; o < out; ++o) yd[i * out + o] += bd[o];
  if (tracked(tape, {&x, &w, &bias})) {
    y.set_requires_grad(true);
    tape->record({x, w, bias}, y, [x, w, bias, y, n, in, out]() mutable {
      const double* gy = y.grad().data();
      if (x.requires_grad()) {
        kern::gemm(false, false, n, in, out, gy, w.data().data(),
                   x.grad_buffer().data(), /*accumulate=*/true);
      }
      if (w.requires_grad()) {
        kern::gemm(true, false, out, in, n, gy, x.data().data(),
                   w.grad_buffer().data(), /*accumulate=*/true);
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad_buffer();
        for (std::int64_t o = 0; o < out; ++o) {
          double acc = 0.0;
          for (std::int64_t i = 0; i < n; ++i) acc += gy[i * out + o];
          gb[o] += acc;
        }
      }
    });
  }
  return y;
}

Tensor l2_normalize(Tape* tape, const Tensor& x) {
  if (x.ndim() != 2) {
    op_error("l2_normalize", "expected 2-d input, got " + shape_str(x.shape()));
  }
  const std::int64_t n = x.dim(0), d = x.dim(1);
  Tensor y = Tensor::zeros(x.shape());
  auto yd = y.mutable_data();
  auto xd = x.data();
  std::vector<double> norms(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::int64_t j = 0; j < d; ++j)
      sq = std::fma(xd[i * d + j], xd[i * d + j], sq);
    const double norm = std::sqrt(sq);
    if (norm < 1e-12) {
      throw std::runtime_error(
          "l2_normalize: row " + std::to_string(i) + " has norm " +
          std::to_string(norm) + " < 1e-12 (degenerate embedding)");
    }
    norms[static_cast<std::size_t>(i)] = norm;
    for (std::int64_t j = 0; j < d; ++j) yd[i * d + j] = xd[i * d + j] / norm;
  }
  if (tracked(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [x, y, norms, n, d]() mutable {
      if (!x.requires_grad()) return;
      auto gy = y.grad();
      auto yd2 = y.data();
      auto gx = x.grad_buffer();
      for (std::int64_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::int64_t j = 0; j < d; ++j)
          dot = std::fma(gy[i * d + j], yd2[i * d + j], dot);
        const double norm = norms[static_cast<std::size_t>(i)];
        for (std::int64_t j = 0; j < d; ++j)
          gx[i * d + j] += (gy[i * d + j] - yd2[i * d + j] * dot) / norm;
      }
    });
  }
  return y;
}

Tensor concat(Tape* tape, const std::vector<Tensor>& xs, int axis) {
  if (xs.empty()) op_error("concat", "no inputs");
  const int nd = xs[0].ndim();
  if (axis < 0 || axis >= nd) {
    op_error("concat", "axis " + std::to_string(axis) +
                           " out of range for shape " +
                           shape_str(xs[0].shape()));
  }
  Shape out_shape = xs[0].shape();
  out_shape[axis] = 0;
  for (const Tensor& t : xs) {
    if (t.ndim() != nd) {
      op_error("concat", "rank mismatch " + shape_str(xs[0].shape()) + " vs " +
                             shape_str(t.shape()));
    }
    for (int i = 0; i < nd; ++i) {
      if (i != axis && t.dim(i) != xs[0].dim(i)) {
        op_error("concat", "shape mismatch " + shape_str(xs[0].shape()) +
                               " vs " + shape_str(t.shape()) + " off axis " +
                               std::to_string(axis));
      }
    }
    out_shape[axis] += t.dim(axis);
  }
  std::int64_t outer, inner;
  split_at_axis(out_shape, axis, &outer, &inner);
  const std::int64_t total_axis = out_shape[axis];
  Tensor y = Tensor::zeros(out_shape);
  auto yd = y.mutable_data();
  std::int64_t pos = 0;
  for (const Tensor& t : xs) {
    const std::int64_t da = t.dim(axis);
    auto td = t.data();
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy(td.begin() + o * da * inner, td.begin() + (o + 1) * da * inner,
                yd.begin() + (o * total_axis + pos) * inner);
    }
    pos += da;
  }
  bool any_grad = false;
  for (const Tensor& t : xs) any_grad = any_grad || t.requires_grad();
  if (tape && any_grad) {
    y.set_requires_grad(true);
    std::vector<Tensor> ins = xs;
    tape->record(ins, y, [ins, y, axis, outer, inner, total_axis]() mutable {
      auto gy = y.grad();
      std::int64_t pos2 = 0;
      for (Tensor& t : ins) {
        const std::int64_t da = t.dim(axis);
        if (t.requires_grad()) {
          auto gt = t.grad_buffer();
          for (std::int64_t o = 0; o < outer; ++o) {
            const double* src = gy.data() + (o * total_axis + pos2) * inner;
            double* dst = gt.data() + o * da * inner;
            for (std::int64_t j = 0; j < da * inner; ++j) dst[j] += src[j];
          }
        }
        pos2 += da;
      }
    });
  }
  return y;
}

Tensor slice(Tape* tape, const Tensor& x, int axis, std::int64_t start,
             std::int64_t end) {
  if (axis < 0 || axis >= x.ndim()) {
    op_error("slice", "axis " + std::to_string(axis) +
                          " out of range for shape " + shape_str(x.shape()));
  }
  if (start < 0 || end <= start || end > x.dim(axis)) {
    op_error("slice", "range [" + std::to_string(start) + ", " +
                          std::to_string(end) + ") invalid for shape " +
                          shape_str(x.shape()) + " axis " +
                          std::to_string(axis));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = end - start;
  std::int64_t outer, inner;
  split_at_axis(x.shape(), axis, &outer, &inner);
  const std::int64_t total_axis = x.dim(axis), da = end - start;
  Tensor y = Tensor::zeros(out_shape);
  auto yd = y.mutable_data();
  auto xd = x.data();
  for (std::int64_t o = 0; o < outer; ++o) {
    std::copy(xd.begin() + (o * total_axis + start) * inner,
              xd.begin() + (o * total_axis + end) * inner,
              yd.begin() + o * da * inner);
  }
  if (tracked(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y,
                 [x, y, start, outer, inner, total_axis, da]() mutable {
                   if (!x.requires_grad()) return;
                   auto gy = y.grad();
                   auto gx = x.grad_buffer();
                   for (std::int64_t o = 0; o < outer; ++o) {
                     const double* src = gy.data() + o * da * inner;
                     double* dst = gx.data() + (o * total_axis + start) * inner;
                     for (std::int64_t j = 0; j < da * inner; ++j)
                       dst[j] += src[j];
                   }
                 });
  }
  return y;
}

Tensor reduce_sum(Tape* tape, const Tensor& x) {
  double acc = 0.0;
  auto xd = x.data();
  for (std::int64_t i = 0; i < x.numel(); ++i) acc += xd[i];
  Tensor y = Tensor::scalar(acc);
  if (tracked(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [x, y]() mutable {
      if (!x.requires_grad()) return;
      const double g = y.grad()[0];
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
  }
  return y;
}

Tensor reduce_mean(Tape* tape, const Tensor& x) {
  double acc = 0.0;
  auto xd = x.data();
  for (std::int64_t i = 0; i < x.numel(); ++i) acc += xd[i];
  const double n = static_cast<double>(x.numel());
  Tensor y = Tensor::scalar(acc / n);
  if (tracked(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [x, y, n]() mutable {
      if (!x.requires_grad()) return;
      const double g = y.grad()[0] / n;
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
  }
  return y;
}

Tensor log(Tape* tape, const Tensor& x) {
  Tensor y = Tensor::zeros(x.shape());
  auto yd = y.mutable_data();
  auto xd = x.data();
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    if (xd[i] <= 0.0) {
      throw std::runtime_error("log: non-positive input " +
                               std::to_string(xd[i]) + " at index " +
                               std::to_string(i));
    }
    yd[i] = std::log(xd[i]);
  }
  if (tracked(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [x, y]() mutable {
      if (!x.requires_grad()) return;
      auto gy = y.grad();
      auto xd2 = x.data();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] / xd2[i];
    });
  }
  return y;
}

Tensor exp(Tape* tape, const Tensor& x) {
  Tensor y = Tensor::zeros(x.shape());
  auto yd = y.mutable_data();
  auto xd = x.data();
  for (std::int64_t i = 0; i < x.numel(); ++i) yd[i] = std::exp(xd[i]);
  if (tracked(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [x, y]() mutable {
      if (!x.requires_grad()) return;
      auto gy = y.grad();
      auto yd2 = y.data();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * yd2[i];
    });
  }
  return y;
}

Tensor sqrt(Tape* tape, const Tensor& x) {
  Tensor y = Tensor::zeros(x.shape());
  auto yd = y.mutable_data();
  auto xd = x.data();
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    if (xd[i] < 0.0) {
      throw std::runtime_error("sqrt: negative input " +
                               std::to_string(xd[i]) + " at index " +
                               std::to_string(i));
    }
    yd[i] = std::sqrt(xd[i]);
  }
  if (tracked(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [x, y]() mutable {
      if (!x.requires_grad()) return;
      auto gy = y.grad();
      auto yd2 = y.data();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < gy.size(); ++i)
        if (yd2[i] > 0.0) gx[i] += gy[i] / (2.0 * yd2[i]);
    });
  }
  return y;
}

Tensor square(Tape* tape, const Tensor& x) {
  Tensor y = Tensor::zeros(x.shape());
  auto yd = y.mutable_data();
  auto xd = x.data();
  for (std::int64_t i = 0; i < x.numel(); ++i) yd[i] = xd[i] * xd[i];
  if (tracked(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [x, y]() mutable {
      if (!x.requires_grad()) return;
      auto gy = y.grad();
      auto xd2 = x.data();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < gy.size(); ++i)
        gx[i] += gy[i] * 2.0 * xd2[i];
    });
  }
  return y;
}

Tensor softplus(Tape* tape, const Tensor& x) {
  Tensor y = Tensor::zeros(x.shape());
  auto yd = y.mutable_data();
  auto xd = x.data();
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double v = xd[i];
    yd[i] = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  }
  if (tracked(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [x, y]() mutable {
      if (!x.requires_grad()) return;
      auto gy = y.grad();
      auto xd2 = x.data();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < gy.size(); ++i)
        gx[i] += gy[i] / (1.0 + std::exp(-xd2[i]));
    });
  }
  return y;
}

Tensor max(Tape* tape, const Tensor& a, const Tensor& b) {
  require_same_shape("max-elementwise", a, b);
  Tensor y = Tensor::zeros(a.shape());
  auto yd = y.mutable_data();
  auto ad = a.data();
  auto bd = b.data();
  for (std::int64_t i = 0; i < y.numel(); ++i)
    yd[i] = ad[i] >= bd[i] ? ad[i] : bd[i];
  if (tracked(tape, {&a, &b})) {
    y.set_requires_grad(true);
    tape->record({a, b}, y, [a, b, y]() mutable {
      auto gy = y.grad();
      auto ad2 = a.data();
      auto bd2 = b.data();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < gy.size(); ++i)
          if (ad2[i] >= bd2[i]) ga[i] += gy[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < gy.size(); ++i)
          if (ad2[i] < bd2[i]) gb[i] += gy[i];
      }
    });
  }
  return y;
}

std::string op_kind_name(OpKind kind) {
  switch (kind) {
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul-elementwise";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kRelu: return "relu";
    case OpKind::kGlobalAvgPool: return "global_avg_pool";
    case OpKind::kAffine: return "affine";
    case OpKind::kL2Normalize: return "l2_normalize";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kReduceSum: return "reduce_sum";
    case OpKind::kReduceMean: return "reduce_mean";
    case OpKind::kLog: return "log";
    case OpKind::kExp: return "exp";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kSquare: return "square";
    case OpKind::kSoftplus: return "softplus";
    case OpKind::kMax: return "max-elementwise";
  }
  throw std::logic_error("op_kind_name: bad kind");
}

OpKind parse_op_kind(const std::string& name) {
  for (OpKind kind : kAllOpKinds)
    if (op_kind_name(kind) == name) return kind;
  throw std::invalid_argument("unknown op kind '" + name + "'");
}

namespace {

void require_arity(OpKind kind, const std::vector<Tensor>& inputs,
                   std::size_t arity) {
  if (inputs.size() != arity) {
    op_error(op_kind_name(kind), "expected " + std::to_string(arity) +
                                     " inputs, got " +
                                     std::to_string(inputs.size()));
  }
}

}  // namespace

Tensor forward_op(Tape* tape, OpKind kind, const std::vector<Tensor>& inputs,
                  const OpAttrs& attrs) {
  switch (kind) {
    case OpKind::kAdd:
      require_arity(kind, inputs, 2);
      return add(tape, inputs[0], inputs[1]);
    case OpKind::kSub:
      require_arity(kind, inputs, 2);
      return sub(tape, inputs[0], inputs[1]);
    case OpKind::kMul:
      require_arity(kind, inputs, 2);
      return mul(tape, inputs[0], inputs[1]);
    case OpKind::kMatmul:
      require_arity(kind, inputs, 2);
      return matmul(tape, inputs[0], inputs[1]);
    case OpKind::kConv2d:
      require_arity(kind, inputs, 3);
      return conv2d(tape, inputs[0], inputs[1], inputs[2], attrs.stride,
                    attrs.pad);
    case OpKind::kRelu:
      require_arity(kind, inputs, 1);
      return relu(tape, inputs[0]);
    case OpKind::kGlobalAvgPool:
      require_arity(kind, inputs, 1);
      return global_avg_pool(tape, inputs[0]);
    case OpKind::kAffine:
      require_arity(kind, inputs, 3);
      return affine(tape, inputs[0], inputs[1], inputs[2]);
    case OpKind::kL2Normalize:
      require_arity(kind, inputs, 1);
      return l2_normalize(tape, inputs[0]);
    case OpKind::kConcat:
      return concat(tape, inputs, attrs.axis);
    case OpKind::kSlice:
      require_arity(kind, inputs, 1);
      return slice(tape, inputs[0], attrs.axis, attrs.start, attrs.end);
    case OpKind::kReduceSum:
      require_arity(kind, inputs, 1);
      return reduce_sum(tape, inputs[0]);
    case OpKind::kReduceMean:
      require_arity(kind, inputs, 1);
      return reduce_mean(tape, inputs[0]);
    case OpKind::kLog:
      require_arity(kind, inputs, 1);
      return log(tape, inputs[0]);
    case OpKind::kExp:
      require_arity(kind, inputs, 1);
      return exp(tape, inputs[0]);
    case OpKind::kSqrt:
      require_arity(kind, inputs, 1);
      return sqrt(tape, inputs[0]);
    case OpKind::kSquare:
      require_arity(kind, inputs, 1);
      return square(tape, inputs[0]);
    case OpKind::kSoftplus:
      require_arity(kind, inputs, 1);
      return softplus(tape, inputs[0]);
    case OpKind::kMax:
      require_arity(kind, inputs, 2);
      return max(tape, inputs[0], inputs[1]);
  }
  throw std::logic_error("forward_op: bad kind");
}

GradCheckReport gradient_check(
    const std::function<Tensor(Tape*, const Tensor&)>& f, const Tensor& x,
    double h, double tol) {
  const std::vector<double> base(x.data().begin(), x.data().end());
  Tensor xa = Tensor::from_data(x.shape(), base, /*requires_grad=*/true);
  Tape tape;
  Tensor y = f(&tape, xa);
  if (y.numel() != 1) {
    throw std::logic_error("gradient_check: f must return a scalar");
  }
  tape.backward(y);

  GradCheckReport report;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    std::vector<double> bumped = base;
    bumped[static_cast<std::size_t>(i)] = base[static_cast<std::size_t>(i)] + h;
    const double fp = f(nullptr, Tensor::from_data(x.shape(), bumped)).item();
    bumped[static_cast<std::size_t>(i)] = base[static_cast<std::size_t>(i)] - h;
    const double fm = f(nullptr, Tensor::from_data(x.shape(), bumped)).item();
    const double fd = (fp - fm) / (2.0 * h);
    const double an = xa.has_grad() ? xa.grad()[static_cast<std::size_t>(i)] : 0.0;
    const double rel = std::abs(an - fd) / (std::abs(an) + std::abs(fd) + 1e-12);
    report.max_rel_err = std::max(report.max_rel_err, rel);
    if (rel > tol) report.failures.push_back({i, an, fd, rel});
  }
  return report;
}

}  // namespace idml
