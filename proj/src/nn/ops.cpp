#include "gymgrid/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include <Eigen/Core>

namespace gymgrid::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
Tensor<T>& grad_of(Node<T>& self, std::size_t i) {
  return self.parents[i]->ensure_grad();
}

template <typename T>
bool wants_grad(const Node<T>& self, std::size_t i) {
  return self.parents[i]->requires_grad;
}

struct ConvGeometry {
  int n, c, h, w;   // input
  int k, stride, pad;
  int ho, wo;       // output
  std::size_t rows() const { return static_cast<std::size_t>(c) * k * k; }
  std::size_t cols() const { return static_cast<std::size_t>(n) * ho * wo; }
};

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  const std::size_t ncols = g.cols();
  const std::size_t plane_out = static_cast<std::size_t>(g.ho) * g.wo;
  for (int c = 0; c < g.c; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        T* row = cols + ((static_cast<std::size_t>(c) * g.k + ky) * g.k + kx) * ncols;
        for (int n = 0; n < g.n; ++n) {
          const T* plane = x + (static_cast<std::size_t>(n) * g.c + c) * g.h * g.w;
          T* out = row + static_cast<std::size_t>(n) * plane_out;
          for (int oy = 0; oy < g.ho; ++oy) {
            const int iy = oy * g.stride + ky - g.pad;
            T* o = out + static_cast<std::size_t>(oy) * g.wo;
            if (iy < 0 || iy >= g.h) {
              std::fill(o, o + g.wo, T{0});
              continue;
            }
            const T* in = plane + static_cast<std::size_t>(iy) * g.w;
            for (int ox = 0; ox < g.wo; ++ox) {
              const int ix = ox * g.stride + kx - g.pad;
              o[ox] = (ix >= 0 && ix < g.w) ? in[ix] : T{0};
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* dx) {
  const std::size_t ncols = g.cols();
  const std::size_t plane_out = static_cast<std::size_t>(g.ho) * g.wo;
  for (int c = 0; c < g.c; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const T* row = cols + ((static_cast<std::size_t>(c) * g.k + ky) * g.k + kx) * ncols;
        for (int n = 0; n < g.n; ++n) {
          T* plane = dx + (static_cast<std::size_t>(n) * g.c + c) * g.h * g.w;
          const T* src = row + static_cast<std::size_t>(n) * plane_out;
          for (int oy = 0; oy < g.ho; ++oy) {
            const int iy = oy * g.stride + ky - g.pad;
            if (iy < 0 || iy >= g.h) continue;
            const T* s = src + static_cast<std::size_t>(oy) * g.wo;
            T* d = plane + static_cast<std::size_t>(iy) * g.w;
            for (int ox = 0; ox < g.wo; ++ox) {
              const int ix = ox * g.stride + kx - g.pad;
              if (ix >= 0 && ix < g.w) d[ix] += s[ox];
            }
          }
        }
      }
    }
  }
}

template <typename T, typename F, typename D>
Var<T> unary(const Var<T>& x, F&& f, D&& dfdx_from_x_y) {
  Tensor<T> out(x.shape());
  const auto& in = x.value();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_result<T>(std::move(out), {x}, [d = std::forward<D>(dfdx_from_x_y)](Node<T>& self) {
    const auto& xin = self.parents[0]->value;
    auto& gx = grad_of(self, 0);
    for (std::size_t i = 0; i < xin.size(); ++i)
      gx[i] += self.grad[i] * d(xin[i], self.value[i]);
  });
}

template <typename T>
void check_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                                b.shape().str());
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.h != ws.w) throw std::invalid_argument("conv2d: kernel must be square, got " + ws.str());
  if (xs.c != ws.c)
    throw std::invalid_argument("conv2d: input has " + std::to_string(xs.c) +
                                " channels, kernel expects " + std::to_string(ws.c));
  if (bias.shape() != Shape{ws.n, 1, 1, 1})
    throw std::invalid_argument("conv2d: bias shape " + bias.shape().str() + " for kernel " +
                                ws.str());
  if (stride < 1 || padding < 0) throw std::invalid_argument("conv2d: bad stride or padding");
  if (xs.h + 2 * padding < ws.h || xs.w + 2 * padding < ws.w)
    throw std::invalid_argument("conv2d: input " + xs.str() + " smaller than kernel " + ws.str());

  ConvGeometry g{xs.n, xs.c, xs.h, xs.w, ws.h, stride, padding,
                 (xs.h + 2 * padding - ws.h) / stride + 1, (xs.w + 2 * padding - ws.w) / stride + 1};
  const int out_ch = ws.n;
  const std::size_t plane_out = static_cast<std::size_t>(g.ho) * g.wo;

  auto cols = std::make_shared<std::vector<T>>(g.rows() * g.cols());
  im2col(x.value().data(), g, cols->data());

  RowMat<T> y(out_ch, static_cast<Eigen::Index>(g.cols()));
  ConstMatMap<T> wmat(weight.value().data(), out_ch, static_cast<Eigen::Index>(g.rows()));
  ConstMatMap<T> cmat(cols->data(), static_cast<Eigen::Index>(g.rows()),
                      static_cast<Eigen::Index>(g.cols()));
  y.noalias() = wmat * cmat;

  Tensor<T> out(Shape{g.n, out_ch, g.ho, g.wo});
  const T* b = bias.value().data();
  for (int n = 0; n < g.n; ++n)
    for (int o = 0; o < out_ch; ++o) {
      const T* src = y.data() + static_cast<std::size_t>(o) * g.cols() + n * plane_out;
      T* dst = out.data() + (static_cast<std::size_t>(n) * out_ch + o) * plane_out;
      for (std::size_t p = 0; p < plane_out; ++p) dst[p] = src[p] + b[o];
    }

  return make_result<T>(std::move(out), {x, weight, bias}, [g, cols, out_ch](Node<T>& self) {
    const std::size_t plane = static_cast<std::size_t>(g.ho) * g.wo;
    RowMat<T> dy(out_ch, static_cast<Eigen::Index>(g.cols()));
    for (int n = 0; n < g.n; ++n)
      for (int o = 0; o < out_ch; ++o) {
        const T* src = self.grad.data() + (static_cast<std::size_t>(n) * out_ch + o) * plane;
        std::copy(src, src + plane, dy.data() + static_cast<std::size_t>(o) * g.cols() + n * plane);
      }
    ConstMatMap<T> cmat(cols->data(), static_cast<Eigen::Index>(g.rows()),
                        static_cast<Eigen::Index>(g.cols()));
    if (wants_grad(self, 1)) {
      auto& gw = grad_of(self, 1);
      MatMap<T> gwm(gw.data(), out_ch, static_cast<Eigen::Index>(g.rows()));
      gwm.noalias() += dy * cmat.transpose();
    }
    if (wants_grad(self, 2)) {
      auto& gb = grad_of(self, 2);
      for (int o = 0; o < out_ch; ++o) gb[static_cast<std::size_t>(o)] += dy.row(o).sum();
    }
    if (wants_grad(self, 0)) {
      const auto& w = self.parents[1]->value;
      ConstMatMap<T> wmat(w.data(), out_ch, static_cast<Eigen::Index>(g.rows()));
      RowMat<T> dcols = wmat.transpose() * dy;
      col2im_add(dcols.data(), g, grad_of(self, 0).data());
    }
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  const auto features = static_cast<Eigen::Index>(xs.sample_size());
  if (ws.c != features || ws.h != 1 || ws.w != 1)
    throw std::invalid_argument("linear: input " + xs.str() + " does not match weight " + ws.str());
  if (bias.shape() != Shape{ws.n, 1, 1, 1})
    throw std::invalid_argument("linear: bias shape " + bias.shape().str());
  const int outs = ws.n;

  Tensor<T> out(Shape{xs.n, outs, 1, 1});
  ConstMatMap<T> xm(x.value().data(), xs.n, features);
  ConstMatMap<T> wm(weight.value().data(), outs, features);
  MatMap<T> ym(out.data(), xs.n, outs);
  ym.noalias() = xm * wm.transpose();
  for (int n = 0; n < xs.n; ++n)
    for (int o = 0; o < outs; ++o) ym(n, o) += bias.value()[static_cast<std::size_t>(o)];

  return make_result<T>(std::move(out), {x, weight, bias}, [features, outs](Node<T>& self) {
    const int batch = self.value.shape().n;
    ConstMatMap<T> dy(self.grad.data(), batch, outs);
    const auto& xv = self.parents[0]->value;
    const auto& wv = self.parents[1]->value;
    if (wants_grad(self, 1)) {
      MatMap<T> gw(grad_of(self, 1).data(), outs, features);
      gw.noalias() += dy.transpose() * ConstMatMap<T>(xv.data(), batch, features);
    }
    if (wants_grad(self, 2)) {
      auto& gb = grad_of(self, 2);
      for (int o = 0; o < outs; ++o) gb[static_cast<std::size_t>(o)] += dy.col(o).sum();
    }
    if (wants_grad(self, 0)) {
      MatMap<T> gx(grad_of(self, 0).data(), batch, features);
      gx.noalias() += dy * ConstMatMap<T>(wv.data(), outs, features);
    }
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  return unary(
      x, [](T v) { return v > T{0} ? v : T{0}; },
      [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  return unary(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T{1} - y * y; });
}

template <typename T>
Var<T> exp(const Var<T>& x) {
  return unary(
      x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> square(const Var<T>& x) {
  return unary(
      x, [](T v) { return v * v; }, [](T v, T) { return T{2} * v; });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  return unary(
      a, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (!wants_grad(self, p)) continue;
      auto& g = grad_of(self, p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    if (wants_grad(self, 0)) {
      auto& g = grad_of(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants_grad(self, 1)) {
      auto& g = grad_of(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (wants_grad(self, 0)) {
      auto& g = grad_of(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (wants_grad(self, 1)) {
      auto& g = grad_of(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

template <typename T>
Var<T> mean_of(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean_of: no inputs");
  for (const auto& x : xs) check_same_shape(xs.front(), x, "mean_of");
  if (xs.size() == 1) return xs.front();
  Tensor<T> out(xs.front().shape());
  for (const auto& x : xs)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += x.value()[i];
  const T inv = T{1} / static_cast<T>(xs.size());
  for (auto& v : out.vec()) v *= inv;
  return make_result<T>(std::move(out), xs, [inv](Node<T>& self) {
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      if (!wants_grad(self, p)) continue;
      auto& g = grad_of(self, p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * inv;
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T s{0};
  for (auto v : x.value().vec()) s += v;
  return make_result<T>(Tensor<T>(Shape{1, 1, 1, 1}, s), {x}, [](Node<T>& self) {
    auto& g = grad_of(self, 0);
    for (auto& v : g.vec()) v += self.grad[0];
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  if (x.value().size() == 0) throw std::invalid_argument("mean of an empty tensor");
  return scale(sum(x), T{1} / static_cast<T>(x.value().size()));
}

template <typename T>
Var<T> sum_per_sample(const Var<T>& x) {
  const Shape s = x.shape();
  const std::size_t m = s.sample_size();
  Tensor<T> out(Shape{s.n, 1, 1, 1});
  for (int n = 0; n < s.n; ++n) {
    T acc{0};
    for (std::size_t i = 0; i < m; ++i) acc += x.value()[n * m + i];
    out[static_cast<std::size_t>(n)] = acc;
  }
  return make_result<T>(std::move(out), {x}, [m](Node<T>& self) {
    auto& g = grad_of(self, 0);
    for (std::size_t n = 0; n < self.value.size(); ++n)
      for (std::size_t i = 0; i < m; ++i) g[n * m + i] += self.grad[n];
  });
}

template <typename T>
Var<T> log_softmax(const Var<T>& x) {
  const Shape s = x.shape();
  const std::size_t m = s.sample_size();
  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n) {
    const T* in = x.value().data() + n * m;
    T* o = out.data() + n * m;
    const T mx = *std::max_element(in, in + m);
    T z{0};
    for (std::size_t i = 0; i < m; ++i) z += std::exp(in[i] - mx);
    const T lz = mx + std::log(z);
    for (std::size_t i = 0; i < m; ++i) o[i] = in[i] - lz;
  }
  return make_result<T>(std::move(out), {x}, [m](Node<T>& self) {
    auto& g = grad_of(self, 0);
    const std::size_t batch = self.value.size() / std::max<std::size_t>(m, 1);
    for (std::size_t n = 0; n < batch; ++n) {
      const T* gy = self.grad.data() + n * m;
      const T* y = self.value.data() + n * m;
      T gs{0};
      for (std::size_t i = 0; i < m; ++i) gs += gy[i];
      for (std::size_t i = 0; i < m; ++i) g[n * m + i] += gy[i] - std::exp(y[i]) * gs;
    }
  });
}

template <typename T>
Var<T> softmax(const Var<T>& x) {
  return exp(log_softmax(x));
}

template <typename T>
Var<T> gather(const Var<T>& x, std::span<const int> indices) {
  const Shape s = x.shape();
  const std::size_t m = s.sample_size();
  if (indices.size() != static_cast<std::size_t>(s.n))
    throw std::invalid_argument("gather: " + std::to_string(indices.size()) + " indices for batch " +
                                std::to_string(s.n));
  Tensor<T> out(Shape{s.n, 1, 1, 1});
  std::vector<int> idx(indices.begin(), indices.end());
  for (int n = 0; n < s.n; ++n) {
    const int i = idx[static_cast<std::size_t>(n)];
    if (i < 0 || static_cast<std::size_t>(i) >= m)
      throw std::out_of_range("gather: index " + std::to_string(i) + " out of range");
    out[static_cast<std::size_t>(n)] = x.value()[n * m + static_cast<std::size_t>(i)];
  }
  return make_result<T>(std::move(out), {x}, [m, idx = std::move(idx)](Node<T>& self) {
    auto& g = grad_of(self, 0);
    for (std::size_t n = 0; n < idx.size(); ++n)
      g[n * m + static_cast<std::size_t>(idx[n])] += self.grad[n];
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(shape);
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    auto& g = grad_of(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Var<T> pad_to_even(const Var<T>& x) {
  const Shape s = x.shape();
  const Shape o{s.n, s.c, s.h + (s.h % 2), s.w + (s.w % 2)};
  if (o == s) return x;
  Tensor<T> out(o, T{0});
  const auto& in = x.value();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int xx = 0; xx < s.w; ++xx) out(n, c, y, xx) = in(n, c, y, xx);
  return make_result<T>(std::move(out), {x}, [s](Node<T>& self) {
    auto& g = grad_of(self, 0);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h; ++y)
          for (int xx = 0; xx < s.w; ++xx) g(n, c, y, xx) += self.grad(n, c, y, xx);
  });
}

template <typename T>
Var<T> pad_channels(const Var<T>& x, int channels) {
  const Shape s = x.shape();
  if (channels < s.c)
    throw std::invalid_argument("pad_channels: cannot shrink " + std::to_string(s.c) + " to " +
                                std::to_string(channels));
  if (channels == s.c) return x;
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  Tensor<T> out(Shape{s.n, channels, s.h, s.w}, T{0});
  for (int n = 0; n < s.n; ++n)
    std::copy_n(x.value().data() + n * s.sample_size(), s.sample_size(),
                out.data() + static_cast<std::size_t>(n) * channels * plane);
  return make_result<T>(std::move(out), {x}, [s, channels, plane](Node<T>& self) {
    auto& g = grad_of(self, 0);
    for (int n = 0; n < s.n; ++n) {
      const T* src = self.grad.data() + static_cast<std::size_t>(n) * channels * plane;
      T* dst = g.data() + n * s.sample_size();
      for (std::size_t i = 0; i < s.sample_size(); ++i) dst[i] += src[i];
    }
  });
}

#define GYMGRID_INSTANTIATE_OPS(T)                                                  \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);    \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);              \
  template Var<T> relu(const Var<T>&);                                              \
  template Var<T> tanh(const Var<T>&);                                              \
  template Var<T> exp(const Var<T>&);                                               \
  template Var<T> square(const Var<T>&);                                            \
  template Var<T> add(const Var<T>&, const Var<T>&);                                \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                \
  template Var<T> scale(const Var<T>&, T);                                          \
  template Var<T> mean_of(const std::vector<Var<T>>&);                              \
  template Var<T> sum(const Var<T>&);                                               \
  template Var<T> mean(const Var<T>&);                                              \
  template Var<T> sum_per_sample(const Var<T>&);                                    \
  template Var<T> log_softmax(const Var<T>&);                                       \
  template Var<T> softmax(const Var<T>&);                                           \
  template Var<T> gather(const Var<T>&, std::span<const int>);                      \
  template Var<T> reshape(const Var<T>&, Shape);                                    \
  template Var<T> pad_to_even(const Var<T>&);                                       \
  template Var<T> pad_channels(const Var<T>&, int);

GYMGRID_INSTANTIATE_OPS(float)
GYMGRID_INSTANTIATE_OPS(double)

}  // namespace gymgrid::nn
