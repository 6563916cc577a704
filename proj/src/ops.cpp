#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "ssgan/error.hpp"
#include "ssgan/tensor.hpp"

namespace ssgan {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

template <typename Fwd, typename Bwd>
Tensor unary(const Tensor& x, Fwd fwd, Bwd dfdx) {
  const auto in = x.data();
  std::vector<float> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return make_result(x.shape(), std::move(out), {x}, [dfdx](detail::Node& self) {
    auto& p = *self.parents[0];
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * dfdx(p.data[i], self.data[i]);
    }
  });
}

float stable_sigmoid(float z) {
  if (z >= 0) return 1.0f / (1.0f + std::exp(-z));
  const float e = std::exp(z);
  return e / (1.0f + e);
}

struct ConvGeometry {
  std::size_t channels, height, width;  // the "image" side
  std::size_t kh, kw;
  int stride, pad;
  std::size_t out_h, out_w;  // the "column" side
};

// cols[(c*kh + i)*kw + j][oy*out_w + ox] = x[c][oy*s - p + i][ox*s - p + j]
void im2col(const float* x, const ConvGeometry& g, float* cols) {
  const std::size_t spatial = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        float* row = cols + ((c * g.kh + i) * g.kw + j) * spatial;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(i);
          float* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.height)) {
            std::fill(dst, dst + g.out_w, 0.0f);
            continue;
          }
          const float* src = x + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(j);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.width))
                          ? 0.0f
                          : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into the image.
void col2im(const float* cols, const ConvGeometry& g, float* x) {
  const std::size_t spatial = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const float* row = cols + ((c * g.kh + i) * g.kw + j) * spatial;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(i);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          float* dst = x + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          const float* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(j);
            if (ix >= 0 && ix < static_cast<long>(g.width)) {
              dst[static_cast<std::size_t>(ix)] += src[ox];
            }
          }
        }
      }
    }
  }
}

struct Batched {
  std::size_t n, c, h, w;
  bool had_batch;
};

Batched batched_dims(const Tensor& t, const char* op) {
  if (t.rank() == 3) return {1, t.dim(0), t.dim(1), t.dim(2), false};
  if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3), true};
  throw DimensionError(std::string(op) + ": expected [C,H,W] or [N,C,H,W], got " +
                       shape_string(t.shape()));
}

Shape with_batch(const Batched& b, std::size_t c, std::size_t h, std::size_t w) {
  if (b.had_batch) return {b.n, c, h, w};
  return {c, h, w};
}

}  // namespace

// ------------------------------------------------------------ elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<float> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) p->accumulate(self.grad);
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<float> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) {
      auto& g = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<float> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.data[i];
    }
  });
}

Tensor scale(const Tensor& a, float factor) {
  return unary(
      a, [factor](float v) { return v * factor; },
      [factor](float, float) { return factor; });
}

Tensor add_scalar(const Tensor& a, float offset) {
  return unary(
      a, [offset](float v) { return v + offset; },
      [](float, float) { return 1.0f; });
}

Tensor leaky_relu(const Tensor& x, float slope) {
  return unary(
      x, [slope](float v) { return v >= 0 ? v : slope * v; },
      [slope](float in, float) { return in >= 0 ? 1.0f : slope; });
}

Tensor relu(const Tensor& x) { return leaky_relu(x, 0.0f); }

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](float v) { return std::tanh(v); },
      [](float, float out) { return 1.0f - out * out; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(x, stable_sigmoid,
               [](float, float out) { return out * (1.0f - out); });
}

// ------------------------------------------------------------- reductions

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  return make_result(Shape{1}, {static_cast<float>(acc)}, {a},
                     [](detail::Node& self) {
                       auto& g = self.parents[0]->grad_buffer();
                       const float d = self.grad[0];
                       for (auto& v : g) v += d;
                     });
}

Tensor mean(const Tensor& a) {
  const auto n = static_cast<double>(a.numel());
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  return make_result(Shape{1}, {static_cast<float>(acc / n)}, {a},
                     [n](detail::Node& self) {
                       auto& g = self.parents[0]->grad_buffer();
                       const float d = static_cast<float>(self.grad[0] / n);
                       for (auto& v : g) v += d;
                     });
}

// ----------------------------------------------------------------- linear

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()));
  }
  const auto n = a.dim(0), k = a.dim(1), m = b.dim(1);
  std::vector<float> out(n * m);
  MapMat(out.data(), n, m).noalias() =
      ConstMapMat(a.data().data(), n, k) * ConstMapMat(b.data().data(), k, m);
  return make_result({n, m}, std::move(out), {a, b}, [n, k, m](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    ConstMapMat dy(self.grad.data(), n, m);
    if (pa.requires_grad) {
      MapMat(pa.grad_buffer().data(), n, k).noalias() +=
          dy * ConstMapMat(pb.data.data(), k, m).transpose();
    }
    if (pb.requires_grad) {
      MapMat(pb.grad_buffer().data(), k, m).noalias() +=
          ConstMapMat(pa.data.data(), n, k).transpose() * dy;
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || bias.rank() != 1 ||
      x.dim(1) != weight.dim(1) || bias.dim(0) != weight.dim(0)) {
    throw DimensionError("linear: incompatible shapes x" + shape_string(x.shape()) +
                         " w" + shape_string(weight.shape()) + " b" +
                         shape_string(bias.shape()));
  }
  const auto n = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  std::vector<float> out(n * out_dim);
  MapMat y(out.data(), n, out_dim);
  y.noalias() = ConstMapMat(x.data().data(), n, in) *
                ConstMapMat(weight.data().data(), out_dim, in).transpose();
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(bias.data().data(), out_dim);
  return make_result(
      {n, out_dim}, std::move(out), {x, weight, bias},
      [n, in, out_dim](detail::Node& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        auto& pb = *self.parents[2];
        ConstMapMat dy(self.grad.data(), n, out_dim);
        if (px.requires_grad) {
          MapMat(px.grad_buffer().data(), n, in).noalias() +=
              dy * ConstMapMat(pw.data.data(), out_dim, in);
        }
        if (pw.requires_grad) {
          MapMat(pw.grad_buffer().data(), out_dim, in).noalias() +=
              dy.transpose() * ConstMapMat(px.data.data(), n, in);
        }
        if (pb.requires_grad) {
          Eigen::Map<Eigen::RowVectorXf>(pb.grad_buffer().data(), out_dim) +=
              dy.colwise().sum();
        }
      });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  const auto d = batched_dims(x, "add_channel_bias");
  if (bias.rank() != 1 || bias.dim(0) != d.c) {
    throw DimensionError("add_channel_bias: bias " + shape_string(bias.shape()) +
                         " does not match " + shape_string(x.shape()));
  }
  const std::size_t plane = d.h * d.w;
  std::vector<float> out(x.data().begin(), x.data().end());
  const auto b = bias.data();
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t c = 0; c < d.c; ++c) {
      float* p = out.data() + (n * d.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] += b[c];
    }
  return make_result(x.shape(), std::move(out), {x, bias}, [d, plane](detail::Node& self) {
    auto& px = *self.parents[0];
    auto& pb = *self.parents[1];
    if (px.requires_grad) px.accumulate(self.grad);
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t n = 0; n < d.n; ++n)
        for (std::size_t c = 0; c < d.c; ++c) {
          const float* p = self.grad.data() + (n * d.c + c) * plane;
          double acc = 0.0;
          for (std::size_t i = 0; i < plane; ++i) acc += p[i];
          g[c] += static_cast<float>(acc);
        }
    }
  });
}

// ---------------------------------------------------------- convolutions

std::size_t conv_output_size(std::size_t in, std::size_t kernel, int stride,
                             int pad) {
  if (stride < 1 || pad < 0) {
    throw DimensionError("conv2d: stride must be >= 1 and pad >= 0");
  }
  const long span = static_cast<long>(in) + 2L * pad - static_cast<long>(kernel);
  if (span < 0) {
    throw DimensionError("conv2d: kernel " + std::to_string(kernel) +
                         " larger than padded input " +
                         std::to_string(in + 2 * static_cast<std::size_t>(pad)));
  }
  if (span % stride != 0) {
    throw DimensionError("conv2d: (H + 2*pad - k) = " + std::to_string(span) +
                         " not divisible by stride " + std::to_string(stride));
  }
  return static_cast<std::size_t>(span / stride + 1);
}

std::size_t conv_transpose_output_size(std::size_t in, std::size_t kernel,
                                       int stride, int pad) {
  if (stride < 1 || pad < 0 || in == 0) {
    throw DimensionError("conv2d_transpose: invalid stride/pad/input size");
  }
  const long out = (static_cast<long>(in) - 1) * stride - 2L * pad +
                   static_cast<long>(kernel);
  if (out <= 0) {
    throw DimensionError("conv2d_transpose: non-positive output size " +
                         std::to_string(out));
  }
  return static_cast<std::size_t>(out);
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride, int pad) {
  const auto d = batched_dims(input, "conv2d");
  if (kernels.rank() != 4) {
    throw DimensionError("conv2d: kernels must be [Cout,Cin,kh,kw], got " +
                         shape_string(kernels.shape()));
  }
  const auto cout = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  if (kernels.dim(1) != d.c) {
    throw DimensionError("conv2d: input has " + std::to_string(d.c) +
                         " channels, kernels expect " + std::to_string(kernels.dim(1)));
  }
  const auto ho = conv_output_size(d.h, kh, stride, pad);
  const auto wo = conv_output_size(d.w, kw, stride, pad);
  const ConvGeometry geo{d.c, d.h, d.w, kh, kw, stride, pad, ho, wo};
  const std::size_t ck = d.c * kh * kw, spatial = ho * wo;
  const std::size_t in_plane = d.c * d.h * d.w, out_plane = cout * spatial;

  std::vector<float> out(d.n * out_plane);
  std::vector<float> cols(ck * spatial);
  ConstMapMat kmat(kernels.data().data(), cout, ck);
  for (std::size_t n = 0; n < d.n; ++n) {
    im2col(input.data().data() + n * in_plane, geo, cols.data());
    MapMat(out.data() + n * out_plane, cout, spatial).noalias() =
        kmat * ConstMapMat(cols.data(), ck, spatial);
  }
  return make_result(
      with_batch(d, cout, ho, wo), std::move(out), {input, kernels},
      [d, geo, cout, ck, spatial, in_plane, out_plane](detail::Node& self) {
        auto& px = *self.parents[0];
        auto& pk = *self.parents[1];
        ConstMapMat kmat(pk.data.data(), cout, ck);
        std::vector<float> cols(ck * spatial);
        for (std::size_t n = 0; n < d.n; ++n) {
          ConstMapMat dy(self.grad.data() + n * out_plane, cout, spatial);
          if (pk.requires_grad) {
            im2col(px.data.data() + n * in_plane, geo, cols.data());
            MapMat(pk.grad_buffer().data(), cout, ck).noalias() +=
                dy * ConstMapMat(cols.data(), ck, spatial).transpose();
          }
          if (px.requires_grad) {
            MapMat(cols.data(), ck, spatial).noalias() = kmat.transpose() * dy;
            col2im(cols.data(), geo, px.grad_buffer().data() + n * in_plane);
          }
        }
      });
}

Tensor conv2d_transpose(const Tensor& input, const Tensor& kernels, int stride,
                        int pad) {
  const auto d = batched_dims(input, "conv2d_transpose");
  if (kernels.rank() != 4) {
    throw DimensionError("conv2d_transpose: kernels must be [Cin,Cout,kh,kw], got " +
                         shape_string(kernels.shape()));
  }
  if (kernels.dim(0) != d.c) {
    throw DimensionError("conv2d_transpose: input has " + std::to_string(d.c) +
                         " channels, kernels expect " + std::to_string(kernels.dim(0)));
  }
  const auto cout = kernels.dim(1), kh = kernels.dim(2), kw = kernels.dim(3);
  const auto ho = conv_transpose_output_size(d.h, kh, stride, pad);
  const auto wo = conv_transpose_output_size(d.w, kw, stride, pad);
  // The output plays the "image" role of an ordinary convolution whose
  // column grid is the input's spatial grid.
  const ConvGeometry geo{cout, ho, wo, kh, kw, stride, pad, d.h, d.w};
  const std::size_t ck = cout * kh * kw, spatial = d.h * d.w;
  const std::size_t in_plane = d.c * spatial, out_plane = cout * ho * wo;

  std::vector<float> out(d.n * out_plane, 0.0f);
  std::vector<float> cols(ck * spatial);
  ConstMapMat kmat(kernels.data().data(), d.c, ck);
  for (std::size_t n = 0; n < d.n; ++n) {
    MapMat(cols.data(), ck, spatial).noalias() =
        kmat.transpose() * ConstMapMat(input.data().data() + n * in_plane, d.c, spatial);
    col2im(cols.data(), geo, out.data() + n * out_plane);
  }
  return make_result(
      with_batch(d, cout, ho, wo), std::move(out), {input, kernels},
      [d, geo, ck, spatial, in_plane, out_plane](detail::Node& self) {
        auto& px = *self.parents[0];
        auto& pk = *self.parents[1];
        ConstMapMat kmat(pk.data.data(), d.c, ck);
        std::vector<float> cols(ck * spatial);
        for (std::size_t n = 0; n < d.n; ++n) {
          im2col(self.grad.data() + n * out_plane, geo, cols.data());
          ConstMapMat dcols(cols.data(), ck, spatial);
          if (px.requires_grad) {
            MapMat(px.grad_buffer().data() + n * in_plane, d.c, spatial).noalias() +=
                kmat * dcols;
          }
          if (pk.requires_grad) {
            MapMat(pk.grad_buffer().data(), d.c, ck).noalias() +=
                ConstMapMat(px.data.data() + n * in_plane, d.c, spatial) *
                dcols.transpose();
          }
        }
      });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) ||
      a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw DimensionError("concat_channels: incompatible shapes " +
                         shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  const auto n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const auto plane = a.dim(2) * a.dim(3);
  std::vector<float> out(n * (ca + cb) * plane);
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(x.begin() + i * ca * plane, ca * plane,
                out.begin() + i * (ca + cb) * plane);
    std::copy_n(y.begin() + i * cb * plane, cb * plane,
                out.begin() + (i * (ca + cb) + ca) * plane);
  }
  return make_result({n, ca + cb, a.dim(2), a.dim(3)}, std::move(out), {a, b},
                     [n, ca, cb, plane](detail::Node& self) {
                       auto& pa = *self.parents[0];
                       auto& pb = *self.parents[1];
                       for (std::size_t i = 0; i < n; ++i) {
                         const float* g = self.grad.data() + i * (ca + cb) * plane;
                         if (pa.requires_grad) {
                           float* dst = pa.grad_buffer().data() + i * ca * plane;
                           for (std::size_t j = 0; j < ca * plane; ++j) dst[j] += g[j];
                         }
                         if (pb.requires_grad) {
                           float* dst = pb.grad_buffer().data() + i * cb * plane;
                           for (std::size_t j = 0; j < cb * plane; ++j)
                             dst[j] += g[ca * plane + j];
                         }
                       }
                     });
}

// ------------------------------------------------------------ batch norm

namespace {

Batched norm_dims(const Tensor& x) {
  if (x.rank() == 2) return {x.dim(0), x.dim(1), 1, 1, true};
  if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2), x.dim(3), true};
  throw DimensionError("batch_norm: expected [N,C] or [N,C,H,W], got " +
                       shape_string(x.shape()));
}

void check_affine(const Tensor& gamma, const Tensor& beta, std::size_t c) {
  if (gamma.rank() != 1 || beta.rank() != 1 || gamma.dim(0) != c || beta.dim(0) != c) {
    throw DimensionError("batch_norm: gamma/beta must have " + std::to_string(c) +
                         " entries");
  }
}

}  // namespace

Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        float eps, BatchStats* stats_out) {
  const auto d = norm_dims(x);
  check_affine(gamma, beta, d.c);
  const std::size_t plane = d.h * d.w;
  const double count = static_cast<double>(d.n * plane);
  const auto in = x.data();
  const auto ga = gamma.data(), be = beta.data();

  std::vector<float> xhat(in.size()), out(in.size()), inv_std(d.c);
  std::vector<float> means(d.c), vars(d.c);
  for (std::size_t c = 0; c < d.c; ++c) {
    double s = 0.0;
    for (std::size_t n = 0; n < d.n; ++n) {
      const float* p = in.data() + (n * d.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
    }
    const double mu = s / count;
    double ss = 0.0;
    for (std::size_t n = 0; n < d.n; ++n) {
      const float* p = in.data() + (n * d.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) ss += (p[i] - mu) * (p[i] - mu);
    }
    const double var = ss / count;
    const double istd = 1.0 / std::sqrt(var + eps);
    means[c] = static_cast<float>(mu);
    vars[c] = static_cast<float>(var);
    inv_std[c] = static_cast<float>(istd);
    for (std::size_t n = 0; n < d.n; ++n) {
      const std::size_t off = (n * d.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        xhat[off + i] = static_cast<float>((in[off + i] - mu) * istd);
        out[off + i] = ga[c] * xhat[off + i] + be[c];
      }
    }
  }
  if (stats_out) *stats_out = {means, vars};

  return make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [d, plane, count, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          detail::Node& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        for (std::size_t c = 0; c < d.c; ++c) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (std::size_t n = 0; n < d.n; ++n) {
            const std::size_t off = (n * d.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sum_dy += self.grad[off + i];
              sum_dy_xhat += static_cast<double>(self.grad[off + i]) * xhat[off + i];
            }
          }
          if (pg.requires_grad) pg.grad_buffer()[c] += static_cast<float>(sum_dy_xhat);
          if (pb.requires_grad) pb.grad_buffer()[c] += static_cast<float>(sum_dy);
          if (px.requires_grad) {
            auto& g = px.grad_buffer();
            const double gam = pg.data[c];
            const double k = gam * inv_std[c] / count;
            for (std::size_t n = 0; n < d.n; ++n) {
              const std::size_t off = (n * d.c + c) * plane;
              for (std::size_t i = 0; i < plane; ++i) {
                g[off + i] += static_cast<float>(
                    k * (count * self.grad[off + i] - sum_dy - xhat[off + i] * sum_dy_xhat));
              }
            }
          }
        }
      });
}

Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const BatchStats& stats, float eps) {
  const auto d = norm_dims(x);
  check_affine(gamma, beta, d.c);
  if (stats.mean.size() != d.c || stats.var.size() != d.c) {
    throw DimensionError("batch_norm_eval: statistics do not match channel count");
  }
  const std::size_t plane = d.h * d.w;
  const auto in = x.data();
  const auto ga = gamma.data(), be = beta.data();
  std::vector<float> xhat(in.size()), out(in.size()), inv_std(d.c);
  for (std::size_t c = 0; c < d.c; ++c) {
    inv_std[c] = static_cast<float>(1.0 / std::sqrt(static_cast<double>(stats.var[c]) + eps));
    for (std::size_t n = 0; n < d.n; ++n) {
      const std::size_t off = (n * d.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        xhat[off + i] = (in[off + i] - stats.mean[c]) * inv_std[c];
        out[off + i] = ga[c] * xhat[off + i] + be[c];
      }
    }
  }
  return make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [d, plane, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        for (std::size_t c = 0; c < d.c; ++c) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (std::size_t n = 0; n < d.n; ++n) {
            const std::size_t off = (n * d.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sum_dy += self.grad[off + i];
              sum_dy_xhat += static_cast<double>(self.grad[off + i]) * xhat[off + i];
              if (px.requires_grad) {
                px.grad_buffer()[off + i] += self.grad[off + i] * pg.data[c] * inv_std[c];
              }
            }
          }
          if (pg.requires_grad) pg.grad_buffer()[c] += static_cast<float>(sum_dy_xhat);
          if (pb.requires_grad) pb.grad_buffer()[c] += static_cast<float>(sum_dy);
        }
      });
}

// ----------------------------------------------------------------- losses

Tensor l1_loss(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "l1_loss");
  const auto x = a.data(), y = b.data();
  const double n = static_cast<double>(x.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += std::fabs(static_cast<double>(x[i]) - y[i]);
  return make_result(Shape{1}, {static_cast<float>(acc / n)}, {a, b},
                     [n](detail::Node& self) {
                       auto& pa = *self.parents[0];
                       auto& pb = *self.parents[1];
                       const float d = static_cast<float>(self.grad[0] / n);
                       for (std::size_t i = 0; i < pa.data.size(); ++i) {
                         const float diff = pa.data[i] - pb.data[i];
                         const float s = diff > 0 ? d : (diff < 0 ? -d : 0.0f);
                         if (pa.requires_grad) pa.grad_buffer()[i] += s;
                         if (pb.requires_grad) pb.grad_buffer()[i] -= s;
                       }
                     });
}

Tensor neg_log_mean(const Tensor& p, float floor) {
  const auto x = p.data();
  const double n = static_cast<double>(x.size());
  double acc = 0.0;
  for (float v : x) acc -= std::log(static_cast<double>(std::max(v, floor)));
  return make_result(Shape{1}, {static_cast<float>(acc / n)}, {p},
                     [n, floor](detail::Node& self) {
                       auto& pp = *self.parents[0];
                       auto& g = pp.grad_buffer();
                       const double d = self.grad[0] / n;
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         if (pp.data[i] > floor) g[i] += static_cast<float>(-d / pp.data[i]);
                       }
                     });
}

Tensor neg_log1m_mean(const Tensor& p, float floor) {
  const auto x = p.data();
  const double n = static_cast<double>(x.size());
  double acc = 0.0;
  for (float v : x) acc -= std::log(std::max(1.0 - v, static_cast<double>(floor)));
  return make_result(Shape{1}, {static_cast<float>(acc / n)}, {p},
                     [n, floor](detail::Node& self) {
                       auto& pp = *self.parents[0];
                       auto& g = pp.grad_buffer();
                       const double d = self.grad[0] / n;
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         const double q = 1.0 - pp.data[i];
                         if (q > floor) g[i] += static_cast<float>(d / q);
                       }
                     });
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  require_same_shape(logits, targets, "bce_with_logits");
  const auto z = logits.data(), t = targets.data();
  const double n = static_cast<double>(z.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double zi = z[i];
    acc += std::max(zi, 0.0) - zi * t[i] + std::log1p(std::exp(-std::fabs(zi)));
  }
  return make_result(Shape{1}, {static_cast<float>(acc / n)}, {logits, targets},
                     [n](detail::Node& self) {
                       auto& pz = *self.parents[0];
                       auto& pt = *self.parents[1];
                       const double d = self.grad[0] / n;
                       for (std::size_t i = 0; i < pz.data.size(); ++i) {
                         if (pz.requires_grad) {
                           pz.grad_buffer()[i] += static_cast<float>(
                               d * (stable_sigmoid(pz.data[i]) - pt.data[i]));
                         }
                         if (pt.requires_grad) {
                           pt.grad_buffer()[i] -= static_cast<float>(d * pz.data[i]);
                         }
                       }
                     });
}

}  // namespace ssgan
