#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "lvnc/errors.hpp"
#include "lvnc/tensor.hpp"

namespace lvnc::tensor {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using ConstMapRM = Eigen::Map<const MatRM>;

void require_rank4(const Tensor& t, const char* what) {
  if (t.shape().size() != 4) {
    throw DimensionError(std::string(what) + " expects an NCHW tensor, got " + shape_str(t.shape()));
  }
}

struct ConvGeometry {
  std::size_t n, cin, h, w, cout, kh, kw, ho, wo;
  int pad;
  std::size_t k_rows() const { return cin * kh * kw; }
  std::size_t positions() const { return ho * wo; }
};

// Unrolls one image into a (cin*kh*kw) x (ho*wo) matrix.
void im2col(const double* img, const ConvGeometry& g, double* col) {
  const auto ho = static_cast<long>(g.ho), wo = static_cast<long>(g.wo);
  const auto h = static_cast<long>(g.h), w = static_cast<long>(g.w);
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    const double* plane = img + ci * g.h * g.w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        double* row = col + ((ci * g.kh + ky) * g.kw + kx) * g.positions();
        const long dy = static_cast<long>(ky) - g.pad;
        const long dx = static_cast<long>(kx) - g.pad;
        const long x0 = std::max(0L, -dx), x1 = std::min(wo, w - dx);
        for (long oy = 0; oy < ho; ++oy) {
          double* out = row + oy * wo;
          const long iy = oy + dy;
          if (iy < 0 || iy >= h || x0 >= x1) {
            std::fill(out, out + wo, 0.0);
            continue;
          }
          std::fill(out, out + x0, 0.0);
          std::copy(plane + iy * w + x0 + dx, plane + iy * w + x1 + dx, out + x0);
          std::fill(out + x1, out + wo, 0.0);
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column gradients back onto the image.
void col2im_add(const double* col, const ConvGeometry& g, double* img) {
  const auto ho = static_cast<long>(g.ho), wo = static_cast<long>(g.wo);
  const auto h = static_cast<long>(g.h), w = static_cast<long>(g.w);
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    double* plane = img + ci * g.h * g.w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const double* row = col + ((ci * g.kh + ky) * g.kw + kx) * g.positions();
        const long dy = static_cast<long>(ky) - g.pad;
        const long dx = static_cast<long>(kx) - g.pad;
        const long x0 = std::max(0L, -dx), x1 = std::min(wo, w - dx);
        for (long oy = 0; oy < ho; ++oy) {
          const long iy = oy + dy;
          if (iy < 0 || iy >= h) continue;
          const double* src = row + oy * wo;
          double* dst = plane + iy * w + dx;
          for (long ox = x0; ox < x1; ++ox) dst[ox] += src[ox];
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int padding) {
  require_rank4(input, "conv2d input");
  if (kernel.shape().size() != 4) throw DimensionError("conv2d kernel must be [Cout,Cin,kh,kw]");
  ConvGeometry g{};
  g.n = input.dim(0);
  g.cin = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.cout = kernel.dim(0);
  g.kh = kernel.dim(2);
  g.kw = kernel.dim(3);
  g.pad = padding;
  if (kernel.dim(1) != g.cin) {
    throw DimensionError("conv2d channel mismatch: input " + shape_str(input.shape()) +
                         ", kernel " + shape_str(kernel.shape()));
  }
  if (bias.numel() != g.cout) throw DimensionError("conv2d bias length must equal Cout");
  if (g.kh % 2 == 0 || g.kw % 2 == 0) throw ContractError("conv2d kernel extents must be odd");
  if (padding < 0) throw ContractError("conv2d padding must be non-negative");
  const auto p2 = static_cast<std::size_t>(2 * padding);
  if (g.h + p2 < g.kh || g.w + p2 < g.kw) throw DimensionError("conv2d kernel larger than padded input");
  g.ho = g.h + p2 - g.kh + 1;
  g.wo = g.w + p2 - g.kw + 1;

  const bool pointwise = g.kh == 1 && g.kw == 1 && padding == 0;
  const std::size_t K = g.k_rows(), P = g.positions();
  std::vector<double> out(g.n * g.cout * P);
  std::vector<double> col(pointwise ? 0 : K * P);
  ConstMapRM wm(kernel.data().data(), static_cast<long>(g.cout), static_cast<long>(K));
  Eigen::Map<const Eigen::VectorXd> bv(bias.data().data(), static_cast<long>(g.cout));

  for (std::size_t n = 0; n < g.n; ++n) {
    const double* img = input.data().data() + n * g.cin * g.h * g.w;
    const double* colp = img;
    if (!pointwise) {
      im2col(img, g, col.data());
      colp = col.data();
    }
    ConstMapRM cm(colp, static_cast<long>(K), static_cast<long>(P));
    MapRM om(out.data() + n * g.cout * P, static_cast<long>(g.cout), static_cast<long>(P));
    om.noalias() = wm * cm;
    om.colwise() += bv;
  }

  Tensor result({g.n, g.cout, g.ho, g.wo}, std::move(out));
  tape.record(OpKind::Conv2d, {input, kernel, bias}, result,
              [input, kernel, bias, g, pointwise](const Tensor& output) mutable {
                const std::size_t K = g.k_rows(), P = g.positions();
                std::vector<double> col(pointwise ? 0 : K * P);
                std::vector<double> dcol(K * P);
                ConstMapRM wm(kernel.data().data(), static_cast<long>(g.cout), static_cast<long>(K));
                for (std::size_t n = 0; n < g.n; ++n) {
                  ConstMapRM dout(output.grad().data() + n * g.cout * P, static_cast<long>(g.cout),
                                  static_cast<long>(P));
                  const double* img = input.data().data() + n * g.cin * g.h * g.w;
                  if (kernel.requires_grad()) {
                    const double* colp = img;
                    if (!pointwise) {
                      im2col(img, g, col.data());
                      colp = col.data();
                    }
                    ConstMapRM cm(colp, static_cast<long>(K), static_cast<long>(P));
                    MapRM dw(kernel.grad().data(), static_cast<long>(g.cout), static_cast<long>(K));
                    dw.noalias() += dout * cm.transpose();
                  }
                  if (bias.requires_grad()) {
                    // Plain loop: Eigen's vectorised reduction peels by alignment, which
                    // would make the summation order depend on where buffers landed.
                    auto db = bias.grad();
                    const double* go = output.grad().data() + n * g.cout * P;
                    for (std::size_t o = 0; o < g.cout; ++o) {
                      double acc = 0.0;
                      for (std::size_t j = 0; j < P; ++j) acc += go[o * P + j];
                      db[o] += acc;
                    }
                  }
                  if (input.requires_grad()) {
                    double* dimg = input.grad().data() + n * g.cin * g.h * g.w;
                    if (pointwise) {
                      MapRM di(dimg, static_cast<long>(K), static_cast<long>(P));
                      di.noalias() += wm.transpose() * dout;
                    } else {
                      MapRM dc(dcol.data(), static_cast<long>(K), static_cast<long>(P));
                      dc.noalias() = wm.transpose() * dout;
                      col2im_add(dcol.data(), g, dimg);
                    }
                  }
                }
              });
  return result;
}

Tensor relu(Tape& tape, const Tensor& input) {
  std::vector<double> out(input.numel());
  auto in = input.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
  Tensor result(input.shape(), std::move(out));
  tape.record(OpKind::Relu, {input}, result, [input](const Tensor& output) mutable {
    if (!input.requires_grad()) return;
    auto x = input.data();
    auto gi = input.grad();
    auto go = output.grad();
    for (std::size_t i = 0; i < gi.size(); ++i) {
      if (x[i] > 0.0) gi[i] += go[i];
    }
  });
  return result;
}

Tensor maxpool2(Tape& tape, const Tensor& input) {
  require_rank4(input, "maxpool2");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw DimensionError("maxpool2 needs even spatial extents, got " + shape_str(input.shape()));
  }
  const std::size_t ho = h / 2, wo = w / 2;
  std::vector<double> out(n * c * ho * wo);
  std::vector<std::size_t> argmax(out.size());
  auto in = input.data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const std::size_t cand[4] = {base + 2 * oy * w + 2 * ox, base + 2 * oy * w + 2 * ox + 1,
                                     base + (2 * oy + 1) * w + 2 * ox,
                                     base + (2 * oy + 1) * w + 2 * ox + 1};
        std::size_t best = cand[0];
        for (int k = 1; k < 4; ++k) {
          if (in[cand[k]] > in[best]) best = cand[k];
        }
        const std::size_t o = (plane * ho + oy) * wo + ox;
        out[o] = in[best];
        argmax[o] = best;
      }
    }
  }
  Tensor result({n, c, ho, wo}, std::move(out));
  tape.record(OpKind::MaxPool2, {input}, result,
              [input, argmax = std::move(argmax)](const Tensor& output) mutable {
                auto gi = input.grad();
                auto go = output.grad();
                for (std::size_t o = 0; o < go.size(); ++o) gi[argmax[o]] += go[o];
              });
  return result;
}

Tensor upsample2(Tape& tape, const Tensor& input) {
  require_rank4(input, "upsample2");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t ho = 2 * h, wo = 2 * w;
  std::vector<double> out(n * c * ho * wo);
  auto in = input.data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      const double* src = in.data() + plane * h * w + (oy / 2) * w;
      double* dst = out.data() + plane * ho * wo + oy * wo;
      for (std::size_t ox = 0; ox < wo; ++ox) dst[ox] = src[ox / 2];
    }
  }
  Tensor result({n, c, ho, wo}, std::move(out));
  tape.record(OpKind::Upsample2, {input}, result, [input, n, c, h, w](const Tensor& output) mutable {
    auto gi = input.grad();
    auto go = output.grad();
    const std::size_t ho = 2 * h, wo = 2 * w;
    for (std::size_t plane = 0; plane < n * c; ++plane) {
      for (std::size_t oy = 0; oy < ho; ++oy) {
        const double* src = go.data() + plane * ho * wo + oy * wo;
        double* dst = gi.data() + plane * h * w + (oy / 2) * w;
        for (std::size_t ox = 0; ox < wo; ++ox) dst[ox / 2] += src[ox];
      }
    }
  });
  return result;
}

Tensor concat_channels(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank4(a, "concat_channels");
  require_rank4(b, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw DimensionError("concat_channels mismatch: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  std::vector<double> out(n * (ca + cb) * hw);
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    double* dst = out.data() + i * (ca + cb) * hw;
    std::copy_n(ad.data() + i * ca * hw, ca * hw, dst);
    std::copy_n(bd.data() + i * cb * hw, cb * hw, dst + ca * hw);
  }
  Tensor result({n, ca + cb, a.dim(2), a.dim(3)}, std::move(out));
  tape.record(OpKind::ConcatChannels, {a, b}, result,
              [a, b, n, ca, cb, hw](const Tensor& output) mutable {
                auto go = output.grad();
                for (std::size_t i = 0; i < n; ++i) {
                  const double* src = go.data() + i * (ca + cb) * hw;
                  if (a.requires_grad()) {
                    double* da = a.grad().data() + i * ca * hw;
                    for (std::size_t k = 0; k < ca * hw; ++k) da[k] += src[k];
                  }
                  if (b.requires_grad()) {
                    double* db = b.grad().data() + i * cb * hw;
                    for (std::size_t k = 0; k < cb * hw; ++k) db[k] += src[ca * hw + k];
                  }
                }
              });
  return result;
}

Tensor softmax_channels(Tape& tape, const Tensor& input) {
  require_rank4(input, "softmax_channels");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  if (c < 2) throw ContractError("softmax_channels needs at least two channels");
  std::vector<double> out(input.numel());
  auto in = input.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = in.data() + i * c * hw;
    double* y = out.data() + i * c * hw;
    for (std::size_t p = 0; p < hw; ++p) {
      double mx = x[p];
      for (std::size_t k = 1; k < c; ++k) mx = std::max(mx, x[k * hw + p]);
      double z = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        y[k * hw + p] = std::exp(x[k * hw + p] - mx);
        z += y[k * hw + p];
      }
      for (std::size_t k = 0; k < c; ++k) y[k * hw + p] /= z;
    }
  }
  Tensor result(input.shape(), std::move(out));
  tape.record(OpKind::SoftmaxChannels, {input}, result, [input, n, c, hw](const Tensor& output) mutable {
    auto y = output.data();
    auto go = output.grad();
    auto gi = input.grad();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = i * c * hw;
      for (std::size_t p = 0; p < hw; ++p) {
        double dot = 0.0;
        for (std::size_t k = 0; k < c; ++k) dot += go[base + k * hw + p] * y[base + k * hw + p];
        for (std::size_t k = 0; k < c; ++k) {
          const std::size_t idx = base + k * hw + p;
          gi[idx] += y[idx] * (go[idx] - dot);
        }
      }
    }
  });
  return result;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  Tensor result(a.shape(), std::move(out));
  tape.record(OpKind::Add, {a, b}, result, [a, b](const Tensor& output) mutable {
    auto go = output.grad();
    if (a.requires_grad()) {
      auto ga = a.grad();
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad();
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
    }
  });
  return result;
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * a.data()[i];
  Tensor result(a.shape(), std::move(out));
  tape.record(OpKind::Scale, {a}, result, [a, factor](const Tensor& output) mutable {
    auto go = output.grad();
    auto ga = a.grad();
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += factor * go[i];
  });
  return result;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  Tensor result(a.shape(), std::move(out));
  tape.record(OpKind::Mul, {a, b}, result, [a, b](const Tensor& output) mutable {
    auto go = output.grad();
    if (a.requires_grad()) {
      auto ga = a.grad();
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * b.data()[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad();
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * a.data()[i];
    }
  });
  return result;
}

Tensor sum(Tape& tape, const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  Tensor result = Tensor::scalar(s);
  tape.record(OpKind::Sum, {a}, result, [a](const Tensor& output) mutable {
    const double g = output.grad()[0];
    for (double& v : a.grad()) v += g;
  });
  return result;
}

Tensor mean(Tape& tape, const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  const double inv = 1.0 / static_cast<double>(a.numel());
  Tensor result = Tensor::scalar(s * inv);
  tape.record(OpKind::Mean, {a}, result, [a, inv](const Tensor& output) mutable {
    const double g = output.grad()[0] * inv;
    for (double& v : a.grad()) v += g;
  });
  return result;
}

Tensor slice_channels(const Tensor& input, std::size_t begin, std::size_t end) {
  require_rank4(input, "slice_channels");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  if (begin > end || end > c) throw DimensionError("slice_channels range out of bounds");
  std::vector<double> out(n * (end - begin) * hw);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(input.data().data() + (i * c + begin) * hw, (end - begin) * hw,
                out.data() + i * (end - begin) * hw);
  }
  return Tensor({n, end - begin, input.dim(2), input.dim(3)}, std::move(out));
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, Tensor& x, double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_grad step must be positive");
  std::vector<double> g(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double orig = xd[i];
    xd[i] = orig + h;
    const double fp = f(x);
    xd[i] = orig - h;
    const double fm = f(x);
    xd[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return Tensor(x.shape(), std::move(g));
}

}  // namespace lvnc::tensor
