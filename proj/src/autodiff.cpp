#include "deskwarp/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace dw::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.defined() || !b.defined()) throw std::domain_error(std::string(op) + ": undefined tensor");
  if (a.shape() != b.shape())
    throw std::domain_error(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                            shape_string(b.shape()));
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (!a.defined() || a.shape().size() != rank)
    throw std::domain_error(std::string(op) + ": expected rank " + std::to_string(rank));
}

bool any_grad(std::initializer_list<const Tensor*> ts) {
  for (const Tensor* t : ts)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

Tensor make_output(const Shape& shape, bool requires_grad) { return Tensor::zeros(shape, requires_grad); }

}  // namespace

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d < 0) throw std::domain_error("negative dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_string(const Shape& s) {
  std::ostringstream o;
  o << "[";
  for (std::size_t i = 0; i < s.size(); ++i) o << (i ? ", " : "") << s[i];
  o << "]";
  return o.str();
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  Tensor t;
  t.impl_ = std::make_shared<TensorData>();
  t.impl_->shape = shape;
  t.impl_->value.assign(numel(shape), 0.0);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != numel(shape))
    throw std::domain_error("Tensor::from: " + std::to_string(values.size()) + " values for shape " +
                            shape_string(shape));
  Tensor t;
  t.impl_ = std::make_shared<TensorData>();
  t.impl_->shape = shape;
  t.impl_->value = std::move(values);
  t.impl_->requires_grad = requires_grad;
  return t;
}

double Tensor::item() const {
  if (size() != 1) throw std::domain_error("item: tensor is not a scalar");
  return impl_->value[0];
}

std::span<double> Tensor::grad() const {
  if (impl_->grad.size() != impl_->value.size()) impl_->grad.assign(impl_->value.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.assign(impl_->value.size(), 0.0); }

Tensor Tensor::clone(bool requires_grad) const { return from(shape(), impl_->value, requires_grad); }

void Tape::record(const Tensor& out, std::vector<Tensor> inputs, std::function<void()> backward) {
  if (consumed_) throw std::logic_error("tape: recording after backward without reset");
  nodes_.push_back({out, std::move(inputs), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw std::logic_error("tape: backward called twice without reset");
  if (!loss.defined() || loss.size() != 1) throw std::domain_error("tape: backward needs a scalar loss");
  consumed_ = true;
  visits_ = 0;
  Tensor l = loss;
  l.grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output.requires_grad()) continue;
    ++visits_;
    it->backward();
  }
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  Tensor out = make_output(a.shape(), any_grad({&a, &b}));
  auto o = out.values();
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
  tape.record(out, {a, b}, [out, a, b]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
  return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  Tensor out = make_output(a.shape(), any_grad({&a, &b}));
  auto o = out.values();
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] - bv[i];
  tape.record(out, {a, b}, [out, a, b]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  Tensor out = make_output(a.shape(), any_grad({&a, &b}));
  auto o = out.values();
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * bv[i];
  tape.record(out, {a, b}, [out, a, b]() mutable {
    auto g = out.grad();
    auto av = a.values(), bv = b.values();
    if (a.requires_grad()) {
      auto ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, double s) {
  Tensor out = make_output(a.shape(), a.requires_grad());
  auto o = out.values();
  auto av = a.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = s * av[i];
  tape.record(out, {a}, [out, a, s]() mutable {
    auto g = out.grad();
    auto ga = a.grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
  return out;
}

Tensor silu(Tape& tape, const Tensor& a) {
  Tensor out = make_output(a.shape(), a.requires_grad());
  auto o = out.values();
  auto av = a.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] / (1.0 + std::exp(-av[i]));
  tape.record(out, {a}, [out, a]() mutable {
    auto g = out.grad();
    auto ga = a.grad();
    auto av = a.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-av[i]));
      ga[i] += g[i] * s * (1.0 + av[i] * (1.0 - s));
    }
  });
  return out;
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw std::domain_error("matmul: inner dimensions differ");
  Tensor out = make_output({m, n}, any_grad({&a, &b}));
  MapMat(out.values().data(), m, n).noalias() =
      CMapMat(a.values().data(), m, k) * CMapMat(b.values().data(), k, n);
  tape.record(out, {a, b}, [out, a, b, m, k, n]() mutable {
    CMapMat g(out.grad().data(), m, n);
    if (a.requires_grad())
      MapMat(a.grad().data(), m, k).noalias() += g * CMapMat(b.values().data(), k, n).transpose();
    if (b.requires_grad())
      MapMat(b.grad().data(), k, n).noalias() += CMapMat(a.values().data(), m, k).transpose() * g;
  });
  return out;
}

namespace {

// col[(c * k + ky) * k + kx, y * W + x] = x[c, y + ky - r, x + kx - r] (zero outside).
void im2col(const double* x, int c_in, int h, int w, int k, double* col) {
  const int r = k / 2;
  const int plane = h * w;
  for (int c = 0; c < c_in; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* row = col + static_cast<std::size_t>((c * k + ky) * k + kx) * plane;
        const double* src = x + static_cast<std::size_t>(c) * plane;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - r;
          for (int xx = 0; xx < w; ++xx) {
            const int sx = xx + kx - r;
            row[y * w + xx] = (sy >= 0 && sy < h && sx >= 0 && sx < w) ? src[sy * w + sx] : 0.0;
          }
        }
      }
}

void col2im_add(const double* col, int c_in, int h, int w, int k, double* dx) {
  const int r = k / 2;
  const int plane = h * w;
  for (int c = 0; c < c_in; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double* row = col + static_cast<std::size_t>((c * k + ky) * k + kx) * plane;
        double* dst = dx + static_cast<std::size_t>(c) * plane;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - r;
          if (sy < 0 || sy >= h) continue;
          for (int xx = 0; xx < w; ++xx) {
            const int sx = xx + kx - r;
            if (sx >= 0 && sx < w) dst[sy * w + sx] += row[y * w + xx];
          }
        }
      }
}

}  // namespace

Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank(x, 4, "conv2d");
  require_rank(w, 4, "conv2d");
  const int n = x.dim(0), c_in = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int c_out = w.dim(0), k = w.dim(2);
  if (w.dim(1) != c_in) throw std::domain_error("conv2d: weight input channels differ from input");
  if (w.dim(3) != k || k % 2 == 0) throw std::domain_error("conv2d: kernel must be square with odd size");
  if (bias.defined() && (bias.shape().size() != 1 || bias.dim(0) != c_out))
    throw std::domain_error("conv2d: bias must have one entry per output channel");
  const int plane = h * wd;
  const int kk = c_in * k * k;
  Tensor out = make_output({n, c_out, h, wd}, any_grad({&x, &w, &bias}));
  std::vector<double> col(k == 1 ? 0 : static_cast<std::size_t>(kk) * plane);
  CMapMat wm(w.values().data(), c_out, kk);
  for (int i = 0; i < n; ++i) {
    const double* xi = x.values().data() + static_cast<std::size_t>(i) * c_in * plane;
    const double* colp = xi;
    if (k != 1) {
      im2col(xi, c_in, h, wd, k, col.data());
      colp = col.data();
    }
    MapMat oi(out.values().data() + static_cast<std::size_t>(i) * c_out * plane, c_out, plane);
    oi.noalias() = wm * CMapMat(colp, kk, plane);
    if (bias.defined())
      for (int o = 0; o < c_out; ++o) oi.row(o).array() += bias.values()[o];
  }
  tape.record(out, {x, w, bias}, [out, x, w, bias, n, c_in, h, wd, c_out, k, plane, kk]() mutable {
    std::vector<double> col(k == 1 ? 0 : static_cast<std::size_t>(kk) * plane);
    std::vector<double> dcol(static_cast<std::size_t>(kk) * plane);
    CMapMat wm(w.values().data(), c_out, kk);
    for (int i = 0; i < n; ++i) {
      CMapMat gi(out.grad().data() + static_cast<std::size_t>(i) * c_out * plane, c_out, plane);
      if (bias.defined() && bias.requires_grad()) {
        auto gb = bias.grad();
        for (int o = 0; o < c_out; ++o) gb[o] += gi.row(o).sum();
      }
      const double* xi = x.values().data() + static_cast<std::size_t>(i) * c_in * plane;
      if (w.requires_grad()) {
        const double* colp = xi;
        if (k != 1) {
          im2col(xi, c_in, h, wd, k, col.data());
          colp = col.data();
        }
        MapMat(w.grad().data(), c_out, kk).noalias() += gi * CMapMat(colp, kk, plane).transpose();
      }
      if (x.requires_grad()) {
        double* dxi = x.grad().data() + static_cast<std::size_t>(i) * c_in * plane;
        if (k == 1) {
          MapMat(dxi, kk, plane).noalias() += wm.transpose() * gi;
        } else {
          MapMat(dcol.data(), kk, plane).noalias() = wm.transpose() * gi;
          col2im_add(dcol.data(), c_in, h, wd, k, dxi);
        }
      }
    }
  });
  return out;
}

Tensor concat(Tape& tape, const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::domain_error("concat: no inputs");
  for (const auto& t : xs) require_rank(t, 4, "concat");
  const int n = xs[0].dim(0), h = xs[0].dim(2), w = xs[0].dim(3);
  int c_total = 0;
  bool grad = false;
  for (const auto& t : xs) {
    if (t.dim(0) != n || t.dim(2) != h || t.dim(3) != w)
      throw std::domain_error("concat: inputs differ outside the channel axis");
    c_total += t.dim(1);
    grad = grad || t.requires_grad();
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor out = make_output({n, c_total, h, w}, grad);
  auto o = out.values();
  for (int i = 0; i < n; ++i) {
    std::size_t c_off = 0;
    for (const auto& t : xs) {
      const std::size_t len = static_cast<std::size_t>(t.dim(1)) * plane;
      std::copy_n(t.values().begin() + i * len, len, o.begin() + (i * c_total + c_off) * plane);
      c_off += t.dim(1);
    }
  }
  tape.record(out, xs, [out, xs, n, c_total, plane]() mutable {
    auto g = out.grad();
    for (int i = 0; i < n; ++i) {
      std::size_t c_off = 0;
      for (auto& t : xs) {
        const std::size_t len = static_cast<std::size_t>(t.dim(1)) * plane;
        if (t.requires_grad()) {
          auto gt = t.grad();
          const std::size_t src = (i * c_total + c_off) * plane;
          for (std::size_t j = 0; j < len; ++j) gt[i * len + j] += g[src + j];
        }
        c_off += t.dim(1);
      }
    }
  });
  return out;
}

Tensor expand_channels(Tape& tape, const Tensor& x, int channels) {
  require_rank(x, 4, "expand_channels");
  if (x.dim(1) != 1) throw std::domain_error("expand_channels: input must have one channel");
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor out = make_output({n, channels, h, w}, x.requires_grad());
  auto o = out.values();
  auto xv = x.values();
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < channels; ++c)
      std::copy_n(xv.begin() + i * plane, plane, o.begin() + (static_cast<std::size_t>(i) * channels + c) * plane);
  tape.record(out, {x}, [out, x, n, channels, plane]() mutable {
    auto g = out.grad();
    auto gx = x.grad();
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < channels; ++c)
        for (std::size_t p = 0; p < plane; ++p)
          gx[i * plane + p] += g[(static_cast<std::size_t>(i) * channels + c) * plane + p];
  });
  return out;
}

Tensor reshape(Tape& tape, const Tensor& x, const Shape& shape) {
  if (numel(shape) != x.size())
    throw std::domain_error("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  Tensor out = Tensor::from(shape, std::vector<double>(x.values().begin(), x.values().end()), x.requires_grad());
  tape.record(out, {x}, [out, x]() mutable {
    auto g = out.grad();
    auto gx = x.grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
  return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor out = Tensor::scalar(s, x.requires_grad());
  tape.record(out, {x}, [out, x]() mutable {
    const double g = out.grad()[0];
    for (double& v : x.grad()) v += g;
  });
  return out;
}

Tensor mean(Tape& tape, const Tensor& x) {
  if (x.size() == 0) throw std::domain_error("mean: empty tensor");
  return scale(tape, sum(tape, x), 1.0 / static_cast<double>(x.size()));
}

Tensor frame_attention(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v, int frames) {
  require_same(q, k, "frame_attention");
  require_same(q, v, "frame_attention");
  require_rank(q, 4, "frame_attention");
  const int n = q.dim(0), c = q.dim(1);
  if (frames < 1 || n % frames != 0) throw std::domain_error("frame_attention: batch is not a multiple of frames");
  const int groups = n / frames;
  const int plane = q.dim(2) * q.dim(3);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(c));
  const int T = frames;
  auto idx = [=](int b, int t, int ch, int p) {
    return ((static_cast<std::size_t>(b) * T + t) * c + ch) * plane + p;
  };
  // attention weights, [groups][plane][T][T]
  auto weights = std::make_shared<std::vector<double>>(static_cast<std::size_t>(groups) * plane * T * T);
  Tensor out = make_output(q.shape(), any_grad({&q, &k, &v}));
  auto qv = q.values(), kv = k.values(), vv = v.values();
  auto o = out.values();
  std::vector<double> s(static_cast<std::size_t>(T) * T);
  for (int b = 0; b < groups; ++b)
    for (int p = 0; p < plane; ++p) {
      double* a = weights->data() + (static_cast<std::size_t>(b) * plane + p) * T * T;
      for (int t = 0; t < T; ++t) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int u = 0; u < T; ++u) {
          double dot = 0.0;
          for (int ch = 0; ch < c; ++ch) dot += qv[idx(b, t, ch, p)] * kv[idx(b, u, ch, p)];
          s[t * T + u] = dot * inv_sqrt;
          mx = std::max(mx, s[t * T + u]);
        }
        double z = 0.0;
        for (int u = 0; u < T; ++u) {
          a[t * T + u] = std::exp(s[t * T + u] - mx);
          z += a[t * T + u];
        }
        for (int u = 0; u < T; ++u) a[t * T + u] /= z;
        for (int ch = 0; ch < c; ++ch) {
          double acc = 0.0;
          for (int u = 0; u < T; ++u) acc += a[t * T + u] * vv[idx(b, u, ch, p)];
          o[idx(b, t, ch, p)] = acc;
        }
      }
    }
  tape.record(out, {q, k, v}, [out, q, k, v, weights, groups, plane, T, c, inv_sqrt, idx]() mutable {
    auto g = out.grad();
    auto qv = q.values(), kv = k.values(), vv = v.values();
    std::span<double> gq, gk, gv;
    if (q.requires_grad()) gq = q.grad();
    if (k.requires_grad()) gk = k.grad();
    if (v.requires_grad()) gv = v.grad();
    std::vector<double> da(static_cast<std::size_t>(T) * T);
    for (int b = 0; b < groups; ++b)
      for (int p = 0; p < plane; ++p) {
        const double* a = weights->data() + (static_cast<std::size_t>(b) * plane + p) * T * T;
        for (int t = 0; t < T; ++t)
          for (int u = 0; u < T; ++u) {
            double acc = 0.0;
            for (int ch = 0; ch < c; ++ch) acc += g[idx(b, t, ch, p)] * vv[idx(b, u, ch, p)];
            da[t * T + u] = acc;
          }
        if (!gv.empty())
          for (int u = 0; u < T; ++u)
            for (int ch = 0; ch < c; ++ch) {
              double acc = 0.0;
              for (int t = 0; t < T; ++t) acc += a[t * T + u] * g[idx(b, t, ch, p)];
              gv[idx(b, u, ch, p)] += acc;
            }
        for (int t = 0; t < T; ++t) {
          double dot = 0.0;
          for (int u = 0; u < T; ++u) dot += da[t * T + u] * a[t * T + u];
          for (int u = 0; u < T; ++u) {
            const double ds = a[t * T + u] * (da[t * T + u] - dot) * inv_sqrt;
            if (ds == 0.0) continue;
            for (int ch = 0; ch < c; ++ch) {
              if (!gq.empty()) gq[idx(b, t, ch, p)] += ds * kv[idx(b, u, ch, p)];
              if (!gk.empty()) gk[idx(b, u, ch, p)] += ds * qv[idx(b, t, ch, p)];
            }
          }
        }
      }
  });
  return out;
}

Tensor frame_mix(Tape& tape, const Tensor& x, const Tensor& w, int frames) {
  require_rank(x, 4, "frame_mix");
  require_rank(w, 2, "frame_mix");
  const int n = x.dim(0);
  if (frames < 1 || n % frames != 0) throw std::domain_error("frame_mix: batch is not a multiple of frames");
  if (w.dim(0) != frames || w.dim(1) != frames) throw std::domain_error("frame_mix: weight must be frames x frames");
  const int groups = n / frames;
  const std::size_t tok = x.size() / n;
  Tensor out = make_output(x.shape(), any_grad({&x, &w}));
  for (int b = 0; b < groups; ++b) {
    CMapMat xb(x.values().data() + b * frames * tok, frames, tok);
    MapMat(out.values().data() + b * frames * tok, frames, tok).noalias() =
        CMapMat(w.values().data(), frames, frames) * xb;
  }
  tape.record(out, {x, w}, [out, x, w, groups, frames, tok]() mutable {
    CMapMat wm(w.values().data(), frames, frames);
    for (int b = 0; b < groups; ++b) {
      CMapMat gb(out.grad().data() + b * frames * tok, frames, tok);
      if (w.requires_grad())
        MapMat(w.grad().data(), frames, frames).noalias() +=
            gb * CMapMat(x.values().data() + b * frames * tok, frames, tok).transpose();
      if (x.requires_grad()) MapMat(x.grad().data() + b * frames * tok, frames, tok).noalias() += wm.transpose() * gb;
    }
  });
  return out;
}

std::size_t Adam::add_slot(std::size_t size) {
  m_.emplace_back(size, 0.0);
  v_.emplace_back(size, 0.0);
  return m_.size() - 1;
}

void Adam::update(std::size_t slot, std::span<double> params, std::span<const double> grads) {
  auto& m = m_.at(slot);
  auto& v = v_.at(slot);
  if (params.size() != m.size() || grads.size() != m.size()) throw std::domain_error("adam: buffer size changed");
  if (t_ < 1) throw std::logic_error("adam: begin_step must precede update");
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * grads[i];
    v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * grads[i] * grads[i];
    params[i] -= opts_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + opts_.eps);
  }
}

}  // namespace dw::ad
