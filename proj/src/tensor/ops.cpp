#include "mer/tensor/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace mer {

namespace {

thread_local std::uint64_t g_macs = 0;

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  require(s.size() == rank, std::string(op) + ": expected rank " + std::to_string(rank) +
                                " input, got " + to_string(s));
}

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
std::size_t sz(Index i) {
  return static_cast<std::size_t>(i);
}

struct ConvGeom {
  Index c_in, h, w, kh, kw, stride, pad, h_out, w_out;
  Index k() const { return c_in * kh * kw; }
  Index p() const { return h_out * w_out; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
  const Index p = g.p();
  for (Index c = 0; c < g.c_in; ++c) {
    for (Index i = 0; i < g.kh; ++i) {
      for (Index j = 0; j < g.kw; ++j) {
        T* row = cols + ((c * g.kh + i) * g.kw + j) * p;
        for (Index oh = 0; oh < g.h_out; ++oh) {
          const Index ih = oh * g.stride - g.pad + i;
          T* dst = row + oh * g.w_out;
          if (ih < 0 || ih >= g.h) {
            std::fill(dst, dst + g.w_out, T(0));
            continue;
          }
          const T* src = x + (c * g.h + ih) * g.w;
          for (Index ow = 0; ow < g.w_out; ++ow) {
            const Index iw = ow * g.stride - g.pad + j;
            dst[ow] = (iw >= 0 && iw < g.w) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeom& g, T* x) {
  const Index p = g.p();
  for (Index c = 0; c < g.c_in; ++c) {
    for (Index i = 0; i < g.kh; ++i) {
      for (Index j = 0; j < g.kw; ++j) {
        const T* row = cols + ((c * g.kh + i) * g.kw + j) * p;
        for (Index oh = 0; oh < g.h_out; ++oh) {
          const Index ih = oh * g.stride - g.pad + i;
          if (ih < 0 || ih >= g.h) continue;
          T* dst = x + (c * g.h + ih) * g.w;
          const T* src = row + oh * g.w_out;
          for (Index ow = 0; ow < g.w_out; ++ow) {
            const Index iw = ow * g.stride - g.pad + j;
            if (iw >= 0 && iw < g.w) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

// Strides of `s` viewed in the broadcast output shape (0 on expanded axes).
std::vector<Index> broadcast_strides(const Shape& s, const Shape& out) {
  std::vector<Index> strides(s.size(), 0);
  Index acc = 1;
  for (std::size_t i = s.size(); i-- > 0;) {
    strides[i] = (s[i] == out[i]) ? acc : 0;
    acc *= s[i];
  }
  return strides;
}

// Visits every output index with the matching flat offsets into a and b.
template <typename F>
void for_each_broadcast(const Shape& out, const std::vector<Index>& sa, const std::vector<Index>& sb,
                        F&& f) {
  const std::size_t rank = out.size();
  std::vector<Index> idx(rank, 0);
  Index ia = 0, ib = 0;
  const Index total = numel_of(out);
  for (Index o = 0; o < total; ++o) {
    f(o, ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < out[d]) {
        ia += sa[d];
        ib += sb[d];
        break;
      }
      ia -= sa[d] * (out[d] - 1);
      ib -= sb[d] * (out[d] - 1);
      idx[d] = 0;
    }
  }
}

struct PoolBin {
  Index begin, end;
};

PoolBin adaptive_bin(Index i, Index in, Index out) {
  return {(i * in) / out, ((i + 1) * in + out - 1) / out};
}

}  // namespace

MacCounter::MacCounter() : start_(g_macs) {}
std::uint64_t MacCounter::count() const { return g_macs - start_; }

Index window_out(Index in, Index k, Index stride, Index pad) {
  return (in + 2 * pad - k) / stride + 1;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  require(a.size() == b.size(), "cannot broadcast " + to_string(a) + " with " + to_string(b));
  Shape out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    require(a[i] == b[i] || a[i] == 1 || b[i] == 1,
            "cannot broadcast " + to_string(a) + " with " + to_string(b));
    out[i] = std::max(a[i], b[i]);
  }
  return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, Conv2dOptions opt) {
  require_rank(x.shape(), 4, "conv2d input");
  require_rank(w.shape(), 4, "conv2d weight");
  require(x.dim(1) == w.dim(1), "conv2d: input " + to_string(x.shape()) + " has " +
                                    std::to_string(x.dim(1)) + " channels but weight " +
                                    to_string(w.shape()) + " expects " + std::to_string(w.dim(1)));
  require(opt.stride > 0 && opt.pad >= 0, "conv2d: stride must be positive and pad nonnegative");
  const Index n = x.dim(0), c_out = w.dim(0);
  ConvGeom g{x.dim(1), x.dim(2), x.dim(3), w.dim(2), w.dim(3), opt.stride, opt.pad, 0, 0};
  require(g.kh <= g.h + 2 * g.pad && g.kw <= g.w + 2 * g.pad,
          "conv2d: kernel " + to_string(w.shape()) + " larger than padded input " + to_string(x.shape()));
  g.h_out = window_out(g.h, g.kh, g.stride, g.pad);
  g.w_out = window_out(g.w, g.kw, g.stride, g.pad);
  if (b.defined()) {
    require(b.rank() == 1 && b.dim(0) == c_out,
            "conv2d: bias " + to_string(b.shape()) + " does not match weight " + to_string(w.shape()));
  }

  const Index k = g.k(), p = g.p();
  std::vector<T> out(sz<T>(n * c_out * p));
  std::vector<T> cols(g.pointwise() ? 0 : sz<T>(k * p));
  CMapR<T> wm(w.data().data(), c_out, k);
  for (Index s = 0; s < n; ++s) {
    const T* xs = x.data().data() + s * g.c_in * g.h * g.w;
    const T* cp = xs;
    if (!g.pointwise()) {
      im2col(xs, g, cols.data());
      cp = cols.data();
    }
    MapR<T> om(out.data() + s * c_out * p, c_out, p);
    om.noalias() = wm * CMapR<T>(cp, k, p);
    if (b.defined()) {
      for (Index co = 0; co < c_out; ++co) om.row(co).array() += b[co];
    }
  }
  g_macs += static_cast<std::uint64_t>(n * c_out * p * k);

  std::vector<NodePtr<T>> parents{x.node_ptr(), w.node_ptr()};
  if (b.defined()) parents.push_back(b.node_ptr());
  return make_result<T>("conv2d", {n, c_out, g.h_out, g.w_out}, std::move(out), std::move(parents),
                        [g, n, c_out](Node<T>& self) {
                          Node<T>& xn = *self.parents[0];
                          Node<T>& wn = *self.parents[1];
                          Node<T>* bn = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
                          const Index k = g.k(), p = g.p();
                          std::vector<T> cols(g.pointwise() ? 0 : sz<T>(k * p));
                          std::vector<T> dcols(xn.requires_grad && !g.pointwise() ? sz<T>(k * p) : 0);
                          CMapR<T> wm(wn.data.data(), c_out, k);
                          for (Index s = 0; s < n; ++s) {
                            CMapR<T> gy(self.grad.data() + s * c_out * p, c_out, p);
                            const T* xs = xn.data.data() + s * g.c_in * g.h * g.w;
                            if (wn.requires_grad) {
                              const T* cp = xs;
                              if (!g.pointwise()) {
                                im2col(xs, g, cols.data());
                                cp = cols.data();
                              }
                              MapR<T> gw(wn.ensure_grad().data(), c_out, k);
                              gw.noalias() += gy * CMapR<T>(cp, k, p).transpose();
                            }
                            if (bn && bn->requires_grad) {
                              auto& gb = bn->ensure_grad();
                              // Plain loop: Eigen's vectorized sum peels by address, which would make the
                              // result depend on where the buffer landed.
                              const T* row = self.grad.data() + s * c_out * p;
                              for (Index co = 0; co < c_out; ++co, row += p) {
                                T acc = T(0);
                                for (Index i = 0; i < p; ++i) acc += row[i];
                                gb[sz<T>(co)] += acc;
                              }
                            }
                            if (xn.requires_grad) {
                              T* gx = xn.ensure_grad().data() + s * g.c_in * g.h * g.w;
                              if (g.pointwise()) {
                                MapR<T>(gx, k, p).noalias() += wm.transpose() * gy;
                              } else {
                                MapR<T>(dcols.data(), k, p).noalias() = wm.transpose() * gy;
                                col2im_add(dcols.data(), g, gx);
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.values());
  for (T& v : out) v = v > T(0) ? v : T(0);
  return make_result<T>("relu", x.shape(), std::move(out), {x.node_ptr()}, [](Node<T>& self) {
    Node<T>& xn = *self.parents[0];
    auto& gx = xn.ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (xn.data[i] > T(0)) gx[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> out(x.values());
  for (T& v : out) v = T(1) / (T(1) + std::exp(-v));
  return make_result<T>("sigmoid", x.shape(), std::move(out), {x.node_ptr()}, [](Node<T>& self) {
    auto& gx = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const T y = self.data[i];
      gx[i] += self.grad[i] * y * (T(1) - y);
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const auto sa = broadcast_strides(a.shape(), out_shape);
  const auto sb = broadcast_strides(b.shape(), out_shape);
  std::vector<T> out(sz<T>(numel_of(out_shape)));
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  } else {
    for_each_broadcast(out_shape, sa, sb, [&](Index o, Index ia, Index ib) { out[sz<T>(o)] = ad[ia] + bd[ib]; });
  }
  return make_result<T>("add", out_shape, std::move(out), {a.node_ptr(), b.node_ptr()},
                        [out_shape, sa, sb](Node<T>& self) {
                          Node<T>& an = *self.parents[0];
                          Node<T>& bn = *self.parents[1];
                          for (int side = 0; side < 2; ++side) {
                            Node<T>& pn = side == 0 ? an : bn;
                            if (!pn.requires_grad) continue;
                            auto& gp = pn.ensure_grad();
                            if (pn.shape == out_shape) {
                              for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i];
                            } else {
                              for_each_broadcast(out_shape, sa, sb, [&](Index o, Index ia, Index ib) {
                                gp[sz<T>(side == 0 ? ia : ib)] += self.grad[sz<T>(o)];
                              });
                            }
                          }
                        });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const auto sa = broadcast_strides(a.shape(), out_shape);
  const auto sb = broadcast_strides(b.shape(), out_shape);
  std::vector<T> out(sz<T>(numel_of(out_shape)));
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  for_each_broadcast(out_shape, sa, sb, [&](Index o, Index ia, Index ib) { out[sz<T>(o)] = ad[ia] * bd[ib]; });
  return make_result<T>("mul", out_shape, std::move(out), {a.node_ptr(), b.node_ptr()},
                        [out_shape, sa, sb](Node<T>& self) {
                          Node<T>& an = *self.parents[0];
                          Node<T>& bn = *self.parents[1];
                          T* ga = an.requires_grad ? an.ensure_grad().data() : nullptr;
                          T* gb = bn.requires_grad ? bn.ensure_grad().data() : nullptr;
                          const T* ad = an.data.data();
                          const T* bd = bn.data.data();
                          for_each_broadcast(out_shape, sa, sb, [&](Index o, Index ia, Index ib) {
                            const T g = self.grad[sz<T>(o)];
                            if (ga) ga[ia] += g * bd[ib];
                            if (gb) gb[ib] += g * ad[ia];
                          });
                        });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.values());
  for (T& v : out) v *= factor;
  return make_result<T>("scale", x.shape(), std::move(out), {x.node_ptr()}, [factor](Node<T>& self) {
    auto& gx = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * self.grad[i];
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = T(0);
  for (T v : x.values()) total += v;
  return make_result<T>("sum", {1}, {total}, {x.node_ptr()}, [](Node<T>& self) {
    auto& gx = self.parents[0]->ensure_grad();
    for (T& g : gx) g += self.grad[0];
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& shape) {
  require(numel_of(shape) == x.numel(),
          "reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  return make_result<T>("reshape", shape, x.values(), {x.node_ptr()}, [](Node<T>& self) {
    auto& gx = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, Index k, Index stride) {
  require_rank(x.shape(), 4, "maxpool2d");
  require(k > 0 && stride > 0, "maxpool2d: window and stride must be positive");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(k <= h && k <= w, "maxpool2d: window " + std::to_string(k) + " exceeds spatial extent of " +
                                to_string(x.shape()));
  const Index ho = window_out(h, k, stride, 0), wo = window_out(w, k, stride, 0);
  std::vector<T> out(sz<T>(n * c * ho * wo));
  std::vector<Index> argmax(out.size());
  const T* xd = x.data().data();
  for (Index plane = 0; plane < n * c; ++plane) {
    const T* xp = xd + plane * h * w;
    for (Index oh = 0; oh < ho; ++oh) {
      for (Index ow = 0; ow < wo; ++ow) {
        Index best = (oh * stride) * w + ow * stride;
        for (Index i = 0; i < k; ++i) {
          for (Index j = 0; j < k; ++j) {
            const Index at = (oh * stride + i) * w + ow * stride + j;
            if (xp[at] > xp[best]) best = at;
          }
        }
        const std::size_t o = sz<T>((plane * ho + oh) * wo + ow);
        out[o] = xp[best];
        argmax[o] = plane * h * w + best;
      }
    }
  }
  return make_result<T>("maxpool2d", {n, c, ho, wo}, std::move(out), {x.node_ptr()},
                        [argmax = std::move(argmax)](Node<T>& self) {
                          auto& gx = self.parents[0]->ensure_grad();
                          for (std::size_t o = 0; o < argmax.size(); ++o) gx[sz<T>(argmax[o])] += self.grad[o];
                        });
}

template <typename T>
Tensor<T> avgpool2d(const Tensor<T>& x, Index k, Index stride, Index pad) {
  require_rank(x.shape(), 4, "avgpool2d");
  require(k > 0 && stride > 0 && pad >= 0, "avgpool2d: invalid window/stride/pad");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(k <= h + 2 * pad && k <= w + 2 * pad,
          "avgpool2d: window " + std::to_string(k) + " exceeds padded extent of " + to_string(x.shape()));
  const Index ho = window_out(h, k, stride, pad), wo = window_out(w, k, stride, pad);
  const T inv = T(1) / static_cast<T>(k * k);
  auto visit = [=](auto&& f) {
    for (Index plane = 0; plane < n * c; ++plane) {
      for (Index oh = 0; oh < ho; ++oh) {
        for (Index ow = 0; ow < wo; ++ow) {
          const Index o = (plane * ho + oh) * wo + ow;
          for (Index i = 0; i < k; ++i) {
            const Index ih = oh * stride - pad + i;
            if (ih < 0 || ih >= h) continue;
            for (Index j = 0; j < k; ++j) {
              const Index iw = ow * stride - pad + j;
              if (iw < 0 || iw >= w) continue;
              f(o, (plane * h + ih) * w + iw);
            }
          }
        }
      }
    }
  };
  std::vector<T> out(sz<T>(n * c * ho * wo), T(0));
  const T* xd = x.data().data();
  visit([&](Index o, Index i) { out[sz<T>(o)] += xd[i]; });
  for (T& v : out) v *= inv;
  return make_result<T>("avgpool2d", {n, c, ho, wo}, std::move(out), {x.node_ptr()},
                        [visit, inv](Node<T>& self) {
                          auto& gx = self.parents[0]->ensure_grad();
                          visit([&](Index o, Index i) { gx[sz<T>(i)] += inv * self.grad[sz<T>(o)]; });
                        });
}

template <typename T>
Tensor<T> adaptive_avg_pool2d(const Tensor<T>& x, Index out_h, Index out_w) {
  require_rank(x.shape(), 4, "adaptive_avg_pool2d");
  require(out_h > 0 && out_w > 0, "adaptive_avg_pool2d: output extent must be positive");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  auto visit = [=](auto&& f) {
    for (Index plane = 0; plane < n * c; ++plane) {
      for (Index oh = 0; oh < out_h; ++oh) {
        const PoolBin bh = adaptive_bin(oh, h, out_h);
        for (Index ow = 0; ow < out_w; ++ow) {
          const PoolBin bw = adaptive_bin(ow, w, out_w);
          const T inv = T(1) / static_cast<T>((bh.end - bh.begin) * (bw.end - bw.begin));
          const Index o = (plane * out_h + oh) * out_w + ow;
          for (Index ih = bh.begin; ih < bh.end; ++ih) {
            for (Index iw = bw.begin; iw < bw.end; ++iw) f(o, (plane * h + ih) * w + iw, inv);
          }
        }
      }
    }
  };
  std::vector<T> out(sz<T>(n * c * out_h * out_w), T(0));
  const T* xd = x.data().data();
  visit([&](Index o, Index i, T inv) { out[sz<T>(o)] += inv * xd[i]; });
  return make_result<T>("adaptive_avg_pool2d", {n, c, out_h, out_w}, std::move(out), {x.node_ptr()},
                        [visit](Node<T>& self) {
                          auto& gx = self.parents[0]->ensure_grad();
                          visit([&](Index o, Index i, T inv) { gx[sz<T>(i)] += inv * self.grad[sz<T>(o)]; });
                        });
}

template <typename T>
Tensor<T> adaptive_max_pool2d(const Tensor<T>& x, Index out_h, Index out_w) {
  require_rank(x.shape(), 4, "adaptive_max_pool2d");
  require(out_h > 0 && out_w > 0, "adaptive_max_pool2d: output extent must be positive");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  std::vector<T> out(sz<T>(n * c * out_h * out_w));
  std::vector<Index> argmax(out.size());
  const T* xd = x.data().data();
  for (Index plane = 0; plane < n * c; ++plane) {
    for (Index oh = 0; oh < out_h; ++oh) {
      const PoolBin bh = adaptive_bin(oh, h, out_h);
      for (Index ow = 0; ow < out_w; ++ow) {
        const PoolBin bw = adaptive_bin(ow, w, out_w);
        Index best = (plane * h + bh.begin) * w + bw.begin;
        for (Index ih = bh.begin; ih < bh.end; ++ih) {
          for (Index iw = bw.begin; iw < bw.end; ++iw) {
            const Index at = (plane * h + ih) * w + iw;
            if (xd[at] > xd[best]) best = at;
          }
        }
        const std::size_t o = sz<T>((plane * out_h + oh) * out_w + ow);
        out[o] = xd[best];
        argmax[o] = best;
      }
    }
  }
  return make_result<T>("adaptive_max_pool2d", {n, c, out_h, out_w}, std::move(out), {x.node_ptr()},
                        [argmax = std::move(argmax)](Node<T>& self) {
                          auto& gx = self.parents[0]->ensure_grad();
                          for (std::size_t o = 0; o < argmax.size(); ++o) gx[sz<T>(argmax[o])] += self.grad[o];
                        });
}

template <typename T>
Tensor<T> channel_mean(const Tensor<T>& x) {
  require_rank(x.shape(), 4, "channel_mean");
  const Index n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const T inv = T(1) / static_cast<T>(c);
  std::vector<T> out(sz<T>(n * hw), T(0));
  const T* xd = x.data().data();
  for (Index s = 0; s < n; ++s) {
    for (Index ch = 0; ch < c; ++ch) {
      const T* src = xd + (s * c + ch) * hw;
      T* dst = out.data() + s * hw;
      for (Index i = 0; i < hw; ++i) dst[i] += src[i];
    }
  }
  for (T& v : out) v *= inv;
  return make_result<T>("channel_mean", {n, 1, x.dim(2), x.dim(3)}, std::move(out), {x.node_ptr()},
                        [n, c, hw, inv](Node<T>& self) {
                          auto& gx = self.parents[0]->ensure_grad();
                          for (Index s = 0; s < n; ++s) {
                            for (Index ch = 0; ch < c; ++ch) {
                              for (Index i = 0; i < hw; ++i) {
                                gx[sz<T>((s * c + ch) * hw + i)] += inv * self.grad[sz<T>(s * hw + i)];
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> channel_max(const Tensor<T>& x) {
  require_rank(x.shape(), 4, "channel_max");
  const Index n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<T> out(sz<T>(n * hw));
  std::vector<Index> argmax(out.size());
  const T* xd = x.data().data();
  for (Index s = 0; s < n; ++s) {
    for (Index i = 0; i < hw; ++i) {
      Index best = s * c * hw + i;
      for (Index ch = 1; ch < c; ++ch) {
        const Index at = (s * c + ch) * hw + i;
        if (xd[at] > xd[best]) best = at;
      }
      out[sz<T>(s * hw + i)] = xd[best];
      argmax[sz<T>(s * hw + i)] = best;
    }
  }
  return make_result<T>("channel_max", {n, 1, x.dim(2), x.dim(3)}, std::move(out), {x.node_ptr()},
                        [argmax = std::move(argmax)](Node<T>& self) {
                          auto& gx = self.parents[0]->ensure_grad();
                          for (std::size_t o = 0; o < argmax.size(); ++o) gx[sz<T>(argmax[o])] += self.grad[o];
                        });
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const Shape& first = parts.front().shape();
  require_rank(first, 4, "concat_channels");
  Index c_total = 0;
  for (const auto& t : parts) {
    const Shape& s = t.shape();
    require(s.size() == 4 && s[0] == first[0] && s[2] == first[2] && s[3] == first[3],
            "concat_channels: " + to_string(s) + " does not align with " + to_string(first));
    c_total += s[1];
  }
  const Index n = first[0], hw = first[2] * first[3];
  std::vector<T> out(sz<T>(n * c_total * hw));
  std::vector<Index> channels;
  std::vector<NodePtr<T>> parents;
  for (Index s = 0; s < n; ++s) {
    T* dst = out.data() + s * c_total * hw;
    for (const auto& t : parts) {
      const Index block = t.dim(1) * hw;
      std::copy_n(t.data().data() + s * block, block, dst);
      dst += block;
    }
  }
  for (const auto& t : parts) {
    channels.push_back(t.dim(1));
    parents.push_back(t.node_ptr());
  }
  return make_result<T>("concat_channels", {n, c_total, first[2], first[3]}, std::move(out),
                        std::move(parents), [channels, n, c_total, hw](Node<T>& self) {
                          Index offset = 0;
                          for (std::size_t p = 0; p < channels.size(); ++p) {
                            const Index block = channels[p] * hw;
                            Node<T>& pn = *self.parents[p];
                            if (pn.requires_grad) {
                              auto& gp = pn.ensure_grad();
                              for (Index s = 0; s < n; ++s) {
                                const T* src = self.grad.data() + s * c_total * hw + offset;
                                T* dst = gp.data() + s * block;
                                for (Index i = 0; i < block; ++i) dst[i] += src[i];
                              }
                            }
                            offset += block;
                          }
                        });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  require_rank(x.shape(), 2, "linear input");
  require_rank(w.shape(), 2, "linear weight");
  require(x.dim(1) == w.dim(1), "linear: input " + to_string(x.shape()) + " does not match weight " +
                                    to_string(w.shape()));
  const Index n = x.dim(0), d_in = x.dim(1), d_out = w.dim(0);
  if (b.defined()) {
    require(b.rank() == 1 && b.dim(0) == d_out,
            "linear: bias " + to_string(b.shape()) + " does not match weight " + to_string(w.shape()));
  }
  std::vector<T> out(sz<T>(n * d_out));
  MapR<T> y(out.data(), n, d_out);
  y.noalias() = CMapR<T>(x.data().data(), n, d_in) * CMapR<T>(w.data().data(), d_out, d_in).transpose();
  if (b.defined()) {
    for (Index r = 0; r < n; ++r) {
      for (Index j = 0; j < d_out; ++j) y(r, j) += b[j];
    }
  }
  g_macs += static_cast<std::uint64_t>(n * d_out * d_in);
  std::vector<NodePtr<T>> parents{x.node_ptr(), w.node_ptr()};
  if (b.defined()) parents.push_back(b.node_ptr());
  return make_result<T>("linear", {n, d_out}, std::move(out), std::move(parents), [n, d_in, d_out](Node<T>& self) {
    Node<T>& xn = *self.parents[0];
    Node<T>& wn = *self.parents[1];
    CMapR<T> gy(self.grad.data(), n, d_out);
    if (xn.requires_grad) {
      MapR<T>(xn.ensure_grad().data(), n, d_in).noalias() += gy * CMapR<T>(wn.data.data(), d_out, d_in);
    }
    if (wn.requires_grad) {
      MapR<T>(wn.ensure_grad().data(), d_out, d_in).noalias() += gy.transpose() * CMapR<T>(xn.data.data(), n, d_in);
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      auto& gb = self.parents[2]->ensure_grad();
      for (Index r = 0; r < n; ++r) {
        for (Index j = 0; j < d_out; ++j) gb[sz<T>(j)] += gy(r, j);
      }
    }
  });
}

template <typename T>
std::vector<T> softmax_rows(const Tensor<T>& logits) {
  require_rank(logits.shape(), 2, "softmax");
  const Index n = logits.dim(0), c = logits.dim(1);
  std::vector<T> p(logits.values());
  for (Index r = 0; r < n; ++r) {
    T* row = p.data() + r * c;
    const T m = *std::max_element(row, row + c);
    T z = T(0);
    for (Index j = 0; j < c; ++j) {
      row[j] = std::exp(row[j] - m);
      z += row[j];
    }
    for (Index j = 0; j < c; ++j) row[j] /= z;
  }
  return p;
}

template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  require_rank(logits.shape(), 2, "softmax_cross_entropy");
  const Index n = logits.dim(0), c = logits.dim(1);
  require(static_cast<Index>(labels.size()) == n, "softmax_cross_entropy: " + std::to_string(labels.size()) +
                                                      " labels for batch of " + std::to_string(n));
  for (int label : labels) {
    if (label < 0 || label >= c) {
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(label) + " outside [0, " +
                              std::to_string(c) + ")");
    }
  }
  const T* ld = logits.data().data();
  T loss = T(0);
  for (Index r = 0; r < n; ++r) {
    const T* row = ld + r * c;
    const T m = *std::max_element(row, row + c);
    T z = T(0);
    for (Index j = 0; j < c; ++j) z += std::exp(row[j] - m);
    loss += (m + std::log(z)) - row[labels[sz<T>(r)]];
  }
  loss /= static_cast<T>(n);
  std::vector<int> saved(labels.begin(), labels.end());
  return make_result<T>("softmax_cross_entropy", {1}, {loss}, {logits.node_ptr()},
                        [saved = std::move(saved), n, c](Node<T>& self) {
                          Node<T>& ln = *self.parents[0];
                          Tensor<T> view(Tensor<T>::from({n, c}, ln.data));
                          std::vector<T> p = softmax_rows(view);
                          const T g = self.grad[0] / static_cast<T>(n);
                          auto& gl = ln.ensure_grad();
                          for (Index r = 0; r < n; ++r) {
                            for (Index j = 0; j < c; ++j) {
                              const T onehot = (j == saved[sz<T>(r)]) ? T(1) : T(0);
                              gl[sz<T>(r * c + j)] += g * (p[sz<T>(r * c + j)] - onehot);
                            }
                          }
                        });
}

#define MER_INSTANTIATE_OPS(T)                                                                     \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dOptions); \
  template Tensor<T> relu<T>(const Tensor<T>&);                                                    \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                                 \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                                \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                     \
  template Tensor<T> reshape<T>(const Tensor<T>&, const Shape&);                                   \
  template Tensor<T> maxpool2d<T>(const Tensor<T>&, Index, Index);                                 \
  template Tensor<T> avgpool2d<T>(const Tensor<T>&, Index, Index, Index);                          \
  template Tensor<T> adaptive_avg_pool2d<T>(const Tensor<T>&, Index, Index);                       \
  template Tensor<T> adaptive_max_pool2d<T>(const Tensor<T>&, Index, Index);                       \
  template Tensor<T> channel_mean<T>(const Tensor<T>&);                                            \
  template Tensor<T> channel_max<T>(const Tensor<T>&);                                             \
  template Tensor<T> concat_channels<T>(const std::vector<Tensor<T>>&);                            \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> softmax_cross_entropy<T>(const Tensor<T>&, std::span<const int>);            \
  template std::vector<T> softmax_rows<T>(const Tensor<T>&);

MER_INSTANTIATE_OPS(float)
MER_INSTANTIATE_OPS(double)

}  // namespace mer
