// Copyright 2026 The MixPro Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mixpro/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>

#include "mixpro/error.hpp"

namespace mixpro::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

Graph& common_graph(const Var& a, const Var& b) {
  if (!a.valid() || !b.valid() || &a.graph() != &b.graph()) {
    throw ContractError("operands belong to different graphs");
  }
  return a.graph();
}

std::size_t prod(const Shape& s, std::size_t begin, std::size_t end) {
  std::size_t p = 1;
  for (std::size_t i = begin; i < end; ++i) p *= s[i];
  return p;
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_to_string(a) + " and " +
                       shape_to_string(b));
}

}  // namespace

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n, bool transpose_a, bool transpose_b, bool accumulate) {
  const auto rm = static_cast<Eigen::Index>(m);
  const auto rk = static_cast<Eigen::Index>(k);
  const auto rn = static_cast<Eigen::Index>(n);
  ConstMap am(a, transpose_a ? rk : rm, transpose_a ? rm : rk);
  ConstMap bm(b, transpose_b ? rn : rk, transpose_b ? rk : rn);
  MutMap cm(c, rm, rn);
  if (!accumulate) cm.setZero();
  if (transpose_a && transpose_b) {
    cm.noalias() += am.transpose() * bm.transpose();
  } else if (transpose_a) {
    cm.noalias() += am.transpose() * bm;
  } else if (transpose_b) {
    cm.noalias() += am * bm.transpose();
  } else {
    cm.noalias() += am * bm;
  }
}

Var add(const Var& a, const Var& b) {
  Graph& g = common_graph(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.size() > sa.size() || !std::equal(sb.begin(), sb.end(), sa.end() - sb.size())) {
    shape_error("add", sa, sb);
  }
  const std::size_t inner = b.value().size();
  const std::size_t outer = inner == 0 ? 0 : a.value().size() / inner;
  Tensor out(sa, std::vector<double>(a.value().vector()));
  auto y = out.data();
  auto bv = b.value().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < inner; ++j) y[o * inner + j] += bv[j];
  }
  return g.record("add", std::move(out), {a, b},
                  [a, b, outer, inner](Graph& gr, std::span<const double> gout) {
                    if (gr.needs_grad(a)) {
                      auto ga = gr.grad_of(a);
                      for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
                    }
                    if (gr.needs_grad(b)) {
                      auto gb = gr.grad_of(b);
                      for (std::size_t o = 0; o < outer; ++o) {
                        for (std::size_t j = 0; j < inner; ++j) gb[j] += gout[o * inner + j];
                      }
                    }
                  });
}

Var mul(const Var& a, const Var& b) {
  Graph& g = common_graph(a, b);
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  Tensor out(a.shape());
  auto av = a.value().data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return g.record("mul", std::move(out), {a, b}, [a, b](Graph& gr, std::span<const double> gout) {
    auto av = a.value().data();
    auto bv = b.value().data();
    if (gr.needs_grad(a)) {
      auto ga = gr.grad_of(a);
      for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] * bv[i];
    }
    if (gr.needs_grad(b)) {
      auto gb = gr.grad_of(b);
      for (std::size_t i = 0; i < gout.size(); ++i) gb[i] += gout[i] * av[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out(a.shape());
  auto av = a.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  return a.graph().record("scale", std::move(out), {a},
                          [a, factor](Graph& gr, std::span<const double> gout) {
                            auto ga = gr.grad_of(a);
                            for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] * factor;
                          });
}

Var square(const Var& a) {
  Tensor out(a.shape());
  auto av = a.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * av[i];
  return a.graph().record("square", std::move(out), {a},
                          [a](Graph& gr, std::span<const double> gout) {
                            auto av = a.value().data();
                            auto ga = gr.grad_of(a);
                            for (std::size_t i = 0; i < gout.size(); ++i) {
                              ga[i] += 2.0 * av[i] * gout[i];
                            }
                          });
}

Var sum(const Var& a) {
  auto av = a.value().data();
  const double total = std::accumulate(av.begin(), av.end(), 0.0);
  return a.graph().record("sum", Tensor::scalar(total), {a},
                          [a](Graph& gr, std::span<const double> gout) {
                            auto ga = gr.grad_of(a);
                            for (double& v : ga) v += gout[0];
                          });
}

Var mean(const Var& a) {
  if (a.value().size() == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var matmul(const Var& a, const Var& b) {
  Graph& g = common_graph(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) shape_error("matmul", sa, sb);
  const std::size_t m = sa[0], k = sa[1], n = sb[1];
  Tensor out(Shape{m, n});
  gemm(a.value().data().data(), b.value().data().data(), out.data().data(), m, k, n, false, false,
       false);
  return g.record("matmul", std::move(out), {a, b},
                  [a, b, m, k, n](Graph& gr, std::span<const double> gout) {
                    if (gr.needs_grad(a)) {
                      gemm(gout.data(), b.value().data().data(), gr.grad_of(a).data(), m, n, k,
                           false, true, true);
                    }
                    if (gr.needs_grad(b)) {
                      gemm(a.value().data().data(), gout.data(), gr.grad_of(b).data(), k, m, n,
                           true, false, true);
                    }
                  });
}

Var linear(const Var& x, const Var& w) {
  Graph& g = common_graph(x, w);
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sx.empty() || sw.size() != 2 || sx.back() != sw[0]) shape_error("linear", sx, sw);
  const std::size_t k = sw[0], n = sw[1];
  const std::size_t rows = x.value().size() / k;
  Shape out_shape = sx;
  out_shape.back() = n;
  Tensor out(out_shape);
  gemm(x.value().data().data(), w.value().data().data(), out.data().data(), rows, k, n, false,
       false, false);
  return g.record("linear", std::move(out), {x, w},
                  [x, w, rows, k, n](Graph& gr, std::span<const double> gout) {
                    if (gr.needs_grad(x)) {
                      gemm(gout.data(), w.value().data().data(), gr.grad_of(x).data(), rows, n, k,
                           false, true, true);
                    }
                    if (gr.needs_grad(w)) {
                      gemm(x.value().data().data(), gout.data(), gr.grad_of(w).data(), k, rows, n,
                           true, false, true);
                    }
                  });
}

Var bmm(const Var& a, const Var& b, bool transpose_b) {
  Graph& g = common_graph(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0]) shape_error("bmm", sa, sb);
  const std::size_t groups = sa[0], m = sa[1], k = sa[2];
  const std::size_t n = transpose_b ? sb[1] : sb[2];
  if ((transpose_b ? sb[2] : sb[1]) != k) shape_error("bmm", sa, sb);
  Tensor out(Shape{groups, m, n});
  const double* av = a.value().data().data();
  const double* bv = b.value().data().data();
  for (std::size_t gi = 0; gi < groups; ++gi) {
    gemm(av + gi * m * k, bv + gi * k * n, out.data().data() + gi * m * n, m, k, n, false,
         transpose_b, false);
  }
  return g.record(
      "bmm", std::move(out), {a, b},
      [a, b, groups, m, k, n, transpose_b](Graph& gr, std::span<const double> gout) {
        const double* av = a.value().data().data();
        const double* bv = b.value().data().data();
        if (gr.needs_grad(a)) {
          double* ga = gr.grad_of(a).data();
          for (std::size_t gi = 0; gi < groups; ++gi) {
            // dA = dC·Bᵀ, or dC·B when B was used transposed.
            gemm(gout.data() + gi * m * n, bv + gi * k * n, ga + gi * m * k, m, n, k, false,
                 !transpose_b, true);
          }
        }
        if (gr.needs_grad(b)) {
          double* gb = gr.grad_of(b).data();
          for (std::size_t gi = 0; gi < groups; ++gi) {
            if (transpose_b) {
              gemm(gout.data() + gi * m * n, av + gi * m * k, gb + gi * k * n, n, m, k, true,
                   false, true);
            } else {
              gemm(av + gi * m * k, gout.data() + gi * m * n, gb + gi * k * n, k, m, n, true,
                   false, true);
            }
          }
        }
      });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.graph().record("reshape", std::move(out), {x},
                          [x](Graph& gr, std::span<const double> gout) {
                            auto gx = gr.grad_of(x);
                            for (std::size_t i = 0; i < gout.size(); ++i) gx[i] += gout[i];
                          });
}

Var permute(const Var& x, const std::vector<std::size_t>& axes) {
  const Shape& sx = x.shape();
  const std::size_t rank = sx.size();
  std::vector<bool> seen(rank, false);
  if (axes.size() != rank) throw DimensionError("permute: axis list does not match rank");
  for (std::size_t ax : axes) {
    if (ax >= rank || seen[ax]) throw DimensionError("permute: axes are not a permutation");
    seen[ax] = true;
  }
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * sx[i];
  Shape out_shape(rank);
  std::vector<std::size_t> stride_of_out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = sx[axes[i]];
    stride_of_out[i] = in_strides[axes[i]];
  }
  const std::size_t total = x.value().size();
  auto source = std::make_shared<std::vector<std::size_t>>(total);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t offset = 0;
  for (std::size_t o = 0; o < total; ++o) {
    (*source)[o] = offset;
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      offset += stride_of_out[d];
      if (idx[d] < out_shape[d]) break;
      offset -= stride_of_out[d] * idx[d];
      idx[d] = 0;
    }
  }
  Tensor out(out_shape);
  auto xv = x.value().data();
  for (std::size_t o = 0; o < total; ++o) out[o] = xv[(*source)[o]];
  return x.graph().record("permute", std::move(out), {x},
                          [x, source](Graph& gr, std::span<const double> gout) {
                            auto gx = gr.grad_of(x);
                            for (std::size_t o = 0; o < gout.size(); ++o) {
                              gx[(*source)[o]] += gout[o];
                            }
                          });
}

Var slice(const Var& x, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& sx = x.shape();
  if (axis >= sx.size() || start + length > sx[axis]) {
    throw DimensionError("slice [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") out of range on axis " +
                         std::to_string(axis) + " of " + shape_to_string(sx));
  }
  const std::size_t outer = prod(sx, 0, axis);
  const std::size_t inner = prod(sx, axis + 1, sx.size());
  const std::size_t extent = sx[axis];
  Shape out_shape = sx;
  out_shape[axis] = length;
  Tensor out(out_shape);
  auto xv = x.value().data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>((o * extent + start) * inner),
                length * inner, out.data().begin() + static_cast<std::ptrdiff_t>(o * length * inner));
  }
  return x.graph().record(
      "slice", std::move(out), {x},
      [x, outer, inner, extent, start, length](Graph& gr, std::span<const double> gout) {
        auto gx = gr.grad_of(x);
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t i = 0; i < length * inner; ++i) {
            gx[(o * extent + start) * inner + i] += gout[o * length * inner + i];
          }
        }
      });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  Graph& g = parts.front().graph();
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat axis out of range");
  std::vector<std::size_t> extents;
  std::size_t total_extent = 0;
  for (const Var& p : parts) {
    common_graph(parts.front(), p);
    const Shape& sp = p.shape();
    bool ok = sp.size() == first.size();
    for (std::size_t d = 0; ok && d < sp.size(); ++d) ok = d == axis || sp[d] == first[d];
    if (!ok) shape_error("concat", first, sp);
    extents.push_back(sp[axis]);
    total_extent += sp[axis];
  }
  const std::size_t outer = prod(first, 0, axis);
  const std::size_t inner = prod(first, axis + 1, first.size());
  Shape out_shape = first;
  out_shape[axis] = total_extent;
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto pv = parts[p].value().data();
    const std::size_t block = extents[p] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * block), block,
                  out.data().begin() +
                      static_cast<std::ptrdiff_t>(o * total_extent * inner + offset * inner));
    }
    offset += extents[p];
  }
  return g.record("concat", std::move(out), parts,
                  [parts, extents, outer, inner, total_extent](Graph& gr,
                                                               std::span<const double> gout) {
                    std::size_t offset = 0;
                    for (std::size_t p = 0; p < parts.size(); ++p) {
                      const std::size_t block = extents[p] * inner;
                      if (gr.needs_grad(parts[p])) {
                        auto gp = gr.grad_of(parts[p]);
                        for (std::size_t o = 0; o < outer; ++o) {
                          for (std::size_t i = 0; i < block; ++i) {
                            gp[o * block + i] += gout[o * total_extent * inner + offset * inner + i];
                          }
                        }
                      }
                      offset += extents[p];
                    }
                  });
}

Var repeat_leading(const Var& x, std::size_t count) {
  Shape out_shape{count};
  out_shape.insert(out_shape.end(), x.shape().begin(), x.shape().end());
  Tensor out(out_shape);
  auto xv = x.value().data();
  const std::size_t n = xv.size();
  for (std::size_t c = 0; c < count; ++c) {
    std::copy(xv.begin(), xv.end(), out.data().begin() + static_cast<std::ptrdiff_t>(c * n));
  }
  return x.graph().record("repeat_leading", std::move(out), {x},
                          [x, count, n](Graph& gr, std::span<const double> gout) {
                            auto gx = gr.grad_of(x);
                            for (std::size_t c = 0; c < count; ++c) {
                              for (std::size_t i = 0; i < n; ++i) gx[i] += gout[c * n + i];
                            }
                          });
}

Var scale_leading(const Var& x, std::span<const double> factors) {
  const Shape& sx = x.shape();
  if (sx.empty() || sx[0] != factors.size()) {
    throw DimensionError("scale_leading: " + std::to_string(factors.size()) +
                         " factors for shape " + shape_to_string(sx));
  }
  const std::size_t inner = x.value().size() / sx[0];
  std::vector<double> f(factors.begin(), factors.end());
  Tensor out(sx);
  auto xv = x.value().data();
  for (std::size_t b = 0; b < f.size(); ++b) {
    for (std::size_t i = 0; i < inner; ++i) out[b * inner + i] = xv[b * inner + i] * f[b];
  }
  return x.graph().record("scale_leading", std::move(out), {x},
                          [x, f = std::move(f), inner](Graph& gr, std::span<const double> gout) {
                            auto gx = gr.grad_of(x);
                            for (std::size_t b = 0; b < f.size(); ++b) {
                              for (std::size_t i = 0; i < inner; ++i) {
                                gx[b * inner + i] += gout[b * inner + i] * f[b];
                              }
                            }
                          });
}

Var softmax(const Var& x, std::size_t axis) {
  const Shape& sx = x.shape();
  if (axis >= sx.size()) throw DimensionError("softmax axis out of range");
  const std::size_t outer = prod(sx, 0, axis);
  const std::size_t n = sx[axis];
  const std::size_t inner = prod(sx, axis + 1, sx.size());
  Tensor out(sx);
  auto xv = x.value().data();
  auto y = out.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = xv[base];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(xv[base + j * inner] - mx);
        y[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < n; ++j) y[base + j * inner] /= total;
    }
  }
  const std::size_t self_id = x.graph().size();
  return x.graph().record(
      "softmax", std::move(out), {x},
      [x, outer, n, inner, self_id](Graph& gr, std::span<const double> gout) {
        auto y = gr.value(self_id).data();
        auto gx = gr.grad_of(x);
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += gout[base + j * inner] * y[base + j * inner];
            for (std::size_t j = 0; j < n; ++j) {
              const std::size_t at = base + j * inner;
              gx[at] += y[at] * (gout[at] - dot);
            }
          }
        }
      });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  Graph& g = common_graph(x, gamma);
  common_graph(x, beta);
  const Shape& sx = x.shape();
  if (sx.empty()) throw DimensionError("layer_norm on a scalar");
  const std::size_t d = sx.back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    shape_error("layer_norm", sx, gamma.shape());
  }
  if (!(eps > 0.0)) throw ParameterError("layer_norm eps must be positive");
  const std::size_t rows = x.value().size() / d;
  auto normalized = std::make_shared<std::vector<double>>(x.value().size());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  Tensor out(sx);
  auto xv = x.value().data();
  auto gv = gamma.value().data();
  auto bv = beta.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (row[j] - mu) * rs;
      (*normalized)[r * d + j] = xh;
      out[r * d + j] = xh * gv[j] + bv[j];
    }
  }
  return g.record(
      "layer_norm", std::move(out), {x, gamma, beta},
      [x, gamma, beta, normalized, rstd, rows, d](Graph& gr, std::span<const double> gout) {
        const auto& xh = *normalized;
        if (gr.needs_grad(gamma)) {
          auto gg = gr.grad_of(gamma);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) gg[j] += gout[r * d + j] * xh[r * d + j];
          }
        }
        if (gr.needs_grad(beta)) {
          auto gb = gr.grad_of(beta);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) gb[j] += gout[r * d + j];
          }
        }
        if (gr.needs_grad(x)) {
          auto gv = gamma.value().data();
          auto gx = gr.grad_of(x);
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_dxh = 0.0;
            double mean_dxh_xh = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = gout[r * d + j] * gv[j];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * xh[r * d + j];
            }
            mean_dxh *= inv_d;
            mean_dxh_xh *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = gout[r * d + j] * gv[j];
              gx[r * d + j] += (*rstd)[r] * (dxh - mean_dxh - xh[r * d + j] * mean_dxh_xh);
            }
          }
        }
      });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(const Var& x) {
  Tensor out(x.shape());
  auto xv = x.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xv[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
  return x.graph().record("gelu", std::move(out), {x}, [x](Graph& gr, std::span<const double> gout) {
    auto xv = x.value().data();
    auto gx = gr.grad_of(x);
    for (std::size_t i = 0; i < gout.size(); ++i) {
      const double v = xv[i];
      const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
      const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
      gx[i] += gout[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
    }
  });
}

Tensor softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("softmax_rows expects a matrix");
  const std::size_t rows = logits.dim(0), k = logits.dim(1);
  Tensor out(logits.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = logits.data().data() + r * k;
    const double mx = *std::max_element(row, row + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      out[r * k + j] = std::exp(row[j] - mx);
      total += out[r * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) out[r * k + j] /= total;
  }
  return out;
}

Var cross_entropy_soft(const Var& logits, const Tensor& targets) {
  const Shape& sl = logits.shape();
  if (sl.size() != 2 || targets.shape() != sl) shape_error("cross_entropy_soft", sl, targets.shape());
  const std::size_t rows = sl[0], k = sl[1];
  if (rows == 0) throw DimensionError("cross_entropy_soft on an empty batch");
  std::vector<double> row_mass(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < k; ++j) {
      const double t = targets[r * k + j];
      if (!(t >= 0.0)) {
        throw ContractError("target row " + std::to_string(r) + " has a negative entry");
      }
      row_mass[r] += t;
    }
    if (std::abs(row_mass[r] - 1.0) > 1e-6) {
      throw ContractError("target row " + std::to_string(r) + " sums to " +
                          std::to_string(row_mass[r]) + ", not 1");
    }
  }
  auto probs = std::make_shared<Tensor>(softmax_rows(logits.value()));
  double loss = 0.0;
  auto lv = logits.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = lv.data() + r * k;
    const double mx = *std::max_element(row, row + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += std::exp(row[j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < k; ++j) {
      const double t = targets[r * k + j];
      if (t != 0.0) loss -= t * (row[j] - lse);
    }
  }
  loss /= static_cast<double>(rows);
  return logits.graph().record(
      "cross_entropy_soft", Tensor::scalar(loss), {logits},
      [logits, targets, probs, row_mass, rows, k](Graph& gr, std::span<const double> gout) {
        auto gl = gr.grad_of(logits);
        const double s = gout[0] / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < k; ++j) {
            gl[r * k + j] += s * (row_mass[r] * (*probs)[r * k + j] - targets[r * k + j]);
          }
        }
      });
}

}  // namespace mixpro::ad
