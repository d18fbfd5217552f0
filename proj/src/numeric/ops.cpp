#include "rrl/numeric/ops.hpp"

#include <atomic>
#include <cmath>
#include <memory>
#include <numbers>

#include "rrl/error.hpp"

namespace rrl {
namespace {

std::atomic<std::uint64_t> g_clamped_norms{0};

using MapR = Eigen::Map<RowMatrix>;
using CMapR = Eigen::Map<const RowMatrix>;

CMapR as_matrix(const Vector& v, Index rows, Index cols) { return {v.data(), rows, cols}; }
MapR as_matrix(Vector& v, Index rows, Index cols) { return {v.data(), rows, cols}; }

void require_2d(const DiffArray& a, const char* op) {
  require(a.dim() == 2, std::string(op) + ": expected a 2-D array, got " + shape_string(a.shape()));
}

void require_same_shape(const DiffArray& a, const DiffArray& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

// Accumulates into the gradient of `input` if it takes part in differentiation.
template <typename F>
void accumulate(Tape& t, const DiffArray& input, F&& f) {
  if (t.requires_grad(input.id())) f(t.grad_buffer(input.id()));
}

double floored_norm(double n) {
  if (n < kNormFloor) {
    g_clamped_norms.fetch_add(1, std::memory_order_relaxed);
    return kNormFloor;
  }
  return n;
}

}  // namespace

std::uint64_t clamped_norm_count() { return g_clamped_norms.load(); }
void reset_clamped_norm_count() { g_clamped_norms.store(0); }

BatchNormStats BatchNormStats::fresh(Index features) {
  return {Vector::Zero(features), Vector::Ones(features)};
}

DiffArray matmul(const DiffArray& a, const DiffArray& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const Index m = a.rows(), k = a.cols(), n = b.cols();
  require(b.rows() == k, "matmul: inner dimensions differ " + shape_string(a.shape()) + " x " +
                             shape_string(b.shape()));
  Vector out(m * n);
  as_matrix(out, m, n).noalias() = a.matrix() * b.matrix();
  return a.tape().record({m, n}, std::move(out), {a, b}, [a, b, m, k, n](Tape& t, std::size_t self) {
    const CMapR g = as_matrix(t.grad(self), m, n);
    accumulate(t, a, [&](Vector& ga) { as_matrix(ga, m, k).noalias() += g * b.matrix().transpose(); });
    accumulate(t, b, [&](Vector& gb) { as_matrix(gb, k, n).noalias() += a.matrix().transpose() * g; });
  });
}

DiffArray transpose(const DiffArray& a) {
  require_2d(a, "transpose");
  const Index m = a.rows(), n = a.cols();
  Vector out(m * n);
  as_matrix(out, n, m) = a.matrix().transpose();
  return a.tape().record({n, m}, std::move(out), {a}, [a, m, n](Tape& t, std::size_t self) {
    accumulate(t, a, [&](Vector& ga) {
      as_matrix(ga, m, n) += as_matrix(t.grad(self), n, m).transpose();
    });
  });
}

DiffArray add(const DiffArray& a, const DiffArray& b) {
  require_same_shape(a, b, "add");
  return a.tape().record(a.shape(), a.data() + b.data(), {a, b}, [a, b](Tape& t, std::size_t self) {
    accumulate(t, a, [&](Vector& ga) { ga += t.grad(self); });
    accumulate(t, b, [&](Vector& gb) { gb += t.grad(self); });
  });
}

DiffArray sub(const DiffArray& a, const DiffArray& b) {
  require_same_shape(a, b, "sub");
  return a.tape().record(a.shape(), a.data() - b.data(), {a, b}, [a, b](Tape& t, std::size_t self) {
    accumulate(t, a, [&](Vector& ga) { ga += t.grad(self); });
    accumulate(t, b, [&](Vector& gb) { gb -= t.grad(self); });
  });
}

DiffArray mul(const DiffArray& a, const DiffArray& b) {
  require_same_shape(a, b, "mul");
  return a.tape().record(a.shape(), a.data().cwiseProduct(b.data()), {a, b},
                         [a, b](Tape& t, std::size_t self) {
                           accumulate(t, a, [&](Vector& ga) { ga += t.grad(self).cwiseProduct(b.data()); });
                           accumulate(t, b, [&](Vector& gb) { gb += t.grad(self).cwiseProduct(a.data()); });
                         });
}

DiffArray scale(const DiffArray& a, double s) {
  return a.tape().record(a.shape(), a.data() * s, {a}, [a, s](Tape& t, std::size_t self) {
    accumulate(t, a, [&](Vector& ga) { ga += s * t.grad(self); });
  });
}

DiffArray add_scalar(const DiffArray& a, double s) {
  return a.tape().record(a.shape(), a.data().array() + s, {a}, [a](Tape& t, std::size_t self) {
    accumulate(t, a, [&](Vector& ga) { ga += t.grad(self); });
  });
}

DiffArray relu(const DiffArray& a) {
  return a.tape().record(a.shape(), a.data().cwiseMax(0.0), {a}, [a](Tape& t, std::size_t self) {
    accumulate(t, a, [&](Vector& ga) {
      ga.array() += (a.data().array() > 0.0).select(t.grad(self).array(), 0.0);
    });
  });
}

DiffArray gelu(const DiffArray& a) {
  const Vector& x = a.data();
  Vector out(x.size());
  for (Index i = 0; i < x.size(); ++i) out[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] / std::numbers::sqrt2));
  return a.tape().record(a.shape(), std::move(out), {a}, [a](Tape& t, std::size_t self) {
    accumulate(t, a, [&](Vector& ga) {
      const Vector& x = a.data();
      const Vector& g = t.grad(self);
      constexpr double inv_sqrt_2pi = 0.3989422804014327;
      for (Index i = 0; i < x.size(); ++i) {
        const double cdf = 0.5 * (1.0 + std::erf(x[i] / std::numbers::sqrt2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x[i] * x[i]);
        ga[i] += g[i] * (cdf + x[i] * pdf);
      }
    });
  });
}

DiffArray exp(const DiffArray& a) {
  Vector out = a.data().array().exp();
  return a.tape().record(a.shape(), out, {a}, [a, out](Tape& t, std::size_t self) {
    accumulate(t, a, [&](Vector& ga) { ga += t.grad(self).cwiseProduct(out); });
  });
}

DiffArray log(const DiffArray& a) {
  return a.tape().record(a.shape(), a.data().array().log(), {a}, [a](Tape& t, std::size_t self) {
    accumulate(t, a, [&](Vector& ga) { ga.array() += t.grad(self).array() / a.data().array(); });
  });
}

DiffArray add_row(const DiffArray& a, const DiffArray& bias) {
  require_2d(a, "add_row");
  const Index m = a.rows(), n = a.cols();
  require(bias.size() == n, "add_row: bias has " + std::to_string(bias.size()) + " entries, need " +
                                std::to_string(n));
  Vector out(m * n);
  as_matrix(out, m, n) = a.matrix().rowwise() + bias.data().transpose();
  return a.tape().record({m, n}, std::move(out), {a, bias}, [a, bias, m, n](Tape& t, std::size_t self) {
    accumulate(t, a, [&](Vector& ga) { ga += t.grad(self); });
    accumulate(t, bias, [&](Vector& gb) {
      gb += as_matrix(t.grad(self), m, n).colwise().sum().transpose();
    });
  });
}

DiffArray mul_rows(const DiffArray& a, const DiffArray& gate) {
  require_2d(a, "mul_rows");
  const Index m = a.rows(), n = a.cols();
  require(gate.size() == m, "mul_rows: gate has " + std::to_string(gate.size()) + " entries, need " +
                                std::to_string(m));
  Vector out(m * n);
  as_matrix(out, m, n) = gate.data().asDiagonal() * a.matrix();
  return a.tape().record({m, n}, std::move(out), {a, gate}, [a, gate, m, n](Tape& t, std::size_t self) {
    const CMapR g = as_matrix(t.grad(self), m, n);
    accumulate(t, a, [&](Vector& ga) { as_matrix(ga, m, n) += gate.data().asDiagonal() * g; });
    accumulate(t, gate, [&](Vector& gg) { gg += g.cwiseProduct(a.matrix()).rowwise().sum(); });
  });
}

DiffArray sum(const DiffArray& a) {
  return a.tape().record({}, Vector::Constant(1, a.data().sum()), {a}, [a](Tape& t, std::size_t self) {
    accumulate(t, a, [&](Vector& ga) { ga.array() += t.grad(self)[0]; });
  });
}

DiffArray mean(const DiffArray& a) {
  require(a.size() > 0, "mean: empty array");
  const double inv = 1.0 / static_cast<double>(a.size());
  return a.tape().record({}, Vector::Constant(1, a.data().sum() * inv), {a},
                         [a, inv](Tape& t, std::size_t self) {
                           accumulate(t, a, [&](Vector& ga) { ga.array() += t.grad(self)[0] * inv; });
                         });
}

DiffArray sum_rows(const DiffArray& a) {
  require_2d(a, "sum_rows");
  const Index m = a.rows(), n = a.cols();
  return a.tape().record({n}, a.matrix().colwise().sum().transpose(), {a}, [a, m, n](Tape& t, std::size_t self) {
    accumulate(t, a, [&](Vector& ga) {
      as_matrix(ga, m, n).rowwise() += t.grad(self).transpose();
    });
  });
}

DiffArray mean_rows(const DiffArray& a) {
  require_2d(a, "mean_rows");
  require(a.rows() > 0, "mean_rows: no rows");
  return scale(sum_rows(a), 1.0 / static_cast<double>(a.rows()));
}

DiffArray cosine_sim(const DiffArray& u, const DiffArray& v) {
  require(u.size() == v.size() && u.size() > 0, "cosine_sim: size mismatch " + shape_string(u.shape()) +
                                                    " vs " + shape_string(v.shape()));
  const double nu_raw = u.data().norm(), nv_raw = v.data().norm();
  const double nu = floored_norm(nu_raw), nv = floored_norm(nv_raw);
  const double d = u.data().dot(v.data());
  const double c = d / (nu * nv);
  return u.tape().record({}, Vector::Constant(1, c), {u, v},
                         [u, v, nu, nv, c, nu_raw, nv_raw](Tape& t, std::size_t self) {
                           const double g = t.grad(self)[0];
                           // d c / d u = v/(nu nv) - c u/nu^2 when the norm is not floored.
                           accumulate(t, u, [&](Vector& gu) {
                             gu += g * v.data() / (nu * nv);
                             if (nu_raw >= kNormFloor) gu -= g * c * u.data() / (nu * nu);
                           });
                           accumulate(t, v, [&](Vector& gv) {
                             gv += g * u.data() / (nu * nv);
                             if (nv_raw >= kNormFloor) gv -= g * c * v.data() / (nv * nv);
                           });
                         });
}

DiffArray cosine_rows(const DiffArray& u, const DiffArray& v) {
  require_2d(u, "cosine_rows");
  require_same_shape(u, v, "cosine_rows");
  const Index m = u.rows(), n = u.cols();
  const CMapR U = u.matrix(), V = v.matrix();
  Vector nu_raw = U.rowwise().norm(), nv_raw = V.rowwise().norm();
  Vector nu(m), nv(m), out(m);
  for (Index i = 0; i < m; ++i) {
    nu[i] = floored_norm(nu_raw[i]);
    nv[i] = floored_norm(nv_raw[i]);
    out[i] = U.row(i).dot(V.row(i)) / (nu[i] * nv[i]);
  }
  return u.tape().record({m}, out, {u, v}, [u, v, m, n, nu, nv, nu_raw, nv_raw, out](Tape& t, std::size_t self) {
    const Vector& g = t.grad(self);
    const CMapR U = u.matrix(), V = v.matrix();
    accumulate(t, u, [&](Vector& gu) {
      MapR GU = as_matrix(gu, m, n);
      for (Index i = 0; i < m; ++i) {
        GU.row(i) += g[i] * V.row(i) / (nu[i] * nv[i]);
        if (nu_raw[i] >= kNormFloor) GU.row(i) -= g[i] * out[i] * U.row(i) / (nu[i] * nu[i]);
      }
    });
    accumulate(t, v, [&](Vector& gv) {
      MapR GV = as_matrix(gv, m, n);
      for (Index i = 0; i < m; ++i) {
        GV.row(i) += g[i] * U.row(i) / (nu[i] * nv[i]);
        if (nv_raw[i] >= kNormFloor) GV.row(i) -= g[i] * out[i] * V.row(i) / (nv[i] * nv[i]);
      }
    });
  });
}

DiffArray l2_normalize(const DiffArray& a) {
  const Index m = a.dim() == 2 ? a.rows() : 1;
  const Index n = a.size() / std::max<Index>(m, 1);
  const CMapR X = as_matrix(a.data(), m, n);
  Vector norms_raw = X.rowwise().norm();
  Vector norms(m);
  for (Index i = 0; i < m; ++i) norms[i] = floored_norm(norms_raw[i]);
  Vector out(a.size());
  as_matrix(out, m, n) = norms.cwiseInverse().asDiagonal() * X;
  return a.tape().record(a.shape(), out, {a}, [a, m, n, norms, norms_raw, out](Tape& t, std::size_t self) {
    accumulate(t, a, [&](Vector& ga) {
      const CMapR G = as_matrix(t.grad(self), m, n);
      const CMapR Y = as_matrix(out, m, n);
      MapR GA = as_matrix(ga, m, n);
      for (Index i = 0; i < m; ++i) {
        if (norms_raw[i] >= kNormFloor) {
          GA.row(i) += (G.row(i) - Y.row(i) * Y.row(i).dot(G.row(i))) / norms[i];
        } else {
          GA.row(i) += G.row(i) / norms[i];
        }
      }
    });
  });
}

DiffArray stop_gradient(const DiffArray& a) { return a.tape().constant(a.shape(), a.data()); }

DiffArray reshape(const DiffArray& a, Shape shape) {
  require(shape_size(shape) == a.size(), "reshape: cannot view " + shape_string(a.shape()) + " as " +
                                             shape_string(shape));
  return a.tape().record(std::move(shape), a.data(), {a}, [a](Tape& t, std::size_t self) {
    accumulate(t, a, [&](Vector& ga) { ga += t.grad(self); });
  });
}

DiffArray concat(std::span<const DiffArray> parts, int axis) {
  require(!parts.empty(), "concat: no inputs");
  require(axis == 0 || axis == 1, "concat: axis must be 0 or 1");
  Tape& tape = parts.front().tape();
  const bool flat = parts.front().dim() == 1;
  if (flat || axis == 0) {
    Index total = 0, rows = 0;
    const Index cols = flat ? 1 : parts.front().cols();
    for (const DiffArray& p : parts) {
      require(flat ? p.dim() == 1 : (p.dim() == 2 && p.cols() == cols),
              "concat: incompatible shape " + shape_string(p.shape()));
      total += p.size();
      rows += flat ? p.size() : p.rows();
    }
    require(flat || axis == 0, "concat: 1-D arrays only join along axis 0");
    Vector out(total);
    std::vector<Index> offsets;
    Index offset = 0;
    for (const DiffArray& p : parts) {
      offsets.push_back(offset);
      out.segment(offset, p.size()) = p.data();
      offset += p.size();
    }
    std::vector<DiffArray> inputs(parts.begin(), parts.end());
    Shape shape = flat ? Shape{rows} : Shape{rows, cols};
    return tape.record(std::move(shape), std::move(out), parts, [inputs, offsets](Tape& t, std::size_t self) {
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        accumulate(t, inputs[i], [&](Vector& g) { g += t.grad(self).segment(offsets[i], inputs[i].size()); });
      }
    });
  }
  const Index rows = parts.front().rows();
  Index cols = 0;
  std::vector<Index> col_offsets;
  for (const DiffArray& p : parts) {
    require(p.dim() == 2 && p.rows() == rows, "concat: incompatible shape " + shape_string(p.shape()));
    col_offsets.push_back(cols);
    cols += p.cols();
  }
  Vector out(rows * cols);
  MapR O = as_matrix(out, rows, cols);
  for (std::size_t i = 0; i < parts.size(); ++i) O.middleCols(col_offsets[i], parts[i].cols()) = parts[i].matrix();
  std::vector<DiffArray> inputs(parts.begin(), parts.end());
  return tape.record({rows, cols}, std::move(out), parts, [inputs, col_offsets, rows, cols](Tape& t, std::size_t self) {
    const CMapR G = as_matrix(t.grad(self), rows, cols);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const Index c = inputs[i].cols();
      accumulate(t, inputs[i], [&](Vector& g) { as_matrix(g, rows, c) += G.middleCols(col_offsets[i], c); });
    }
  });
}

DiffArray gather_rows(const DiffArray& a, std::span<const Index> rows) {
  require_2d(a, "gather_rows");
  const Index m = a.rows(), n = a.cols();
  const Index out_rows = static_cast<Index>(rows.size());
  Vector out(out_rows * n);
  MapR O = as_matrix(out, out_rows, n);
  const CMapR X = a.matrix();
  for (Index i = 0; i < out_rows; ++i) {
    require(rows[i] >= 0 && rows[i] < m, "gather_rows: row index out of range");
    O.row(i) = X.row(rows[i]);
  }
  std::vector<Index> index(rows.begin(), rows.end());
  return a.tape().record({out_rows, n}, std::move(out), {a}, [a, index, m, n](Tape& t, std::size_t self) {
    accumulate(t, a, [&](Vector& ga) {
      const CMapR G = as_matrix(t.grad(self), static_cast<Index>(index.size()), n);
      MapR GA = as_matrix(ga, m, n);
      for (std::size_t i = 0; i < index.size(); ++i) GA.row(index[i]) += G.row(static_cast<Index>(i));
    });
  });
}

DiffArray gather(const DiffArray& a, std::span<const Index> index, Shape shape) {
  require(shape_size(shape) == static_cast<Index>(index.size()), "gather: shape does not match index count");
  Vector out(static_cast<Index>(index.size()));
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] >= 0 && index[i] < a.size(), "gather: index out of range");
    out[static_cast<Index>(i)] = a.data()[index[i]];
  }
  std::vector<Index> idx(index.begin(), index.end());
  return a.tape().record(std::move(shape), std::move(out), {a}, [a, idx](Tape& t, std::size_t self) {
    accumulate(t, a, [&](Vector& ga) {
      const Vector& g = t.grad(self);
      for (std::size_t i = 0; i < idx.size(); ++i) ga[idx[i]] += g[static_cast<Index>(i)];
    });
  });
}

DiffArray block(const DiffArray& a, Index row, Index col, Index rows, Index cols) {
  require_2d(a, "block");
  const Index m = a.rows(), n = a.cols();
  require(row >= 0 && col >= 0 && row + rows <= m && col + cols <= n, "block: out of range");
  Vector out(rows * cols);
  as_matrix(out, rows, cols) = a.matrix().block(row, col, rows, cols);
  return a.tape().record({rows, cols}, std::move(out), {a}, [a, row, col, rows, cols, m, n](Tape& t, std::size_t self) {
    accumulate(t, a, [&](Vector& ga) {
      as_matrix(ga, m, n).block(row, col, rows, cols) += as_matrix(t.grad(self), rows, cols);
    });
  });
}

DiffArray segment(const DiffArray& a, Index offset, Index count) {
  require(offset >= 0 && count >= 0 && offset + count <= a.size(), "segment: out of range");
  return a.tape().record({count}, a.data().segment(offset, count), {a}, [a, offset, count](Tape& t, std::size_t self) {
    accumulate(t, a, [&](Vector& ga) { ga.segment(offset, count) += t.grad(self); });
  });
}

DiffArray softmax(const DiffArray& a, int axis) {
  require_2d(a, "softmax");
  require(axis == 0 || axis == 1, "softmax: axis must be 0 or 1");
  const Index m = a.rows(), n = a.cols();
  Vector out(m * n);
  MapR Y = as_matrix(out, m, n);
  const CMapR X = a.matrix();
  if (axis == 1) {
    for (Index i = 0; i < m; ++i) {
      Y.row(i) = (X.row(i).array() - X.row(i).maxCoeff()).exp();
      Y.row(i) /= Y.row(i).sum();
    }
  } else {
    for (Index j = 0; j < n; ++j) {
      Y.col(j) = (X.col(j).array() - X.col(j).maxCoeff()).exp();
      Y.col(j) /= Y.col(j).sum();
    }
  }
  return a.tape().record({m, n}, out, {a}, [a, out, m, n, axis](Tape& t, std::size_t self) {
    accumulate(t, a, [&](Vector& ga) {
      const CMapR G = as_matrix(t.grad(self), m, n);
      const CMapR Y = as_matrix(out, m, n);
      MapR GA = as_matrix(ga, m, n);
      if (axis == 1) {
        const Vector dots = G.cwiseProduct(Y).rowwise().sum();
        GA.array() += Y.array() * (G.colwise() - dots).array();
      } else {
        const Eigen::RowVectorXd dots = G.cwiseProduct(Y).colwise().sum();
        GA.array() += Y.array() * (G.rowwise() - dots).array();
      }
    });
  });
}

DiffArray conv2d(const DiffArray& input, const DiffArray& weight, const DiffArray& bias, Index stride,
                 Index padding) {
  require(input.dim() == 3, "conv2d: input must be [H x W x C], got " + shape_string(input.shape()));
  require(weight.dim() == 4, "conv2d: weight must be [kh x kw x Cin x Cout]");
  require(stride > 0 && padding >= 0, "conv2d: bad stride/padding");
  const Index H = input.shape()[0], W = input.shape()[1], C = input.shape()[2];
  const Index kh = weight.shape()[0], kw = weight.shape()[1], cout = weight.shape()[3];
  require(weight.shape()[2] == C, "conv2d: channel mismatch");
  require(bias.size() == cout, "conv2d: bias size mismatch");
  const Index Ho = (H + 2 * padding - kh) / stride + 1;
  const Index Wo = (W + 2 * padding - kw) / stride + 1;
  require(Ho > 0 && Wo > 0, "conv2d: kernel larger than padded input");

  // im2col: one row per output position, columns ordered (ky, kx, c) to
  // match the weight layout.
  auto cols = std::make_shared<RowMatrix>(RowMatrix::Zero(Ho * Wo, kh * kw * C));
  const Vector& x = input.data();
  for (Index oy = 0; oy < Ho; ++oy) {
    for (Index ox = 0; ox < Wo; ++ox) {
      auto row = cols->row(oy * Wo + ox);
      for (Index ky = 0; ky < kh; ++ky) {
        const Index iy = oy * stride + ky - padding;
        if (iy < 0 || iy >= H) continue;
        for (Index kx = 0; kx < kw; ++kx) {
          const Index ix = ox * stride + kx - padding;
          if (ix < 0 || ix >= W) continue;
          row.segment((ky * kw + kx) * C, C) = x.segment((iy * W + ix) * C, C).transpose();
        }
      }
    }
  }
  const CMapR Wm = as_matrix(weight.data(), kh * kw * C, cout);
  Vector out(Ho * Wo * cout);
  as_matrix(out, Ho * Wo, cout).noalias() = (*cols) * Wm;
  as_matrix(out, Ho * Wo, cout).rowwise() += bias.data().transpose();

  return input.tape().record(
      {Ho, Wo, cout}, std::move(out), {input, weight, bias},
      [=](Tape& t, std::size_t self) {
        const CMapR G = as_matrix(t.grad(self), Ho * Wo, cout);
        accumulate(t, bias, [&](Vector& gb) { gb += G.colwise().sum().transpose(); });
        accumulate(t, weight, [&](Vector& gw) {
          as_matrix(gw, kh * kw * C, cout).noalias() += cols->transpose() * G;
        });
        accumulate(t, input, [&](Vector& gx) {
          const RowMatrix dcols = G * as_matrix(weight.data(), kh * kw * C, cout).transpose();
          for (Index oy = 0; oy < Ho; ++oy) {
            for (Index ox = 0; ox < Wo; ++ox) {
              const auto row = dcols.row(oy * Wo + ox);
              for (Index ky = 0; ky < kh; ++ky) {
                const Index iy = oy * stride + ky - padding;
                if (iy < 0 || iy >= H) continue;
                for (Index kx = 0; kx < kw; ++kx) {
                  const Index ix = ox * stride + kx - padding;
                  if (ix < 0 || ix >= W) continue;
                  gx.segment((iy * W + ix) * C, C) += row.segment((ky * kw + kx) * C, C).transpose();
                }
              }
            }
          }
        });
      });
}

namespace {

// Shared backward of layer/batch normalization along the rows of `xhat`
// (each row normalized independently with inverse std inv_std[row]).
void normalize_backward(const RowMatrix& xhat, const Vector& inv_std, const RowMatrix& dxhat, RowMatrix& dx) {
  const Index n = xhat.cols();
  const Vector mean_d = dxhat.rowwise().mean();
  const Vector mean_dx = dxhat.cwiseProduct(xhat).rowwise().mean();
  (void)n;
  dx = inv_std.asDiagonal() * ((dxhat.colwise() - mean_d) - mean_dx.asDiagonal() * xhat);
}

}  // namespace

DiffArray layer_norm(const DiffArray& a, const DiffArray& gamma, const DiffArray& beta, double eps) {
  require_2d(a, "layer_norm");
  const Index m = a.rows(), n = a.cols();
  require(gamma.size() == n && beta.size() == n, "layer_norm: affine parameter size mismatch");
  const CMapR X = a.matrix();
  const Vector mu = X.rowwise().mean();
  auto xhat = std::make_shared<RowMatrix>(X.colwise() - mu);
  const Vector var = xhat->rowwise().squaredNorm() / static_cast<double>(n);
  const Vector inv_std = (var.array() + eps).rsqrt();
  *xhat = inv_std.asDiagonal() * (*xhat);
  Vector out(m * n);
  as_matrix(out, m, n) = (xhat->array().rowwise() * gamma.data().transpose().array()).rowwise() +
                         beta.data().transpose().array();
  return a.tape().record({m, n}, std::move(out), {a, gamma, beta}, [=](Tape& t, std::size_t self) {
    const CMapR G = as_matrix(t.grad(self), m, n);
    accumulate(t, gamma, [&](Vector& gg) { gg += G.cwiseProduct(*xhat).colwise().sum().transpose(); });
    accumulate(t, beta, [&](Vector& gb) { gb += G.colwise().sum().transpose(); });
    accumulate(t, a, [&](Vector& ga) {
      const RowMatrix dxhat = G.array().rowwise() * gamma.data().transpose().array();
      RowMatrix dx;
      normalize_backward(*xhat, inv_std, dxhat, dx);
      as_matrix(ga, m, n) += dx;
    });
  });
}

DiffArray batch_norm(const DiffArray& a, const DiffArray& gamma, const DiffArray& beta, BatchNormStats* stats,
                     bool training) {
  require_2d(a, "batch_norm");
  const Index m = a.rows(), n = a.cols();
  require(gamma.size() == n && beta.size() == n, "batch_norm: affine parameter size mismatch");
  const double eps = stats ? stats->eps : 1e-5;
  const CMapR X = a.matrix();
  if (!training) {
    require(stats != nullptr, "batch_norm: eval mode needs running statistics");
    const Vector inv_std = (stats->running_var.array() + eps).rsqrt();
    const Vector mult = inv_std.cwiseProduct(gamma.data());
    const Vector shift = beta.data() - stats->running_mean.cwiseProduct(mult);
    Vector out(m * n);
    as_matrix(out, m, n) = (X.array().rowwise() * mult.transpose().array()).rowwise() + shift.transpose().array();
    return a.tape().record({m, n}, std::move(out), {a, gamma, beta},
                           [a, gamma, beta, m, n, inv_std, mean = stats->running_mean](Tape& t, std::size_t self) {
                             const CMapR G = as_matrix(t.grad(self), m, n);
                             accumulate(t, a, [&](Vector& ga) {
                               as_matrix(ga, m, n).array() +=
                                   G.array().rowwise() * inv_std.cwiseProduct(gamma.data()).transpose().array();
                             });
                             accumulate(t, gamma, [&](Vector& gg) {
                               const RowMatrix xhat = (a.matrix().rowwise() - mean.transpose()).array().rowwise() *
                                                      inv_std.transpose().array();
                               gg += G.cwiseProduct(xhat).colwise().sum().transpose();
                             });
                             accumulate(t, beta, [&](Vector& gb) { gb += G.colwise().sum().transpose(); });
                           });
  }
  require(m > 1, "batch_norm: training mode needs at least two rows");
  const Vector mu = X.colwise().mean().transpose();
  // Work in the transposed layout so the shared row-normalization backward applies.
  auto xhat_t = std::make_shared<RowMatrix>(X.transpose().colwise() - mu);
  const Vector var = xhat_t->rowwise().squaredNorm() / static_cast<double>(m);
  const Vector inv_std = (var.array() + eps).rsqrt();
  *xhat_t = inv_std.asDiagonal() * (*xhat_t);
  if (stats) {
    const double unbiased = static_cast<double>(m) / static_cast<double>(m - 1);
    stats->running_mean = (1.0 - stats->momentum) * stats->running_mean + stats->momentum * mu;
    stats->running_var = (1.0 - stats->momentum) * stats->running_var + stats->momentum * unbiased * var;
  }
  Vector out(m * n);
  as_matrix(out, m, n) = (xhat_t->transpose().array().rowwise() * gamma.data().transpose().array()).rowwise() +
                         beta.data().transpose().array();
  return a.tape().record({m, n}, std::move(out), {a, gamma, beta}, [=](Tape& t, std::size_t self) {
    const CMapR G = as_matrix(t.grad(self), m, n);
    accumulate(t, gamma, [&](Vector& gg) {
      gg += G.transpose().cwiseProduct(*xhat_t).rowwise().sum();
    });
    accumulate(t, beta, [&](Vector& gb) { gb += G.colwise().sum().transpose(); });
    accumulate(t, a, [&](Vector& ga) {
      const RowMatrix dxhat_t = gamma.data().asDiagonal() * G.transpose();
      RowMatrix dx_t;
      normalize_backward(*xhat_t, inv_std, dxhat_t, dx_t);
      as_matrix(ga, m, n) += dx_t.transpose();
    });
  });
}

DiffArray cross_entropy(const DiffArray& logits, std::span<const int> targets) {
  require_2d(logits, "cross_entropy");
  const Index m = logits.rows(), c = logits.cols();
  require(static_cast<Index>(targets.size()) == m, "cross_entropy: one target per row");
  const CMapR X = logits.matrix();
  auto probs = std::make_shared<RowMatrix>(m, c);
  double loss = 0.0;
  for (Index i = 0; i < m; ++i) {
    require(targets[i] >= 0 && targets[i] < c, "cross_entropy: target out of range");
    const double mx = X.row(i).maxCoeff();
    probs->row(i) = (X.row(i).array() - mx).exp();
    const double z = probs->row(i).sum();
    probs->row(i) /= z;
    loss += -(X(i, targets[i]) - mx - std::log(z));
  }
  loss /= static_cast<double>(m);
  std::vector<int> tgt(targets.begin(), targets.end());
  return logits.tape().record({}, Vector::Constant(1, loss), {logits}, [logits, probs, tgt, m, c](Tape& t, std::size_t self) {
    accumulate(t, logits, [&](Vector& gl) {
      RowMatrix d = *probs;
      for (Index i = 0; i < m; ++i) d(i, tgt[i]) -= 1.0;
      as_matrix(gl, m, c) += (t.grad(self)[0] / static_cast<double>(m)) * d;
    });
  });
}

}  // namespace rrl
