#include "s2cast/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace s2cast::nn {

namespace {

using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

[[noreturn]] void shape_error(const std::string& op, const std::string& what) {
  throw std::invalid_argument(op + ": " + what);
}

void require_same_shape(const std::string& op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    shape_error(op, "shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

std::size_t last_dim(const Tensor& t) { return t.rank() == 0 ? 1 : t.shape().back(); }

void accumulate(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

std::size_t SlotMask::valid_count(std::size_t r) const {
  std::size_t c = 0;
  for (std::size_t j = 0; j < cols; ++j) c += valid[r * cols + j] != 0;
  return c;
}

Var linear(Var x, Var weight) {
  const auto& xv = x.value();
  const auto& wv = weight.value();
  if (wv.rank() != 2 || xv.rank() < 1 || last_dim(xv) != wv.dim(0)) {
    shape_error("linear", "cannot apply weight " + to_string(wv.shape()) + " to input " +
                              to_string(xv.shape()));
  }
  const std::size_t din = wv.dim(0);
  const std::size_t dout = wv.dim(1);
  const std::size_t rows = xv.size() / din;
  Shape out_shape = xv.shape();
  out_shape.back() = dout;
  Tensor out(out_shape);
  MatMap(out.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dout)).noalias() =
      ConstMatMap(xv.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(din)) *
      ConstMatMap(wv.data(), static_cast<Eigen::Index>(din), static_cast<Eigen::Index>(dout));
  Tape& tape = *x.tape();
  const auto xi = x.id();
  const auto wi = weight.id();
  return tape.record("linear", std::move(out), {x, weight}, [=](Tape& t, std::size_t self) {
    const auto r = static_cast<Eigen::Index>(rows);
    const auto di = static_cast<Eigen::Index>(din);
    const auto d0 = static_cast<Eigen::Index>(dout);
    ConstMatMap g(t.grad(self).data(), r, d0);
    if (t.requires_grad(xi)) {
      MatMap(t.grad(xi).data(), r, di).noalias() +=
          g * ConstMatMap(t.value(wi).data(), di, d0).transpose();
    }
    if (t.requires_grad(wi)) {
      MatMap(t.grad(wi).data(), di, d0).noalias() +=
          ConstMatMap(t.value(xi).data(), r, di).transpose() * g;
    }
  });
}

Var linear(Var x, Var weight, Var bias) {
  const auto& bv = bias.value();
  if (bv.rank() != 1 || bv.dim(0) != weight.value().dim(1)) {
    shape_error("linear", "bias shape " + to_string(bv.shape()) + " does not match weight " +
                              to_string(weight.value().shape()));
  }
  Var y = linear(x, weight);
  Tensor out = y.value();
  const std::size_t dout = bv.dim(0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % dout];
  const auto yi = y.id();
  const auto bi = bias.id();
  return x.tape()->record("bias_add", std::move(out), {y, bias}, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(yi)) accumulate(t.grad(yi), g);
    if (t.requires_grad(bi)) {
      auto& gb = t.grad(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % dout] += g[i];
    }
  });
}

Var add(Var a, Var b) {
  require_same_shape("add", a.value(), b.value());
  Tensor out = a.value();
  accumulate(out, b.value());
  const auto ai = a.id();
  const auto bi = b.id();
  return a.tape()->record("add", std::move(out), {a, b}, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ai)) accumulate(t.grad(ai), g);
    if (t.requires_grad(bi)) accumulate(t.grad(bi), g);
  });
}

Var scale(Var x, Real factor) {
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor;
  const auto xi = x.id();
  return x.tape()->record("scale", std::move(out), {x}, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
  });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > Real{0} ? out[i] : Real{0};
  const auto xi = x.id();
  return x.tape()->record("relu", std::move(out), {x}, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& xv = t.value(xi);
    auto& gx = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > Real{0}) gx[i] += g[i];
    }
  });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  const auto xi = x.id();
  return x.tape()->record("reshape", std::move(out), {x}, [=](Tape& t, std::size_t self) {
    accumulate(t.grad(xi), t.grad(self));
  });
}

Var concat_last(Var a, Var b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() == 0 || av.rank() != bv.rank()) shape_error("concat_last", "rank mismatch");
  for (std::size_t i = 0; i + 1 < av.rank(); ++i) {
    if (av.dim(i) != bv.dim(i)) {
      shape_error("concat_last", "leading extents differ: " + to_string(av.shape()) + " vs " +
                                     to_string(bv.shape()));
    }
  }
  const std::size_t da = last_dim(av);
  const std::size_t db = last_dim(bv);
  const std::size_t rows = av.size() / da;
  Shape shape = av.shape();
  shape.back() = da + db;
  Tensor out(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.data() + r * da, da, out.data() + r * (da + db));
    std::copy_n(bv.data() + r * db, db, out.data() + r * (da + db) + da);
  }
  const auto ai = a.id();
  const auto bi = b.id();
  return a.tape()->record("concat_last", std::move(out), {a, b}, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ai)) {
      auto& ga = t.grad(ai);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < da; ++j) ga[r * da + j] += g[r * (da + db) + j];
      }
    }
    if (t.requires_grad(bi)) {
      auto& gb = t.grad(bi);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < db; ++j) gb[r * db + j] += g[r * (da + db) + da + j];
      }
    }
  });
}

Var slice_last(Var x, std::size_t begin, std::size_t length) {
  const auto& xv = x.value();
  const std::size_t d = last_dim(xv);
  if (xv.rank() == 0 || begin + length > d) shape_error("slice_last", "slice out of range");
  const std::size_t rows = xv.size() / d;
  Shape shape = xv.shape();
  shape.back() = length;
  Tensor out(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(xv.data() + r * d + begin, length, out.data() + r * length);
  }
  const auto xi = x.id();
  return x.tape()->record("slice_last", std::move(out), {x}, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(xi);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < length; ++j) gx[r * d + begin + j] += g[r * length + j];
    }
  });
}

Var broadcast_expand(Var s, std::size_t m) {
  const auto& sv = s.value();
  if (sv.rank() != 2) shape_error("broadcast_expand", "expects [S, D], got " + to_string(sv.shape()));
  const std::size_t slices = sv.dim(0);
  const std::size_t d = sv.dim(1);
  Tensor out({slices, m, d});
  for (std::size_t i = 0; i < slices; ++i) {
    for (std::size_t j = 0; j < m; ++j) std::copy_n(sv.data() + i * d, d, out.data() + (i * m + j) * d);
  }
  const auto si = s.id();
  return s.tape()->record("broadcast_expand", std::move(out), {s}, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gs = t.grad(si);
    for (std::size_t i = 0; i < slices; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t k = 0; k < d; ++k) gs[i * d + k] += g[(i * m + j) * d + k];
      }
    }
  });
}

Var repeat_leading(Var x, std::size_t b) {
  const auto& xv = x.value();
  Shape shape{b};
  shape.insert(shape.end(), xv.shape().begin(), xv.shape().end());
  Tensor out(shape);
  const std::size_t n = xv.size();
  for (std::size_t i = 0; i < b; ++i) std::copy_n(xv.data(), n, out.data() + i * n);
  const auto xi = x.id();
  return x.tape()->record("repeat_leading", std::move(out), {x}, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(xi);
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t k = 0; k < n; ++k) gx[k] += g[i * n + k];
    }
  });
}

Var gather_rows(Var x, IndexList rows, Shape out_shape) {
  const auto& xv = x.value();
  const std::size_t d = last_dim(xv);
  const std::size_t in_rows = xv.size() / d;
  if (numel(out_shape) != rows->size() * d) {
    shape_error("gather_rows", "output shape " + to_string(out_shape) + " does not hold " +
                                   std::to_string(rows->size()) + " rows of width " + std::to_string(d));
  }
  Tensor out(std::move(out_shape));
  for (std::size_t r = 0; r < rows->size(); ++r) {
    const auto src = (*rows)[r];
    if (src < 0) continue;
    if (static_cast<std::size_t>(src) >= in_rows) shape_error("gather_rows", "row index out of range");
    std::copy_n(xv.data() + static_cast<std::size_t>(src) * d, d, out.data() + r * d);
  }
  const auto xi = x.id();
  return x.tape()->record("gather_rows", std::move(out), {x}, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(xi);
    for (std::size_t r = 0; r < rows->size(); ++r) {
      const auto src = (*rows)[r];
      if (src < 0) continue;
      const auto base = static_cast<std::size_t>(src) * d;
      for (std::size_t k = 0; k < d; ++k) gx[base + k] += g[r * d + k];
    }
  });
}

Var mask_rows(Var x, const SlotMask& mask) {
  const auto& xv = x.value();
  if (xv.rank() != 3 || xv.dim(1) != mask.cols || mask.rows == 0) {
    shape_error("mask_rows", "input " + to_string(xv.shape()) + " incompatible with mask");
  }
  const std::size_t slices = xv.dim(0);
  const std::size_t m = xv.dim(1);
  const std::size_t d = xv.dim(2);
  auto keep = std::make_shared<std::vector<std::uint8_t>>(slices * m);
  for (std::size_t s = 0; s < slices; ++s) {
    for (std::size_t j = 0; j < m; ++j) (*keep)[s * m + j] = mask(s % mask.rows, j) ? 1 : 0;
  }
  Tensor out = xv;
  for (std::size_t r = 0; r < slices * m; ++r) {
    if (!(*keep)[r]) std::fill_n(out.data() + r * d, d, Real{0});
  }
  const auto xi = x.id();
  return x.tape()->record("mask_rows", std::move(out), {x}, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(xi);
    for (std::size_t r = 0; r < keep->size(); ++r) {
      if (!(*keep)[r]) continue;
      for (std::size_t k = 0; k < d; ++k) gx[r * d + k] += g[r * d + k];
    }
  });
}

Var scale_columns(Var x, Var w) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  if (wv.rank() != 1 || last_dim(xv) != wv.dim(0)) {
    shape_error("scale_columns", "weight " + to_string(wv.shape()) + " vs input " + to_string(xv.shape()));
  }
  const std::size_t k = wv.dim(0);
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= wv[i % k];
  const auto xi = x.id();
  const auto wi = w.id();
  return x.tape()->record("scale_columns", std::move(out), {x, w}, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(xi)) {
      const auto& wv2 = t.value(wi);
      auto& gx = t.grad(xi);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * wv2[i % k];
    }
    if (t.requires_grad(wi)) {
      const auto& xv2 = t.value(xi);
      auto& gw = t.grad(wi);
      for (std::size_t i = 0; i < g.size(); ++i) gw[i % k] += g[i] * xv2[i];
    }
  });
}

Var lookup(Var table, BiasIndex index, Shape shape) {
  const auto& tv = table.value();
  if (tv.rank() != 1) shape_error("lookup", "table must be rank 1");
  if (numel(shape) != index->size()) shape_error("lookup", "index count does not match shape");
  Tensor out(std::move(shape));
  for (std::size_t i = 0; i < index->size(); ++i) {
    const auto j = (*index)[i];
    if (j < 0 || static_cast<std::size_t>(j) >= tv.size()) shape_error("lookup", "index out of range");
    out[i] = tv[static_cast<std::size_t>(j)];
  }
  const auto ti = table.id();
  return table.tape()->record("lookup", std::move(out), {table}, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gt = t.grad(ti);
    for (std::size_t i = 0; i < index->size(); ++i) gt[static_cast<std::size_t>((*index)[i])] += g[i];
  });
}

Var attention_scores(Var q, Var k, std::size_t heads) {
  const auto& qv = q.value();
  const auto& kv = k.value();
  if (qv.rank() != 3 || kv.rank() != 3 || qv.dim(0) != kv.dim(0) || qv.dim(2) != kv.dim(2)) {
    shape_error("attention_scores", "incompatible q " + to_string(qv.shape()) + " and k " +
                                        to_string(kv.shape()));
  }
  const std::size_t slices = qv.dim(0);
  const std::size_t m = qv.dim(1);
  const std::size_t mk = kv.dim(1);
  const std::size_t d = qv.dim(2);
  if (heads == 0 || d % heads != 0) shape_error("attention_scores", "width not divisible by heads");
  const std::size_t hd = d / heads;
  const Real inv = Real{1} / std::sqrt(static_cast<Real>(hd));
  Tensor out({slices, heads, m, mk});
  for (std::size_t s = 0; s < slices; ++s) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < m; ++i) {
        const Real* qi = qv.data() + (s * m + i) * d + h * hd;
        Real* row = out.data() + ((s * heads + h) * m + i) * mk;
        for (std::size_t j = 0; j < mk; ++j) {
          const Real* kj = kv.data() + (s * mk + j) * d + h * hd;
          Real acc = 0;
          for (std::size_t c = 0; c < hd; ++c) acc += qi[c] * kj[c];
          row[j] = acc * inv;
        }
      }
    }
  }
  const auto qi_id = q.id();
  const auto ki_id = k.id();
  return q.tape()->record("attention_scores", std::move(out), {q, k}, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& qv2 = t.value(qi_id);
    const auto& kv2 = t.value(ki_id);
    const bool need_q = t.requires_grad(qi_id);
    const bool need_k = t.requires_grad(ki_id);
    Tensor* gq = need_q ? &t.grad(qi_id) : nullptr;
    Tensor* gk = need_k ? &t.grad(ki_id) : nullptr;
    for (std::size_t s = 0; s < slices; ++s) {
      for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < m; ++i) {
          const Real* row = g.data() + ((s * heads + h) * m + i) * mk;
          for (std::size_t j = 0; j < mk; ++j) {
            const Real gij = row[j] * inv;
            if (gij == Real{0}) continue;
            const std::size_t qoff = (s * m + i) * d + h * hd;
            const std::size_t koff = (s * mk + j) * d + h * hd;
            for (std::size_t c = 0; c < hd; ++c) {
              if (gq) (*gq)[qoff + c] += gij * kv2[koff + c];
              if (gk) (*gk)[koff + c] += gij * qv2[qoff + c];
            }
          }
        }
      }
    }
  });
}

Var masked_softmax(Var scores, const Var* bias, const SlotMask* mask) {
  const auto& sv = scores.value();
  if (sv.rank() != 4) shape_error("masked_softmax", "expects [S, H, M, Mk], got " + to_string(sv.shape()));
  const std::size_t slices = sv.dim(0);
  const std::size_t heads = sv.dim(1);
  const std::size_t m = sv.dim(2);
  const std::size_t mk = sv.dim(3);
  std::size_t bias_slices = 0;
  if (bias) {
    const auto& bv = bias->value();
    if (bv.rank() != 3 || bv.dim(1) != m || bv.dim(2) != mk || bv.dim(0) == 0) {
      shape_error("masked_softmax", "bias " + to_string(bv.shape()) + " not broadcastable to " +
                                        to_string(sv.shape()));
    }
    bias_slices = bv.dim(0);
  }
  if (mask && (mask->cols != mk || mask->rows == 0)) {
    shape_error("masked_softmax", "mask width does not match key count");
  }
  const bool mask_queries = mask && m == mk;

  // row_state: 0 = normal, 1 = masked query (uniform over valid keys, no gradient).
  auto row_state = std::make_shared<std::vector<std::uint8_t>>(slices * heads * m, 0);
  Tensor out(sv.shape());
  for (std::size_t s = 0; s < slices; ++s) {
    const std::size_t mr = mask ? s % mask->rows : 0;
    if (mask && mask->valid_count(mr) == 0) {
      throw std::invalid_argument("masked_softmax: a row has no valid keys");
    }
    const Real* brow_base = bias ? bias->value().data() + (s % bias_slices) * m * mk : nullptr;
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t row_id = (s * heads + h) * m + i;
        const Real* in = sv.data() + row_id * mk;
        Real* o = out.data() + row_id * mk;
        if (mask_queries && !(*mask)(mr, i)) {
          (*row_state)[row_id] = 1;
          const Real u = Real{1} / static_cast<Real>(mask->valid_count(mr));
          for (std::size_t j = 0; j < mk; ++j) o[j] = (*mask)(mr, j) ? u : Real{0};
          continue;
        }
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::size_t j = 0; j < mk; ++j) {
          if (mask && !(*mask)(mr, j)) continue;
          const Real z = in[j] + (brow_base ? brow_base[i * mk + j] : Real{0});
          mx = std::max(mx, z);
        }
        Real total = 0;
        for (std::size_t j = 0; j < mk; ++j) {
          if (mask && !(*mask)(mr, j)) {
            o[j] = 0;
            continue;
          }
          const Real z = in[j] + (brow_base ? brow_base[i * mk + j] : Real{0});
          o[j] = std::exp(z - mx);
          total += o[j];
        }
        for (std::size_t j = 0; j < mk; ++j) o[j] /= total;
      }
    }
  }
  const auto si = scores.id();
  const auto bi = bias ? bias->id() : std::size_t{0};
  const bool has_bias = bias != nullptr;
  Tape& tape = *scores.tape();
  auto backward = [=](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& w = t.value(self);
    const bool need_s = t.requires_grad(si);
    const bool need_b = has_bias && t.requires_grad(bi);
    Tensor* gs = need_s ? &t.grad(si) : nullptr;
    Tensor* gb = need_b ? &t.grad(bi) : nullptr;
    for (std::size_t s = 0; s < slices; ++s) {
      for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < m; ++i) {
          const std::size_t row_id = (s * heads + h) * m + i;
          if ((*row_state)[row_id]) continue;
          const Real* wr = w.data() + row_id * mk;
          const Real* gr = g.data() + row_id * mk;
          Real dot = 0;
          for (std::size_t j = 0; j < mk; ++j) dot += wr[j] * gr[j];
          for (std::size_t j = 0; j < mk; ++j) {
            const Real dz = wr[j] * (gr[j] - dot);
            if (gs) (*gs)[row_id * mk + j] += dz;
            if (gb) (*gb)[((s % bias_slices) * m + i) * mk + j] += dz;
          }
        }
      }
    }
  };
  if (bias) return tape.record("masked_softmax", std::move(out), {scores, *bias}, backward);
  return tape.record("masked_softmax", std::move(out), {scores}, backward);
}

Var attention_apply(Var weights, Var v) {
  const auto& wv = weights.value();
  const auto& vv = v.value();
  if (wv.rank() != 4 || vv.rank() != 3 || wv.dim(0) != vv.dim(0) || wv.dim(3) != vv.dim(1)) {
    shape_error("attention_apply", "weights " + to_string(wv.shape()) + " vs values " +
                                       to_string(vv.shape()));
  }
  const std::size_t slices = wv.dim(0);
  const std::size_t heads = wv.dim(1);
  const std::size_t m = wv.dim(2);
  const std::size_t mk = wv.dim(3);
  const std::size_t d = vv.dim(2);
  if (d % heads != 0) shape_error("attention_apply", "width not divisible by heads");
  const std::size_t hd = d / heads;
  Tensor out({slices, m, d});
  for (std::size_t s = 0; s < slices; ++s) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < m; ++i) {
        const Real* wr = wv.data() + ((s * heads + h) * m + i) * mk;
        Real* o = out.data() + (s * m + i) * d + h * hd;
        for (std::size_t j = 0; j < mk; ++j) {
          const Real a = wr[j];
          if (a == Real{0}) continue;
          const Real* vj = vv.data() + (s * mk + j) * d + h * hd;
          for (std::size_t c = 0; c < hd; ++c) o[c] += a * vj[c];
        }
      }
    }
  }
  const auto wi = weights.id();
  const auto vi = v.id();
  return v.tape()->record("attention_apply", std::move(out), {weights, v}, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& wv2 = t.value(wi);
    const auto& vv2 = t.value(vi);
    Tensor* gw = t.requires_grad(wi) ? &t.grad(wi) : nullptr;
    Tensor* gv = t.requires_grad(vi) ? &t.grad(vi) : nullptr;
    for (std::size_t s = 0; s < slices; ++s) {
      for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < m; ++i) {
          const std::size_t row_id = (s * heads + h) * m + i;
          const Real* gi = g.data() + (s * m + i) * d + h * hd;
          for (std::size_t j = 0; j < mk; ++j) {
            const std::size_t voff = (s * mk + j) * d + h * hd;
            if (gw) {
              Real acc = 0;
              for (std::size_t c = 0; c < hd; ++c) acc += gi[c] * vv2[voff + c];
              (*gw)[row_id * mk + j] += acc;
            }
            if (gv) {
              const Real a = wv2[row_id * mk + j];
              if (a == Real{0}) continue;
              for (std::size_t c = 0; c < hd; ++c) (*gv)[voff + c] += a * gi[c];
            }
          }
        }
      }
    }
  });
}

Var masked_mean(Var x, const SlotMask* mask) {
  const auto& xv = x.value();
  if (xv.rank() != 3) shape_error("masked_mean", "expects [S, M, D], got " + to_string(xv.shape()));
  const std::size_t slices = xv.dim(0);
  const std::size_t m = xv.dim(1);
  const std::size_t d = xv.dim(2);
  if (mask && (mask->cols != m || mask->rows == 0)) shape_error("masked_mean", "mask width mismatch");
  auto coeff = std::make_shared<std::vector<Real>>(slices * m, Real{0});
  for (std::size_t s = 0; s < slices; ++s) {
    const std::size_t count = mask ? mask->valid_count(s % mask->rows) : m;
    if (count == 0) throw std::invalid_argument("masked_mean: a row has no valid slots");
    for (std::size_t j = 0; j < m; ++j) {
      if (!mask || (*mask)(s % mask->rows, j)) (*coeff)[s * m + j] = Real{1} / static_cast<Real>(count);
    }
  }
  Tensor out({slices, d});
  for (std::size_t s = 0; s < slices; ++s) {
    for (std::size_t j = 0; j < m; ++j) {
      const Real c = (*coeff)[s * m + j];
      if (c == Real{0}) continue;
      for (std::size_t k = 0; k < d; ++k) out[s * d + k] += c * xv[(s * m + j) * d + k];
    }
  }
  const auto xi = x.id();
  return x.tape()->record("masked_mean", std::move(out), {x}, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(xi);
    for (std::size_t s = 0; s < slices; ++s) {
      for (std::size_t j = 0; j < m; ++j) {
        const Real c = (*coeff)[s * m + j];
        if (c == Real{0}) continue;
        for (std::size_t k = 0; k < d; ++k) gx[(s * m + j) * d + k] += c * g[s * d + k];
      }
    }
  });
}

Var sum(Var x) {
  Real total = 0;
  for (auto v : x.value().values()) total += v;
  const auto xi = x.id();
  return x.tape()->record("sum", Tensor::scalar(total), {x}, [=](Tape& t, std::size_t self) {
    const Real g = t.grad(self)[0];
    auto& gx = t.grad(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

Var mae_loss(Var pred, const Tensor& target) {
  require_same_shape("mae_loss", pred.value(), target);
  const auto& pv = pred.value();
  const std::size_t n = pv.size();
  if (n == 0) shape_error("mae_loss", "empty prediction");
  Real total = 0;
  for (std::size_t i = 0; i < n; ++i) total += std::abs(pv[i] - target[i]);
  auto sign = std::make_shared<std::vector<Real>>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Real diff = pv[i] - target[i];
    (*sign)[i] = diff > Real{0} ? Real{1} : (diff < Real{0} ? Real{-1} : Real{0});
  }
  const Real inv_n = Real{1} / static_cast<Real>(n);
  const auto pi = pred.id();
  return pred.tape()->record("mae_loss", Tensor::scalar(total * inv_n), {pred},
                             [=](Tape& t, std::size_t self) {
                               const Real g = t.grad(self)[0] * inv_n;
                               auto& gp = t.grad(pi);
                               for (std::size_t i = 0; i < n; ++i) gp[i] += g * (*sign)[i];
                             });
}

Var ffn(Var x, const FfnWeights& w) {
  return linear(relu(linear(x, w.w1, w.b1)), w.w2, w.b2);
}

AttentionResult attention(Var x, const AttentionWeights& w, std::size_t heads, const Var* bias,
                          const SlotMask* mask) {
  Var q = linear(x, w.wq);
  Var k = linear(x, w.wk);
  Var v = linear(x, w.wv);
  Var weights = masked_softmax(attention_scores(q, k, heads), bias, mask);
  return {attention_apply(weights, v), weights};
}

}  // namespace s2cast::nn
