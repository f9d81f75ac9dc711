#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "s2cast/tape.hpp"
#include "s2cast/tensor.hpp"

namespace s2cast::nn {

/// rows x cols validity flags (1 = real slot). Ops that take a mask index its rows by
/// slice % rows, so one mask broadcasts over a leading batch.
struct SlotMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> valid;

  bool operator()(std::size_t r, std::size_t c) const { return valid[r * cols + c] != 0; }
  std::size_t valid_count(std::size_t r) const;
};

using IndexList = std::shared_ptr<const std::vector<std::int64_t>>;
using BiasIndex = std::shared_ptr<const std::vector<std::int32_t>>;

/// x[..., Din] * weight[Din, Dout] (+ bias[Dout]).
Var linear(Var x, Var weight);
Var linear(Var x, Var weight, Var bias);

Var add(Var a, Var b);
Var scale(Var x, Real factor);
Var relu(Var x);
Var reshape(Var x, Shape shape);

Var concat_last(Var a, Var b);
Var slice_last(Var x, std::size_t begin, std::size_t length);

/// [S, D] -> [S, m, D]; backward sums over m.
Var broadcast_expand(Var s, std::size_t m);
/// [...] -> [b, ...]; backward sums over the new axis.
Var repeat_leading(Var x, std::size_t b);

/// Views x as rows of its last extent; output row r copies x row rows[r], or zeros
/// when rows[r] < 0. Backward scatter-adds.
Var gather_rows(Var x, IndexList rows, Shape out_shape);

/// Zeroes rows of x[S, M, D] whose slot is invalid in mask row s % mask.rows.
Var mask_rows(Var x, const SlotMask& mask);

/// x[..., K] scaled element-wise by w[K] along the last axis.
Var scale_columns(Var x, Var w);

/// out[i] = table[index[i]], shaped as `shape`.
Var lookup(Var table, BiasIndex index, Shape shape);

/// Per head h: q_h k_h^T / sqrt(D / heads). [S, M, D] x [S, Mk, D] -> [S, H, M, Mk].
Var attention_scores(Var q, Var k, std::size_t heads);

/// Row softmax of scores[S, H, M, Mk] plus optional bias[Sb, M, Mk] (slice s uses
/// bias s % Sb). Masked keys get weight exactly 0. When M == Mk the mask also marks
/// query rows: a masked query row is uniform over the valid keys and carries no gradient.
Var masked_softmax(Var scores, const Var* bias, const SlotMask* mask);

/// weights[S, H, M, Mk] applied to v[S, Mk, D]; head h reads columns of width D / H.
Var attention_apply(Var weights, Var v);

/// Mean over valid slots of x[S, M, D] -> [S, D]; padded slots get no gradient.
Var masked_mean(Var x, const SlotMask* mask);

Var sum(Var x);
/// Mean absolute error against a constant target; the subgradient at 0 is 0.
Var mae_loss(Var pred, const Tensor& target);

struct FfnWeights {
  Var w1, b1, w2, b2;
};
/// linear -> ReLU -> linear.
Var ffn(Var x, const FfnWeights& w);

struct AttentionWeights {
  Var wq, wk, wv;
};

struct AttentionResult {
  Var context;  // [S, M, D], the weighted sum of values
  Var weights;  // [S, H, M, M]
};

/// Scaled dot-product self-attention with optional additive bias and key/query mask.
AttentionResult attention(Var x, const AttentionWeights& w, std::size_t heads, const Var* bias,
                          const SlotMask* mask);

}  // namespace s2cast::nn
