#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ash/tensor.hpp"

namespace ash {

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

/// [m x k] * [k x n] -> [m x n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// [m x k] * [n x k]^T -> [m x n].
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// x [m x k] * w [k x n] + bias [n]. `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
Tensor transpose(const Tensor& a);

// ---------------------------------------------------------------------------
// Elementwise. Binary ops accept equal shapes or a single-element operand.
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor neg(const Tensor& a);
Tensor square(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);

// ---------------------------------------------------------------------------
// Reductions and row-wise ops on 2-D tensors
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Row softmax of x / temperature, stabilised by max subtraction.
Tensor softmax_rows(const Tensor& x, double temperature = 1.0);
Tensor log_softmax_rows(const Tensor& x);

/// Mean cross-entropy over rows whose target is >= 0; rows with target -1 are
/// ignored. Returns 0 when every row is ignored.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);

/// Divides each row by its L2 norm. All-zero rows stay zero.
Tensor l2_normalize_rows(const Tensor& x);

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// [(b*n) x c] -> [b x c], averaging each consecutive block of n rows.
Tensor row_block_mean(const Tensor& x, std::size_t block);

// ---------------------------------------------------------------------------
// Indexing and layout
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape);
/// Rows of a 2-D tensor in the given order (repeats allowed). Also serves as
/// embedding lookup.
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);

// ---------------------------------------------------------------------------
// Convolution (NCHW, cross-correlation)
// ---------------------------------------------------------------------------

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

Tensor conv2d(const Tensor& input, const Tensor& kernel, Conv2dOptions opts = {});
/// Adds bias[c] to every element of channel c of an NCHW tensor.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);
/// Non-overlapping k x k average pooling.
Tensor avg_pool2d(const Tensor& x, std::size_t k);
/// [b x c x gh x gw] -> [(b*gh*gw) x c]; row order is sample, then patch row,
/// then patch column.
Tensor patch_tokens(const Tensor& x);

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

/// Optional capture of attention probabilities, laid out
/// [batch][head][query][key].
struct AttentionProbs {
  std::size_t batch = 0, heads = 0, seq = 0;
  std::vector<double> values;
  double at(std::size_t b, std::size_t h, std::size_t q, std::size_t k) const {
    return values[((b * heads + h) * seq + q) * seq + k];
  }
};

/// Scaled dot-product multi-head self-attention over `batch` sequences of
/// length `seq`, stored as [(batch*seq) x d]. `key_mask[b*seq + j] == 0`
/// excludes key j of sequence b (its logit is -inf). Each sequence needs at
/// least one unmasked key.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t batch,
                            std::size_t seq, std::size_t heads, std::span<const std::uint8_t> key_mask,
                            AttentionProbs* probs = nullptr);

}  // namespace ash
