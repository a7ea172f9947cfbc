#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ash/checkpoint.hpp"
#include "ash/ops.hpp"
#include "ash/rng.hpp"
#include "ash/tensor.hpp"

namespace ash::align {

// Reserved ids precede every word id.
inline constexpr int kPad = 0;
inline constexpr int kCls = 1;
inline constexpr int kSep = 2;
inline constexpr int kMask = 3;
inline constexpr int kUnk = 4;
inline constexpr int kNumReserved = 5;

class Vocabulary {
 public:
  Vocabulary();

  /// Reserved tokens plus every lowercase whitespace-separated word of
  /// `texts`, words numbered in sorted order.
  static Vocabulary from_corpus(std::span<const std::string> texts);

  int add(const std::string& word);
  /// Word id, or kUnk when absent.
  int id(std::string_view word) const;
  const std::string& token(int id) const;
  std::size_t size() const noexcept { return tokens_.size(); }
  bool is_special(int id) const noexcept { return id >= 0 && id < kNumReserved; }

  /// JSON object mapping token -> id.
  std::string to_json() const;
  static Vocabulary from_json(std::string_view json);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::map<std::string, int, std::less<>> ids_;
  std::vector<std::string> tokens_;
};

struct TokenSequence {
  std::vector<int> ids;
  std::vector<int> positions;
  std::vector<int> type_ids;  // 0 = text, 1 = image
  std::vector<std::uint8_t> attention_mask;

  std::size_t size() const noexcept { return ids.size(); }
};

/// Lowercase whitespace split wrapped as [CLS] words... [SEP]; unknown words
/// map to [UNK].
TokenSequence tokenize(std::string_view text, const Vocabulary& vocab);

struct TransformerConfig {
  std::size_t layers = 3;
  std::size_t heads = 4;
  std::size_t d_model = 64;
  std::size_t ff_dim = 256;
  std::size_t max_seq_len = 64;
  std::size_t vocab_size = 0;
  std::size_t visual_dim = 32;   // M1
  std::size_t max_patches = 16;  // size of the image position table
  std::size_t visual_classes = 16;  // M2, width of the masked-patch head
};

/// Embedded batch of equal-length sequences, [(batch*seq) x d]. For joint
/// batches the first `text_len` positions of each sequence are text (padded)
/// and the remaining ones are image tokens.
struct EmbeddedBatch {
  Tensor embeddings;
  std::vector<std::uint8_t> mask;
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::size_t text_len = 0;
};

/// Single-stream pre-norm transformer over [text || image] token sequences,
/// with BERT-style word/position/type embeddings and pooled task heads.
class AlignTransformer {
 public:
  AlignTransformer(const TransformerConfig& cfg, Rng& rng);

  const TransformerConfig& config() const noexcept { return cfg_; }

  /// Visual tokens [rows x M1] -> [rows x d] before position/type terms.
  Tensor project_visual(const Tensor& visual) const;

  /// Text-only batch, each sequence padded to the longest one.
  EmbeddedBatch embed_text(const std::vector<TokenSequence>& texts) const;

  /// Joint batch. Sequence i pairs texts[i] with the `patches` visual rows of
  /// sample visual_sample[i] in `visual` ([(samples*patches) x M1]).
  /// `zeroed_patches`, when non-empty, holds one flag per (i, patch) and
  /// replaces those visual tokens with zeros before projection.
  EmbeddedBatch embed_joint(const Tensor& visual, std::size_t patches, std::span<const std::size_t> visual_sample,
                            const std::vector<TokenSequence>& texts,
                            std::span<const std::uint8_t> zeroed_patches = {}) const;

  /// Single-sample convenience: [N x M1] visual tokens with one text ->
  /// [(text_len + N) x d].
  Tensor embed_joint(const Tensor& visual, const TokenSequence& text) const;

  /// Contextual states [(batch*seq) x d] after the final layer norm.
  Tensor encode(const EmbeddedBatch& batch, std::vector<AttentionProbs>* probs = nullptr) const;
  Tensor encode(const Tensor& embeddings, std::span<const std::uint8_t> mask, std::size_t batch, std::size_t seq,
                std::vector<AttentionProbs>* probs = nullptr) const;

  /// Row 0 of every sequence, [batch x d].
  static Tensor first_rows(const Tensor& contextual, std::size_t batch, std::size_t seq);

  /// Pooled heads.
  Tensor pooled(const Tensor& first_rows) const;  // tanh(affine)
  Tensor itm_logits(const Tensor& pooled) const;  // [rows x 2]
  Tensor mlm_logits(const Tensor& rows) const;    // [rows x vocab]
  Tensor mvm_logits(const Tensor& rows) const;    // [rows x M2]

  std::vector<Tensor> parameters() const;
  std::vector<NamedTensor> named_parameters(const std::string& prefix) const;

  /// Position tables, exposed for tests that zero them.
  Tensor& text_positions() noexcept { return pos_emb_; }
  Tensor& image_positions() noexcept { return img_pos_emb_; }

 private:
  struct Layer {
    Tensor ln1_g, ln1_b;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_g, ln2_b;
    Tensor w1, b1, w2, b2;
  };

  Tensor text_rows(const std::vector<TokenSequence>& texts, std::size_t text_len, std::vector<std::uint8_t>& mask) const;

  TransformerConfig cfg_;
  Tensor word_emb_, pos_emb_, type_emb_, img_pos_emb_;
  Tensor vis_w_, vis_b_;
  Tensor emb_ln_g_, emb_ln_b_;
  std::vector<Layer> layers_;
  Tensor final_ln_g_, final_ln_b_;
  Tensor pool_w_, pool_b_;
  Tensor itm_w_, itm_b_;
  Tensor mlm_w_, mlm_b_;
  Tensor mvm_w_, mvm_b_;
};

}  // namespace ash::align
