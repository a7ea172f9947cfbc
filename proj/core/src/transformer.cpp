#include "ash/transformer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "ash/errors.hpp"

namespace ash::align {

namespace {

const char* const kReservedTokens[kNumReserved] = {"[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]"};

std::vector<std::string> split_lower(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

Tensor param(Shape shape, Rng& rng, double stddev) {
  Tensor t = Tensor::randn(std::move(shape), rng, stddev);
  t.set_requires_grad(true);
  return t;
}

Tensor constant_param(Shape shape, double value) {
  Tensor t(std::move(shape), value);
  t.set_requires_grad(true);
  return t;
}

double fan_in_std(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

}  // namespace

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  for (int i = 0; i < kNumReserved; ++i) {
    tokens_.emplace_back(kReservedTokens[i]);
    ids_.emplace(kReservedTokens[i], i);
  }
}

Vocabulary Vocabulary::from_corpus(std::span<const std::string> texts) {
  std::set<std::string> words;
  for (const auto& t : texts)
    for (auto& w : split_lower(t)) words.insert(std::move(w));
  Vocabulary v;
  for (const auto& w : words) v.add(w);
  return v;
}

int Vocabulary::add(const std::string& word) {
  if (auto it = ids_.find(word); it != ids_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(word);
  ids_.emplace(word, id);
  return id;
}

int Vocabulary::id(std::string_view word) const {
  auto it = ids_.find(word);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ParameterError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::string Vocabulary::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < tokens_.size(); ++i) j[tokens_[i]] = i;
  return j.dump(2);
}

Vocabulary Vocabulary::from_json(std::string_view json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("vocabulary is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("vocabulary JSON must be an object of token -> id");
  std::vector<std::string> tokens(j.size());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_number_unsigned() || it.value().get<std::size_t>() >= tokens.size()) {
      throw FormatError("vocabulary id for '" + it.key() + "' is not a dense index");
    }
    tokens[it.value().get<std::size_t>()] = it.key();
  }
  for (int i = 0; i < kNumReserved; ++i) {
    if (tokens.size() <= static_cast<std::size_t>(i) || tokens[static_cast<std::size_t>(i)] != kReservedTokens[i]) {
      throw FormatError(std::string("vocabulary must reserve ") + kReservedTokens[i] + " as id " + std::to_string(i));
    }
  }
  Vocabulary v;
  for (std::size_t i = kNumReserved; i < tokens.size(); ++i) {
    if (tokens[i].empty()) throw FormatError("vocabulary id " + std::to_string(i) + " is unassigned");
    v.add(tokens[i]);
  }
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << to_json() << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab) {
  TokenSequence seq;
  seq.ids.push_back(kCls);
  for (const auto& w : split_lower(text)) seq.ids.push_back(vocab.id(w));
  seq.ids.push_back(kSep);
  const std::size_t n = seq.ids.size();
  seq.positions.resize(n);
  for (std::size_t i = 0; i < n; ++i) seq.positions[i] = static_cast<int>(i);
  seq.type_ids.assign(n, 0);
  seq.attention_mask.assign(n, 1);
  return seq;
}

// ---------------------------------------------------------------------------
// AlignTransformer

AlignTransformer::AlignTransformer(const TransformerConfig& cfg, Rng& rng) : cfg_(cfg) {
  const std::size_t d = cfg.d_model;
  if (cfg.heads == 0 || d % cfg.heads != 0) {
    throw ParameterError("transformer model dim " + std::to_string(d) + " not divisible by " +
                         std::to_string(cfg.heads) + " heads");
  }
  if (cfg.vocab_size == 0) throw ParameterError("transformer vocabulary size must be positive");
  word_emb_ = param({cfg.vocab_size, d}, rng, 0.02);
  pos_emb_ = param({cfg.max_seq_len, d}, rng, 0.02);
  type_emb_ = param({2, d}, rng, 0.02);
  img_pos_emb_ = param({cfg.max_patches, d}, rng, 0.02);
  vis_w_ = param({cfg.visual_dim, d}, rng, fan_in_std(cfg.visual_dim));
  vis_b_ = constant_param({d}, 0.0);
  emb_ln_g_ = constant_param({d}, 1.0);
  emb_ln_b_ = constant_param({d}, 0.0);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    Layer L;
    L.ln1_g = constant_param({d}, 1.0);
    L.ln1_b = constant_param({d}, 0.0);
    L.wq = param({d, d}, rng, fan_in_std(d));
    L.wk = param({d, d}, rng, fan_in_std(d));
    L.wv = param({d, d}, rng, fan_in_std(d));
    L.wo = param({d, d}, rng, fan_in_std(d));
    L.bq = constant_param({d}, 0.0);
    L.bk = constant_param({d}, 0.0);
    L.bv = constant_param({d}, 0.0);
    L.bo = constant_param({d}, 0.0);
    L.ln2_g = constant_param({d}, 1.0);
    L.ln2_b = constant_param({d}, 0.0);
    L.w1 = param({d, cfg.ff_dim}, rng, fan_in_std(d));
    L.b1 = constant_param({cfg.ff_dim}, 0.0);
    L.w2 = param({cfg.ff_dim, d}, rng, fan_in_std(cfg.ff_dim));
    L.b2 = constant_param({d}, 0.0);
    layers_.push_back(std::move(L));
  }
  final_ln_g_ = constant_param({d}, 1.0);
  final_ln_b_ = constant_param({d}, 0.0);
  pool_w_ = param({d, d}, rng, fan_in_std(d));
  pool_b_ = constant_param({d}, 0.0);
  itm_w_ = param({d, 2}, rng, fan_in_std(d));
  itm_b_ = constant_param({2}, 0.0);
  mlm_w_ = param({d, cfg.vocab_size}, rng, fan_in_std(d));
  mlm_b_ = constant_param({cfg.vocab_size}, 0.0);
  mvm_w_ = param({d, cfg.visual_classes}, rng, fan_in_std(d));
  mvm_b_ = constant_param({cfg.visual_classes}, 0.0);
}

Tensor AlignTransformer::project_visual(const Tensor& visual) const { return linear(visual, vis_w_, vis_b_); }

Tensor AlignTransformer::text_rows(const std::vector<TokenSequence>& texts, std::size_t text_len,
                                   std::vector<std::uint8_t>& mask) const {
  std::vector<std::size_t> ids, positions, types;
  for (const auto& t : texts) {
    for (std::size_t p = 0; p < text_len; ++p) {
      const bool real = p < t.size();
      const int id = real ? t.ids[p] : kPad;
      if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_size) {
        throw ParameterError("token id " + std::to_string(id) + " outside the embedding table");
      }
      ids.push_back(static_cast<std::size_t>(id));
      positions.push_back(real ? static_cast<std::size_t>(t.positions[p]) : p);
      types.push_back(real ? static_cast<std::size_t>(t.type_ids[p]) : 0);
      mask.push_back(real ? t.attention_mask[p] : 0);
    }
  }
  return add(add(gather_rows(word_emb_, ids), gather_rows(pos_emb_, positions)), gather_rows(type_emb_, types));
}

EmbeddedBatch AlignTransformer::embed_text(const std::vector<TokenSequence>& texts) const {
  if (texts.empty()) throw ContractError("embed_text: empty batch");
  std::size_t text_len = 0;
  for (const auto& t : texts) text_len = std::max(text_len, t.size());
  if (text_len > cfg_.max_seq_len) {
    throw SequenceLengthError("text of " + std::to_string(text_len) + " tokens exceeds maximum sequence length " +
                              std::to_string(cfg_.max_seq_len));
  }
  EmbeddedBatch out;
  out.batch = texts.size();
  out.seq_len = text_len;
  out.text_len = text_len;
  out.embeddings = layer_norm_rows(text_rows(texts, text_len, out.mask), emb_ln_g_, emb_ln_b_);
  return out;
}

EmbeddedBatch AlignTransformer::embed_joint(const Tensor& visual, std::size_t patches,
                                            std::span<const std::size_t> visual_sample,
                                            const std::vector<TokenSequence>& texts,
                                            std::span<const std::uint8_t> zeroed_patches) const {
  const std::size_t b = texts.size();
  if (b == 0 || visual_sample.size() != b) throw ContractError("embed_joint: texts and visual samples must pair up");
  if (patches > cfg_.max_patches) {
    throw SequenceLengthError(std::to_string(patches) + " image tokens exceed the image position table of " +
                              std::to_string(cfg_.max_patches));
  }
  if (!zeroed_patches.empty() && zeroed_patches.size() != b * patches) {
    throw DimensionError("embed_joint: zeroed patch flags have length " + std::to_string(zeroed_patches.size()));
  }
  std::size_t text_len = 0;
  for (const auto& t : texts) text_len = std::max(text_len, t.size());
  const std::size_t seq = text_len + patches;
  if (seq > cfg_.max_seq_len) {
    throw SequenceLengthError("joint sequence of " + std::to_string(seq) + " tokens exceeds maximum " +
                              std::to_string(cfg_.max_seq_len));
  }

  EmbeddedBatch out;
  out.batch = b;
  out.seq_len = seq;
  out.text_len = text_len;
  std::vector<std::uint8_t> text_mask;
  Tensor text = text_rows(texts, text_len, text_mask);

  std::vector<std::size_t> vis_rows, img_pos;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t p = 0; p < patches; ++p) {
      vis_rows.push_back(visual_sample[i] * patches + p);
      img_pos.push_back(p);
    }
  Tensor tokens = gather_rows(visual, vis_rows);
  if (!zeroed_patches.empty()) {
    std::vector<double> keep(tokens.numel(), 1.0);
    const std::size_t m1 = tokens.dim(1);
    for (std::size_t r = 0; r < zeroed_patches.size(); ++r)
      if (zeroed_patches[r]) std::fill_n(keep.begin() + static_cast<std::ptrdiff_t>(r * m1), m1, 0.0);
    tokens = mul(tokens, Tensor(tokens.shape(), std::move(keep)));
  }
  const std::vector<std::size_t> image_type(b * patches, 1);
  Tensor image = add(add(project_visual(tokens), gather_rows(img_pos_emb_, img_pos)), gather_rows(type_emb_, image_type));

  std::vector<std::size_t> order;
  order.reserve(b * seq);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t p = 0; p < text_len; ++p) {
      order.push_back(i * text_len + p);
      out.mask.push_back(text_mask[i * text_len + p]);
    }
    for (std::size_t p = 0; p < patches; ++p) {
      order.push_back(b * text_len + i * patches + p);
      out.mask.push_back(1);
    }
  }
  out.embeddings = layer_norm_rows(gather_rows(concat_rows({text, image}), order), emb_ln_g_, emb_ln_b_);
  return out;
}

Tensor AlignTransformer::embed_joint(const Tensor& visual, const TokenSequence& text) const {
  const std::size_t sample = 0;
  return embed_joint(visual, visual.dim(0), std::span(&sample, 1), {text}).embeddings;
}

Tensor AlignTransformer::encode(const EmbeddedBatch& batch, std::vector<AttentionProbs>* probs) const {
  return encode(batch.embeddings, batch.mask, batch.batch, batch.seq_len, probs);
}

Tensor AlignTransformer::encode(const Tensor& embeddings, std::span<const std::uint8_t> mask, std::size_t batch,
                                std::size_t seq, std::vector<AttentionProbs>* probs) const {
  if (probs) probs->clear();
  Tensor x = embeddings;
  for (const auto& L : layers_) {
    Tensor h = layer_norm_rows(x, L.ln1_g, L.ln1_b);
    AttentionProbs captured;
    Tensor ctx = multi_head_attention(linear(h, L.wq, L.bq), linear(h, L.wk, L.bk), linear(h, L.wv, L.bv), batch, seq,
                                      cfg_.heads, mask, probs ? &captured : nullptr);
    if (probs) probs->push_back(std::move(captured));
    x = add(x, linear(ctx, L.wo, L.bo));
    Tensor h2 = layer_norm_rows(x, L.ln2_g, L.ln2_b);
    x = add(x, linear(relu(linear(h2, L.w1, L.b1)), L.w2, L.b2));
  }
  return layer_norm_rows(x, final_ln_g_, final_ln_b_);
}

Tensor AlignTransformer::first_rows(const Tensor& contextual, std::size_t batch, std::size_t seq) {
  std::vector<std::size_t> rows(batch);
  for (std::size_t i = 0; i < batch; ++i) rows[i] = i * seq;
  return gather_rows(contextual, rows);
}

Tensor AlignTransformer::pooled(const Tensor& first) const { return tanh(linear(first, pool_w_, pool_b_)); }

Tensor AlignTransformer::itm_logits(const Tensor& pooled) const { return linear(pooled, itm_w_, itm_b_); }

Tensor AlignTransformer::mlm_logits(const Tensor& rows) const { return linear(rows, mlm_w_, mlm_b_); }

Tensor AlignTransformer::mvm_logits(const Tensor& rows) const { return linear(rows, mvm_w_, mvm_b_); }

std::vector<NamedTensor> AlignTransformer::named_parameters(const std::string& prefix) const {
  std::vector<NamedTensor> out{{prefix + "word_emb", word_emb_},   {prefix + "pos_emb", pos_emb_},
                               {prefix + "type_emb", type_emb_},   {prefix + "img_pos_emb", img_pos_emb_},
                               {prefix + "vis_w", vis_w_},         {prefix + "vis_b", vis_b_},
                               {prefix + "emb_ln_g", emb_ln_g_},   {prefix + "emb_ln_b", emb_ln_b_}};
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    const std::string p = prefix + "layer" + std::to_string(l) + ".";
    for (const auto& [name, t] : std::initializer_list<std::pair<const char*, const Tensor*>>{
             {"ln1_g", &L.ln1_g}, {"ln1_b", &L.ln1_b}, {"wq", &L.wq},       {"bq", &L.bq},
             {"wk", &L.wk},       {"bk", &L.bk},       {"wv", &L.wv},       {"bv", &L.bv},
             {"wo", &L.wo},       {"bo", &L.bo},       {"ln2_g", &L.ln2_g}, {"ln2_b", &L.ln2_b},
             {"w1", &L.w1},       {"b1", &L.b1},       {"w2", &L.w2},       {"b2", &L.b2}}) {
      out.push_back({p + name, *t});
    }
  }
  out.insert(out.end(), {{prefix + "final_ln_g", final_ln_g_},
                         {prefix + "final_ln_b", final_ln_b_},
                         {prefix + "pool_w", pool_w_},
                         {prefix + "pool_b", pool_b_},
                         {prefix + "itm_w", itm_w_},
                         {prefix + "itm_b", itm_b_},
                         {prefix + "mlm_w", mlm_w_},
                         {prefix + "mlm_b", mlm_b_},
                         {prefix + "mvm_w", mvm_w_},
                         {prefix + "mvm_b", mvm_b_}});
  return out;
}

std::vector<Tensor> AlignTransformer::parameters() const {
  std::vector<Tensor> out;
  for (auto& nt : named_parameters("")) out.push_back(nt.tensor);
  return out;
}

}  // namespace ash::align
