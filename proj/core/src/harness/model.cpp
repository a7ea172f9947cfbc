#include "ash/harness/model.hpp"

#include "ash/errors.hpp"
#include "ash/ops.hpp"

namespace ash::harness {

namespace {

constexpr std::uint64_t kInitStream = 0x1001;

cnn::ConvStackConfig cnn_config(const RunConfig& c) {
  cnn::ConvStackConfig out;
  out.channels = {8, 16, c.M1};
  out.patch_stride = c.patch_stride;
  return out;
}

snn::SnnEncoderConfig snn_config(const RunConfig& c) {
  snn::SnnEncoderConfig out;
  out.patches = c.num_patches();
  out.patch_area = c.patch_stride * c.patch_stride;
  out.hidden = c.snn_hidden;
  out.m2 = c.M2;
  out.lif.leak = c.lif_leak;
  out.lif.threshold = c.lif_threshold;
  out.lif.surrogate_width = c.surrogate_width;
  return out;
}

align::TransformerConfig transformer_config(const RunConfig& c, std::size_t vocab_size) {
  align::TransformerConfig out;
  out.layers = c.layers;
  out.heads = c.heads;
  out.d_model = c.d_model;
  out.ff_dim = c.ff_dim;
  out.max_seq_len = c.max_seq_len;
  out.vocab_size = vocab_size;
  out.visual_dim = c.M1;
  out.max_patches = c.num_patches();
  out.visual_classes = c.M2;
  return out;
}

template <class... Lists>
std::vector<Tensor> join(const Lists&... lists) {
  std::vector<Tensor> out;
  (out.insert(out.end(), lists.begin(), lists.end()), ...);
  return out;
}

}  // namespace

VisualMode parse_visual_mode(const std::string& name) {
  if (name == "trainable") return VisualMode::kTrainable;
  if (name == "fixed_zero") return VisualMode::kFixedZero;
  if (name == "fixed_one") return VisualMode::kFixedOne;
  if (name == "snn_only") return VisualMode::kSnnOnly;
  throw ConfigError("sr_mode", "unknown mode '" + name + "'");
}

// Members draw from init_rng_ in declaration order, so initialization is a
// pure function of the seed.
AshNet::AshNet(const RunConfig& cfg, align::Vocabulary vocab)
    : cfg_(cfg),
      vocab_(std::move(vocab)),
      mode_(parse_visual_mode(cfg.sr_mode)),
      patches_(cfg.num_patches()),
      init_rng_(derive_seed(cfg.seed, kInitStream)),
      cnn_(cnn_config(cfg), init_rng_),
      snn_(snn_config(cfg), init_rng_),
      collector_(cfg.M1, cfg.M2, init_rng_),
      gate_(cfg.M1, init_rng_),
      transformer_(transformer_config(cfg, vocab_.size()), init_rng_),
      itc_heads_(cfg.M1, cfg.d_model, cfg.d_align, init_rng_, cfg.temperature),
      stua_heads_(cfg.M1, cfg.d_model, cfg.d_align, init_rng_, cfg.temperature),
      image_queue_(cfg.queue_capacity),
      text_queue_(cfg.queue_capacity) {}

spike::SpikeTrain AshNet::spike_train(std::span<const double> image, std::uint64_t seed) const {
  const auto gray = spike::grayscale_patches(image, 3, cfg_.image_size, cfg_.image_size, cfg_.patch_stride);
  return spike::encode_probabilistic(gray, cfg_.T, seed);
}

VisualOutputs AshNet::encode_visual(const Tensor& images, const std::vector<spike::SpikeTrain>& trains) const {
  VisualOutputs out;
  out.f_cnn = cnn_.encode_concrete(images);
  out.counts = snn_.encode_abstract(trains);
  out.f_snn = collector_.readout(out.counts);
  switch (mode_) {
    case VisualMode::kTrainable:
      out.tokens = fusion::fuse(gate_.summary_ratio(out.f_cnn), out.f_snn, out.f_cnn, fusion::SrMode::kTrainable);
      break;
    case VisualMode::kFixedOne:
      out.tokens = fusion::fuse({}, out.f_snn, out.f_cnn, fusion::SrMode::kFixedOne);
      break;
    case VisualMode::kFixedZero:
      out.tokens = fusion::fuse({}, out.f_snn, out.f_cnn, fusion::SrMode::kFixedZero);
      break;
    case VisualMode::kSnnOnly:
      out.tokens = out.f_snn;
      break;
  }
  return out;
}

Tensor AshNet::text_cls(const std::vector<align::TokenSequence>& texts) const {
  const auto batch = transformer_.embed_text(texts);
  return align::AlignTransformer::first_rows(transformer_.encode(batch), batch.batch, batch.seq_len);
}

Tensor AshNet::itc_image_embedding(const Tensor& tokens) const {
  return itc_heads_.embed_visual(row_block_mean(tokens, patches_));
}

Optimizer AshNet::make_optimizer() const {
  Optimizer opt;
  OptimizerHyper adamw;
  adamw.lr = cfg_.lr_transformer;
  adamw.weight_decay = cfg_.weight_decay;
  opt.add_group({"transformer",
                 join(transformer_.parameters(), itc_heads_.parameters(), stua_heads_.parameters()),
                 OptimizerKind::kAdamW, adamw, false});
  adamw.lr = cfg_.lr_fusion;
  opt.add_group({"fusion", gate_.parameters(), OptimizerKind::kAdamW, adamw, false});

  OptimizerHyper sgd;
  sgd.momentum = cfg_.momentum;
  sgd.lr = cfg_.lr_cnn;
  opt.add_group({"cnn", cnn_.parameters(), OptimizerKind::kSgdMomentum, sgd, false});
  sgd.lr = cfg_.lr_snn;
  opt.add_group({snn::kSnnGroup, snn_.parameters(), OptimizerKind::kSgdMomentum, sgd, false});
  sgd.lr = cfg_.lr_collector;
  opt.add_group({snn::kCollectorGroup, {collector_.codebook()}, OptimizerKind::kSgdMomentum, sgd,
                 !cfg_.collector_enabled});
  return opt;
}

std::vector<NamedTensor> AshNet::named_parameters() const {
  std::vector<NamedTensor> out;
  auto append = [&out](std::vector<NamedTensor> part) { out.insert(out.end(), part.begin(), part.end()); };
  append(cnn_.named_parameters("cnn."));
  append(spiking_parameters());
  append(gate_.named_parameters("gate."));
  append(transformer_.named_parameters("transformer."));
  append(itc_heads_.named_parameters("itc."));
  append(stua_heads_.named_parameters("stua."));
  return out;
}

std::vector<NamedTensor> AshNet::spiking_parameters() const {
  auto out = snn_.named_parameters("snn.");
  out.push_back({"collector.codebook", collector_.codebook()});
  return out;
}

}  // namespace ash::harness
