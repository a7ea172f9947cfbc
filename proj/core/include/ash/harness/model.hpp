#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ash/cnn.hpp"
#include "ash/fusion.hpp"
#include "ash/harness/config.hpp"
#include "ash/objectives.hpp"
#include "ash/optim.hpp"
#include "ash/snn.hpp"
#include "ash/spike_codec.hpp"
#include "ash/transformer.hpp"

namespace ash::harness {

/// How the visual streams are combined. kSnnOnly feeds F_SNN alone.
enum class VisualMode { kTrainable, kFixedZero, kFixedOne, kSnnOnly };

VisualMode parse_visual_mode(const std::string& name);

struct VisualOutputs {
  Tensor f_cnn;   // [(b*N) x M1]
  Tensor counts;  // [(b*N) x M2] final-layer spike counts
  Tensor f_snn;   // [(b*N) x M1]
  Tensor tokens;  // fused visual tokens, [(b*N) x M1]
};

/// Full hybrid encoder: CNN and SNN streams, collector, summary-ratio gate,
/// alignment transformer and the contrastive heads and queues.
class AshNet {
 public:
  AshNet(const RunConfig& cfg, align::Vocabulary vocab);

  const RunConfig& config() const noexcept { return cfg_; }
  const align::Vocabulary& vocabulary() const noexcept { return vocab_; }
  std::size_t num_patches() const noexcept { return patches_; }

  /// Grayscale patch-major rate code of one c x h x w image.
  spike::SpikeTrain spike_train(std::span<const double> image, std::uint64_t seed) const;

  /// `images` is [b x 3 x h x w]; `trains` holds one train per image.
  VisualOutputs encode_visual(const Tensor& images, const std::vector<spike::SpikeTrain>& trains) const;

  /// Contextual [CLS] rows of a text-only pass, [b x d].
  Tensor text_cls(const std::vector<align::TokenSequence>& texts) const;
  /// Normalized contrastive embeddings.
  Tensor itc_image_embedding(const Tensor& tokens) const;
  Tensor itc_text_embedding(const Tensor& cls) const { return itc_heads_.embed_text(cls); }

  cnn::ConvStack& cnn() noexcept { return cnn_; }
  snn::SnnEncoder& snn() noexcept { return snn_; }
  snn::SemanticCollector& collector() noexcept { return collector_; }
  fusion::SummaryGate& gate() noexcept { return gate_; }
  align::AlignTransformer& transformer() noexcept { return transformer_; }
  const align::AlignTransformer& transformer() const noexcept { return transformer_; }
  objectives::AlignmentHeads& itc_heads() noexcept { return itc_heads_; }
  objectives::AlignmentHeads& stua_heads() noexcept { return stua_heads_; }
  const objectives::AlignmentHeads& stua_heads() const noexcept { return stua_heads_; }
  objectives::NegativeQueue& image_queue() noexcept { return image_queue_; }
  objectives::NegativeQueue& text_queue() noexcept { return text_queue_; }

  /// Groups: transformer and fusion (AdamW); cnn, snn, collector (SGD).
  Optimizer make_optimizer() const;
  /// Every trainable tensor with a stable dotted name.
  std::vector<NamedTensor> named_parameters() const;
  /// Spiking weights, tdBN affine and the collector codebook.
  std::vector<NamedTensor> spiking_parameters() const;

 private:
  RunConfig cfg_;
  align::Vocabulary vocab_;
  VisualMode mode_;
  std::size_t patches_;
  Rng init_rng_;
  cnn::ConvStack cnn_;
  snn::SnnEncoder snn_;
  snn::SemanticCollector collector_;
  fusion::SummaryGate gate_;
  align::AlignTransformer transformer_;
  objectives::AlignmentHeads itc_heads_;
  objectives::AlignmentHeads stua_heads_;
  objectives::NegativeQueue image_queue_;
  objectives::NegativeQueue text_queue_;
};

}  // namespace ash::harness
