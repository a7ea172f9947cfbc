#include "ash/harness/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "ash/checkpoint.hpp"
#include "ash/errors.hpp"
#include "ash/ops.hpp"

namespace ash::harness {

namespace {

constexpr std::uint64_t kSpikeStream = 0x2001;
constexpr std::uint64_t kTrainStream = 0x3001;

std::vector<std::size_t> iota_ids(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> ids(end - begin);
  std::iota(ids.begin(), ids.end(), begin);
  return ids;
}

void check_finite(const Tensor& loss, const char* name, std::size_t step) {
  if (!std::isfinite(loss.item())) {
    throw DivergenceError(std::string(name) + " loss is not finite at step " + std::to_string(step));
  }
}

// Running mean of one loss component over an epoch.
struct Mean {
  double sum = 0.0;
  std::size_t count = 0;
  void add(const Tensor& t) {
    if (!t.defined()) return;
    sum += t.item();
    ++count;
  }
  std::optional<double> value() const {
    return count ? std::optional<double>(sum / static_cast<double>(count)) : std::nullopt;
  }
};

}  // namespace

align::Vocabulary caption_vocabulary() {
  align::Vocabulary v;
  std::vector<std::string> words{"a", "left", "of"};
  for (auto c : kColors) words.emplace_back(c);
  for (auto s : kShapes) words.emplace_back(s);
  return align::Vocabulary::from_corpus(words);
}

Trainer::Trainer(RunConfig cfg)
    : cfg_(std::move(cfg)),
      data_(generate_dataset(cfg_.dataset_size, cfg_.seed, cfg_.num_clusters, cfg_.image_size)),
      rng_(derive_seed(cfg_.seed, kTrainStream)) {
  cfg_.validate();
  model_ = std::make_unique<AshNet>(cfg_, caption_vocabulary());
  std::map<std::string, std::size_t> first_seen;
  const std::uint64_t spike_seed = derive_seed(cfg_.seed, kSpikeStream);
  for (const auto& p : data_) {
    tokens_.push_back(align::tokenize(p.caption, model_->vocabulary()));
    caption_key_.push_back(first_seen.emplace(p.caption, p.id).first->second);
    trains_.push_back(model_->spike_train(p.image, derive_seed(spike_seed, p.id)));
  }
  optimizer_ = model_->make_optimizer();
}

Tensor Trainer::images_of(std::span<const std::size_t> ids) const {
  const std::size_t s = cfg_.image_size;
  std::vector<double> flat;
  flat.reserve(ids.size() * 3 * s * s);
  for (std::size_t id : ids) flat.insert(flat.end(), data_[id].image.begin(), data_[id].image.end());
  return Tensor({ids.size(), 3, s, s}, std::move(flat));
}

std::vector<spike::SpikeTrain> Trainer::trains_of(std::span<const std::size_t> ids) const {
  std::vector<spike::SpikeTrain> out;
  out.reserve(ids.size());
  for (std::size_t id : ids) out.push_back(trains_[id]);
  return out;
}

std::vector<align::TokenSequence> Trainer::texts_of(std::span<const std::size_t> ids) const {
  std::vector<align::TokenSequence> out;
  out.reserve(ids.size());
  for (std::size_t id : ids) out.push_back(tokens_[id]);
  return out;
}

Trainer::StepLosses Trainer::step_losses(std::span<const std::size_t> ids, const sched::LossSet& active) {
  AshNet& m = *model_;
  const std::size_t b = ids.size();
  const std::size_t n = m.num_patches();
  const VisualOutputs vis = m.encode_visual(images_of(ids), trains_of(ids));
  const auto texts = texts_of(ids);
  const Tensor cls = m.text_cls(texts);
  StepLosses out;

  std::vector<std::size_t> keys(b);
  for (std::size_t i = 0; i < b; ++i) keys[i] = caption_key_[ids[i]];
  const Tensor img_e = m.itc_image_embedding(vis.tokens);
  const Tensor txt_e = m.itc_text_embedding(cls);
  if (active.itc) {
    out.itc =
        objectives::itc_loss(img_e, txt_e, m.itc_heads().temperature(), &m.image_queue(), &m.text_queue(), keys);
  }

  // One joint pass carries the ITM positives, the ITM negatives and the
  // masked MLM/MVM sequences.
  std::vector<std::size_t> negatives(b, 0);
  if (b >= 2) {
    NoGradGuard no_grad;
    negatives = objectives::hardest_negatives(matmul_nt(img_e.detach(), txt_e.detach()), keys);
  }
  std::vector<align::TokenSequence> joint_texts = texts;
  std::vector<std::size_t> joint_visual(3 * b);
  for (std::size_t i = 0; i < b; ++i) {
    joint_texts.push_back(texts[negatives[i]]);
    joint_visual[i] = joint_visual[b + i] = joint_visual[2 * b + i] = i;
  }
  std::vector<objectives::MaskedText> masked;
  for (std::size_t i = 0; i < b; ++i) {
    masked.push_back(objectives::mask_tokens(texts[i], cfg_.mask_rate, rng_));
    joint_texts.push_back(masked.back().tokens);
  }
  std::vector<std::uint8_t> zeroed;
  std::vector<std::size_t> mvm_patches;  // (i, patch) pairs as i*n + patch
  if (active.mvm) {
    zeroed.assign(3 * b * n, 0);
    for (std::size_t i = 0; i < b; ++i) {
      bool any = false;
      for (std::size_t p = 0; p < n; ++p) {
        if (rng_.uniform() < cfg_.mask_rate) {
          zeroed[(2 * b + i) * n + p] = 1;
          any = true;
        }
      }
      if (!any) zeroed[(2 * b + i) * n + rng_.below(n)] = 1;
      for (std::size_t p = 0; p < n; ++p)
        if (zeroed[(2 * b + i) * n + p]) mvm_patches.push_back(i * n + p);
    }
  }
  const auto joint = m.transformer().embed_joint(vis.tokens, n, joint_visual, joint_texts, zeroed);
  const Tensor ctx = m.transformer().encode(joint);
  const std::size_t L = joint.seq_len;

  if (active.itm) {
    const Tensor first = align::AlignTransformer::first_rows(ctx, 2 * b, L);
    std::vector<int> labels(2 * b, 0);
    std::fill_n(labels.begin(), b, 1);
    out.itm = objectives::itm_loss(m.transformer().itm_logits(m.transformer().pooled(first)), labels);
  }
  if (active.mlm) {
    std::vector<std::size_t> rows;
    std::vector<int> targets;
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t p = 0; p < masked[i].targets.size(); ++p) {
        if (masked[i].targets[p] < 0) continue;
        rows.push_back((2 * b + i) * L + p);
        targets.push_back(masked[i].targets[p]);
      }
    }
    out.mlm = objectives::mlm_loss(m.transformer().mlm_logits(gather_rows(ctx, rows)), targets);
  }
  if (active.mvm) {
    const auto labels = objectives::generate_spike_labels(vis.counts, mvm_patches);
    std::vector<std::size_t> rows;
    std::vector<int> targets;
    for (const auto& l : labels) {
      const std::size_t i = l.row / n, p = l.row % n;
      rows.push_back((2 * b + i) * L + joint.text_len + p);
      targets.push_back(l.silent ? -1 : l.label);
    }
    out.mvm = objectives::mvm_loss(m.transformer().mvm_logits(gather_rows(ctx, rows)), targets);
  }
  if (active.stua) {
    const Tensor r = objectives::stua_score(row_block_mean(vis.f_snn, n), cls, m.stua_heads());
    out.stua = objectives::stua_loss(r, m.stua_heads().temperature());
  }
  return out;
}

std::vector<EpochMetrics> Trainer::train(const TrainOptions& options) {
  const auto phases = sched::training_schedule(cfg_.warmup_epochs, cfg_.epochs);
  const bool write = !options.out_dir.empty();
  if (write) std::filesystem::create_directories(options.out_dir);
  const std::size_t n_train = cfg_.train_count();
  const auto train_ids = iota_ids(0, n_train);

  std::vector<EpochMetrics> history;
  std::size_t step = 0;
  for (std::size_t e = 0; e < phases.size(); ++e) {
    const sched::Phase phase = phases[e];
    const sched::LossSet active = sched::losses_for(phase);
    snn::set_frozen(optimizer_, sched::snn_frozen(phase));
    if (!cfg_.collector_enabled) optimizer_.set_frozen(snn::kCollectorGroup, true);

    sched::EpochPlan plan;
    if (phase == sched::Phase::kFrozenWarmup) {
      plan = sched::random_plan(n_train, cfg_.batch_size, rng_);
    } else {
      const Tensor sims = sched::similarity_matrix(image_embeddings(train_ids));
      plan = sched::reorganize_epoch(cfg_.retrieve_count, sims, cfg_.batch_size, rng_);
    }
    if (write && options.dump_plans) {
      write_text_file(options.out_dir / ("plan_epoch" + std::to_string(e + 1) + ".json"), plan.to_json() + "\n");
    }

    Mean itc, itm, mlm, mvm, stua;
    for (const auto& batch : plan.batches) {
      // A singleton batch has no in-batch negatives; pair-based losses sit
      // it out and ITC leans on the queues alone.
      sched::LossSet step_active = active;
      if (batch.size() < 2) {
        step_active.itm = step_active.stua = false;
        step_active.itc = step_active.itc && !model_->text_queue().empty();
      }
      ++step;
      optimizer_.zero_grad();
      StepLosses l = step_losses(batch, step_active);
      Tensor total;
      for (auto [t, name] : {std::pair{&l.itc, "itc"}, std::pair{&l.itm, "itm"}, std::pair{&l.mlm, "mlm"},
                             std::pair{&l.mvm, "mvm"}, std::pair{&l.stua, "stua"}}) {
        if (!t->defined()) continue;
        check_finite(*t, name, step);
        total = total.defined() ? add(total, *t) : *t;
      }
      total.backward();
      optimizer_.step();
      model_->itc_heads().clamp_temperature();
      model_->stua_heads().clamp_temperature();
      itc.add(l.itc);
      itm.add(l.itm);
      mlm.add(l.mlm);
      mvm.add(l.mvm);
      stua.add(l.stua);
      if (options.on_step) options.on_step({e + 1, step, phase, total.item()}, *model_);
    }

    const RecallResult recall = evaluate();
    EpochMetrics row;
    row.epoch = e + 1;
    row.step = step;
    row.itc = itc.value();
    row.itm = itm.value();
    row.mlm = mlm.value();
    row.mvm = mvm.value();
    row.stua = stua.value();
    row.r_at_1 = recall.r_at_1;
    row.r_at_5 = recall.r_at_5;
    row.r_at_10 = recall.r_at_10;
    row.phase = phase;
    history.push_back(row);
    if (options.on_epoch) options.on_epoch(row);
    if (write) write_text_file(options.out_dir / "metrics.csv", metrics_csv(history));
  }
  if (write) {
    model_->vocabulary().save(options.out_dir / "vocab.json");
    write_text_file(options.out_dir / "config.json", cfg_.to_json() + "\n");
    if (options.write_checkpoint) save(options.out_dir / "checkpoint_final.bin");
  }
  return history;
}

Tensor Trainer::image_embeddings(std::span<const std::size_t> ids) {
  NoGradGuard no_grad;
  std::vector<Tensor> parts;
  for (std::size_t i = 0; i < ids.size(); i += cfg_.batch_size) {
    const auto chunk = ids.subspan(i, std::min(cfg_.batch_size, ids.size() - i));
    const VisualOutputs vis = model_->encode_visual(images_of(chunk), trains_of(chunk));
    parts.push_back(model_->itc_image_embedding(vis.tokens));
  }
  return concat_rows(parts);
}

Tensor Trainer::text_embeddings(std::span<const std::size_t> ids) {
  NoGradGuard no_grad;
  std::vector<Tensor> parts;
  for (std::size_t i = 0; i < ids.size(); i += cfg_.batch_size) {
    const auto chunk = ids.subspan(i, std::min(cfg_.batch_size, ids.size() - i));
    parts.push_back(model_->itc_text_embedding(model_->text_cls(texts_of(chunk))));
  }
  return concat_rows(parts);
}

Tensor Trainer::evaluation_scores() {
  const auto ids = iota_ids(cfg_.train_count(), cfg_.train_count() + cfg_.eval_size);
  NoGradGuard no_grad;
  return matmul_nt(image_embeddings(ids), text_embeddings(ids));
}

RecallResult Trainer::evaluate() {
  const Tensor scores = evaluation_scores();
  const std::size_t n = scores.dim(0);
  return {recall_at_k(scores, std::min<std::size_t>(1, n)), recall_at_k(scores, std::min<std::size_t>(5, n)),
          recall_at_k(scores, std::min<std::size_t>(10, n)), n};
}

void Trainer::save(const std::filesystem::path& checkpoint) const {
  save_checkpoint(checkpoint, model_->named_parameters());
}

void Trainer::load(const std::filesystem::path& checkpoint) {
  auto targets = model_->named_parameters();
  restore_checkpoint(checkpoint, targets);
}

std::vector<RunConfig> sweep_cells(const RunConfig& base) {
  std::vector<RunConfig> cells{base};
  auto expand = [&cells](const auto& values, auto assign) {
    if (values.empty()) return;
    std::vector<RunConfig> next;
    for (const auto& c : cells) {
      for (const auto& v : values) {
        RunConfig copy = c;
        assign(copy, v);
        next.push_back(std::move(copy));
      }
    }
    cells = std::move(next);
  };
  expand(base.sweep.T, [](RunConfig& c, std::size_t v) { c.T = v; });
  expand(base.sweep.retrieve_count, [](RunConfig& c, std::size_t v) { c.retrieve_count = v; });
  expand(base.sweep.sr_mode, [](RunConfig& c, const std::string& v) { c.sr_mode = v; });
  expand(base.sweep.collector_enabled, [](RunConfig& c, bool v) { c.collector_enabled = v; });
  expand(base.sweep.seeds, [](RunConfig& c, std::uint64_t v) { c.seed = v; });
  for (auto& c : cells) {
    c.sweep = {};
    c.validate();
  }
  return cells;
}

std::vector<SweepRow> run_sweep(const RunConfig& base, const std::function<void(const SweepRow&)>& progress) {
  const auto cells = sweep_cells(base);
  const std::size_t per_cell = std::max<std::size_t>(1, base.sweep.seeds.size());
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const RunConfig& c = cells[i];
    Trainer trainer(c);
    const auto history = trainer.train();
    const EpochMetrics& last = history.back();
    SweepRow row{i / per_cell, c.seed,          c.T,           c.retrieve_count, c.sr_mode, c.collector_enabled,
                 last.total_loss(), last.r_at_1, last.r_at_5, last.r_at_10};
    rows.push_back(row);
    if (progress) progress(row);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = kSweepHeader;
  out += '\n';
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%llu,%zu,%zu,%s,%s,%.6f,%.6f,%.6f,%.6f\n", r.cell,
                  static_cast<unsigned long long>(r.seed), r.T, r.retrieve_count, r.sr_mode.c_str(),
                  r.collector_enabled ? "true" : "false", r.final_loss, r.r_at_1, r.r_at_5, r.r_at_10);
    out += buf;
  }
  return out;
}

}  // namespace ash::harness
