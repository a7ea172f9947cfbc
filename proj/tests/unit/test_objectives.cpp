#include <doctest.h>

#include <cmath>
#include <set>

#include "ash/errors.hpp"
#include "ash/objectives.hpp"
#include "ash/ops.hpp"
#include "ash/optim.hpp"
#include "gradcheck.hpp"

using namespace ash;
using namespace ash::objectives;
using ash::testing::grad_check;
using ash::testing::random_leaf;

namespace {

constexpr double kGradTol = 1e-6;

// Mean over rows of -log softmax(row)[target], skipping -1 targets.
double direct_ce(const std::vector<double>& logits, std::size_t cols, const std::vector<int>& targets) {
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] < 0) continue;
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += std::exp(logits[r * cols + j]);
    total += std::log(z) - logits[r * cols + static_cast<std::size_t>(targets[r])];
    ++counted;
  }
  return total / static_cast<double>(counted);
}

Tensor normalized(std::size_t rows, std::size_t cols, Rng& rng, bool grad) {
  Tensor t = l2_normalize_rows(Tensor::uniform({rows, cols}, rng, -1.0, 1.0)).detach();
  t.set_requires_grad(grad);
  return t;
}

align::TokenSequence sequence(std::vector<int> ids) {
  align::TokenSequence s;
  s.ids = std::move(ids);
  for (std::size_t i = 0; i < s.ids.size(); ++i) {
    s.positions.push_back(static_cast<int>(i));
    s.type_ids.push_back(0);
    s.attention_mask.push_back(s.ids[i] == align::kPad ? 0 : 1);
  }
  return s;
}

}  // namespace

TEST_SUITE("pretrain-objectives") {
  TEST_CASE("itc: identical pairs give ln B") {
    for (std::size_t b : {2u, 5u, 16u}) {
      const Tensor e({b, 4}, 0.5);
      CHECK(std::abs(itc_loss(e, e, Tensor::scalar(0.07)).item() - std::log(static_cast<double>(b))) <= 1e-12);
    }
  }

  TEST_CASE("itc: orthogonal pairs at small temperature approach zero") {
    const Tensor e({2, 2}, {1, 0, 0, 1});
    CHECK(itc_loss(e, e, Tensor::scalar(1e-3)).item() < 1e-12);
  }

  TEST_CASE("itc: hand-built 2x2 equals the direct evaluation") {
    const Tensor img({2, 2}, {1, 0, 0.6, 0.8});
    const Tensor txt({2, 2}, {0.8, 0.6, 0, 1});
    // s = img * txt^T = [[0.8, 0], [0.96, 0.8]]
    const std::vector<double> i2t{0.8, 0.0, 0.96, 0.8}, t2i{0.8, 0.96, 0.0, 0.8};
    const double expect = 0.5 * (direct_ce(i2t, 2, {0, 1}) + direct_ce(t2i, 2, {0, 1}));
    CHECK(std::abs(itc_loss(img, txt, Tensor::scalar(1.0)).item() - expect) <= 1e-12);
  }

  TEST_CASE("itc: queued rows join the negatives and are pushed afterwards") {
    Rng rng(31);
    const Tensor img = normalized(3, 4, rng, false), txt = normalized(3, 4, rng, false);
    const Tensor qi = normalized(2, 4, rng, false), qt = normalized(2, 4, rng, false);
    NegativeQueue iq(8), tq(8);
    iq.push(qi);
    tq.push(qt);
    const double tau = 0.5;
    const auto i2t = matmul_nt(img, concat_rows({txt, qt})).to_vector();
    const auto t2i = matmul_nt(txt, concat_rows({img, qi})).to_vector();
    std::vector<double> a(i2t), b(t2i);
    for (auto& v : a) v /= tau;
    for (auto& v : b) v /= tau;
    const double expect = 0.5 * (direct_ce(a, 5, {0, 1, 2}) + direct_ce(b, 5, {0, 1, 2}));
    CHECK(std::abs(itc_loss(img, txt, Tensor::scalar(tau), &iq, &tq).item() - expect) <= 1e-12);
    CHECK(iq.size() == 5);
    CHECK(tq.rows().back() == std::vector<double>(txt.data().end() - 4, txt.data().end()));
  }

  TEST_CASE("itc: rows sharing a caption key leave each other's negatives") {
    Rng rng(33);
    const Tensor img = normalized(4, 3, rng, false), txt = normalized(4, 3, rng, false);
    const std::vector<std::size_t> keys{7, 2, 7, 5};
    const double tau = 0.3;
    // Direct softmax over the surviving columns only.
    auto masked_ce = [&](const Tensor& q, const Tensor& bank) {
      const auto s = matmul_nt(q, bank).to_vector();
      double total = 0.0;
      for (std::size_t i = 0; i < 4; ++i) {
        double z = 0.0;
        for (std::size_t j = 0; j < 4; ++j)
          if (j == i || keys[j] != keys[i]) z += std::exp(s[i * 4 + j] / tau);
        total += std::log(z) - s[i * 4 + i] / tau;
      }
      return total / 4.0;
    };
    const double expect = 0.5 * (masked_ce(img, txt) + masked_ce(txt, img));
    CHECK(std::abs(itc_loss(img, txt, Tensor::scalar(tau), nullptr, nullptr, keys).item() - expect) <= 1e-12);
    const std::vector<std::size_t> distinct{0, 1, 2, 3};
    CHECK(itc_loss(img, txt, Tensor::scalar(tau), nullptr, nullptr, distinct).item() ==
          itc_loss(img, txt, Tensor::scalar(tau)).item());
  }

  TEST_CASE("itc: single pair with empty queues is a contract error") {
    const Tensor e({1, 3}, {1, 0, 0});
    CHECK_THROWS_AS(itc_loss(e, e, Tensor::scalar(0.07)), ContractError);
    NegativeQueue q(4);
    q.push(Tensor({1, 3}, {0, 1, 0}));
    CHECK_NOTHROW(itc_loss(e, e, Tensor::scalar(0.07), &q, &q));
  }

  TEST_CASE("itc gradient matches finite differences with and without queues") {
    Rng rng(32);
    for (int i = 0; i < 20; ++i) {
      Tensor img = random_leaf({4, 3}, rng), txt = random_leaf({4, 3}, rng);
      Tensor tau = random_leaf({1}, rng, 0.2, 1.0);
      NegativeQueue iq(6), tq(6);
      iq.push(normalized(3, 3, rng, false));
      tq.push(normalized(3, 3, rng, false));
      const bool queued = i % 2 == 0;
      auto f = [&] {
        NegativeQueue a = iq, b = tq;  // the loss mutates its queues
        return itc_loss(l2_normalize_rows(img), l2_normalize_rows(txt), tau, queued ? &a : nullptr,
                        queued ? &b : nullptr);
      };
      const auto res = grad_check(f, {img, txt, tau});
      CHECK_MESSAGE(res.max_rel_err <= kGradTol, res.worst);
    }
  }

  TEST_CASE("queue evicts the oldest rows first") {
    NegativeQueue q(4);
    for (int k = 0; k < 7; ++k) q.push(Tensor({1, 2}, {static_cast<double>(k), 0.0}));
    REQUIRE(q.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(q.rows()[i][0] == static_cast<double>(i + 3));
    CHECK_THROWS_AS(q.push(Tensor({1, 3})), DimensionError);
  }

  TEST_CASE("queue entries carry no gradient") {
    Tensor x({1, 2}, {0.6, 0.8});
    x.set_requires_grad(true);
    NegativeQueue q(2);
    q.push(mul(x, x));
    CHECK_FALSE(q.as_tensor().requires_grad());
  }

  TEST_CASE("itm") {
    const Tensor zero({2, 2}, 0.0);
    const std::vector<int> labels{0, 1};
    CHECK(std::abs(itm_loss(zero, labels).item() - std::log(2.0)) <= 1e-15);
    CHECK(itm_loss(Tensor({1, 2}, {-40.0, 40.0}), std::vector<int>{1}).item() < 1e-30);
    Rng rng(33);
    const Tensor logits = Tensor::uniform({6, 2}, rng, -3.0, 3.0);
    const std::vector<int> t{0, 1, 1, 0, 1, 0};
    CHECK(std::abs(itm_loss(logits, t).item() - direct_ce(logits.to_vector(), 2, t)) <= 1e-12);
    CHECK_THROWS_AS(itm_loss(zero, std::vector<int>{0, 2}), ParameterError);
  }

  TEST_CASE("hardest negatives skip identical captions and break ties low") {
    const Tensor s({3, 3}, {1.0, 0.9, 0.9, 0.2, 1.0, 0.7, 0.5, 0.5, 1.0});
    const std::vector<std::size_t> distinct{0, 1, 2};
    CHECK(hardest_negatives(s, distinct) == std::vector<std::size_t>{1, 2, 0});
    const std::vector<std::size_t> dup{0, 0, 2};
    CHECK(hardest_negatives(s, dup) == std::vector<std::size_t>{2, 2, 0});
    const std::vector<std::size_t> same{0, 0, 0};
    CHECK(hardest_negatives(s, same) == std::vector<std::size_t>{1, 2, 0});
  }

  TEST_CASE("hardest negatives agree with brute force") {
    Rng rng(34);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t b = 2 + rng.below(8);
      const Tensor s = Tensor::uniform({b, b}, rng, -1.0, 1.0);
      std::vector<std::size_t> key(b);
      for (auto& k : key) k = rng.below(b);
      const auto got = hardest_negatives(s, key);
      for (std::size_t i = 0; i < b; ++i) {
        double best = -1e300;
        std::size_t arg = (i + 1) % b;
        for (std::size_t j = 0; j < b; ++j)
          if (j != i && key[j] != key[i] && s.at(i * b + j) > best) best = s.at(i * b + j), arg = j;
        CHECK(got[i] == arg);
      }
    }
  }

  TEST_CASE("mask_tokens") {
    Rng rng(35);
    const auto seq = sequence({align::kCls, 7, 9, 11, 8, align::kSep, align::kPad});
    const auto m0 = mask_tokens(seq, 0.0, rng);
    CHECK(std::count(m0.tokens.ids.begin(), m0.tokens.ids.end(), align::kMask) == 1);
    for (std::size_t p = 0; p < seq.size(); ++p) {
      if (m0.targets[p] >= 0) {
        CHECK(m0.targets[p] == seq.ids[p]);
        CHECK(seq.ids[p] >= align::kNumReserved);
      }
    }
    const auto all = mask_tokens(seq, 1.0, rng);
    CHECK(all.tokens.ids == std::vector<int>{align::kCls, align::kMask, align::kMask, align::kMask, align::kMask,
                                             align::kSep, align::kPad});

    Rng a(99), b(99);
    const auto long_seq = sequence({align::kCls, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, align::kSep});
    CHECK(mask_tokens(long_seq, 0.15, a).targets == mask_tokens(long_seq, 0.15, b).targets);

    const auto special = sequence({align::kCls, align::kSep, align::kPad});
    const auto forced = mask_tokens(special, 0.15, rng);
    CHECK(forced.targets == std::vector<int>{-1, align::kSep, -1});
    CHECK_THROWS_AS(mask_tokens(seq, 1.5, rng), ParameterError);
  }

  TEST_CASE("mask rate is honoured on average") {
    Rng rng(36);
    std::vector<int> ids{align::kCls};
    for (int i = 0; i < 200; ++i) ids.push_back(5 + i % 10);
    ids.push_back(align::kSep);
    const auto seq = sequence(ids);
    std::size_t masked = 0;
    for (int t = 0; t < 200; ++t) {
      const auto m = mask_tokens(seq, 0.15, rng);
      masked += static_cast<std::size_t>(std::count_if(m.targets.begin(), m.targets.end(), [](int v) { return v >= 0; }));
    }
    CHECK(std::abs(static_cast<double>(masked) / (200.0 * 200.0) - 0.15) < 0.01);
  }

  TEST_CASE("mlm and mvm cross-entropy") {
    const std::size_t v = 23;
    const Tensor uniform({3, v}, 0.0);
    const std::vector<int> t{4, -1, 9};
    CHECK(std::abs(mlm_loss(uniform, t).item() - std::log(static_cast<double>(v))) <= 1e-12);
    const Tensor u16({2, 16}, 1.5);
    CHECK(std::abs(mvm_loss(u16, std::vector<int>{3, 15}).item() - std::log(16.0)) <= 1e-12);
    std::vector<double> onehot(2 * 16, 0.0);
    onehot[3] = onehot[16 + 15] = 80.0;
    CHECK(mvm_loss(Tensor({2, 16}, onehot), std::vector<int>{3, 15}).item() < 1e-30);
    Rng rng(37);
    const Tensor logits = Tensor::uniform({4, 16}, rng, -4.0, 4.0);
    const std::vector<int> tt{2, -1, 0, 11};
    CHECK(std::abs(mvm_loss(logits, tt).item() - direct_ce(logits.to_vector(), 16, tt)) <= 1e-12);
    CHECK(std::abs(mlm_loss(logits, tt).item() - direct_ce(logits.to_vector(), 16, tt)) <= 1e-12);
  }

  TEST_CASE("spike labels") {
    std::vector<double> c(3 * 6, 0.0);
    c[3] = 2;                  // row 0 one-hot at 3
    c[6 + 1] = c[6 + 2] = 4;   // row 1 tie 1/2
    const Tensor counts({3, 6}, c);
    const std::vector<std::size_t> rows{0, 1, 2};
    const auto l = generate_spike_labels(counts, rows);
    CHECK(l[0].label == 3);
    CHECK_FALSE(l[0].silent);
    CHECK(l[1].label == 1);
    CHECK(l[2].label == 0);
    CHECK(l[2].silent);

    Rng rng(38);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> v(5 * 7);
      for (auto& x : v) x = static_cast<double>(rng.below(4));
      const Tensor s({5, 7}, v);
      const std::vector<std::size_t> r{4, 0, 2};
      const auto got = generate_spike_labels(s, r);
      for (std::size_t k = 0; k < r.size(); ++k) {
        int best = 0;
        for (int j = 1; j < 7; ++j)
          if (v[r[k] * 7 + static_cast<std::size_t>(j)] > v[r[k] * 7 + static_cast<std::size_t>(best)]) best = j;
        CHECK(got[k].label == best);
        CHECK(got[k].row == r[k]);
      }
    }
  }

  TEST_CASE("stua score") {
    const Tensor v({2, 2}, {1, 0, 0, 1});
    const auto r = stua_score(v, v).to_vector();
    CHECK(r == std::vector<double>{1, 0, 0, 1});
    Rng rng(39);
    const Tensor a = normalized(3, 5, rng, false), b = normalized(3, 5, rng, false);
    const auto s = stua_score(a, b).to_vector();
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t m = 0; m < 3; ++m) {
        double dot = 0.0;
        for (std::size_t k = 0; k < 5; ++k) dot += a.at(i * 5 + k) * b.at(m * 5 + k);
        CHECK(std::abs(s[i * 3 + m] - dot) <= 1e-12);
      }
    const Tensor zero = l2_normalize_rows(Tensor({1, 5}, 0.0));
    CHECK(stua_score(zero, b).to_vector() == std::vector<double>{0.0, 0.0, 0.0});
  }

  TEST_CASE("stua loss identities") {
    for (std::size_t b : {2u, 4u, 16u}) {
      const Tensor eq({b, b}, 0.3);
      CHECK(std::abs(stua_loss(eq, 0.07).item() - 0.5 * std::log(static_cast<double>(b))) <= 1e-9);
    }
    const Tensor r({2, 2}, {1, 0, 0, 1});
    const double worked = 0.5 * std::log(1.0 + std::exp(-1.0));
    CHECK(std::abs(stua_loss(r, 1.0).item() - worked) <= 1e-12);
    CHECK(std::abs(stua_loss(r, 1.0).item() - 0.1566) <= 1e-3);
    CHECK(stua_loss(Tensor({2, 2}, {1, -1, -1, 1}), 1e-3).item() < 1e-30);
    CHECK_THROWS_AS(stua_loss(Tensor({1, 1}, 1.0), 1.0), ContractError);
  }

  TEST_CASE("stua loss is invariant to per-row shifts") {
    Rng rng(40);
    for (int trial = 0; trial < 50; ++trial) {
      const Tensor r = Tensor::uniform({5, 5}, rng, -1.0, 1.0);
      auto shifted = r.to_vector();
      for (std::size_t i = 0; i < 5; ++i) {
        const double c = rng.uniform(-3.0, 3.0);
        for (std::size_t j = 0; j < 5; ++j) shifted[i * 5 + j] += c;
      }
      CHECK(std::abs(stua_loss(r, 0.3).item() - stua_loss(Tensor({5, 5}, shifted), 0.3).item()) <= 1e-9);
    }
  }

  TEST_CASE("stua gradient through heads matches finite differences") {
    Rng rng(41);
    for (int i = 0; i < 20; ++i) {
      AlignmentHeads heads(5, 4, 3, rng, 0.5);
      Tensor v = random_leaf({4, 5}, rng), w = random_leaf({4, 4}, rng);
      auto params = heads.parameters();
      std::vector<Tensor> inputs{v, w};
      inputs.insert(inputs.end(), params.begin(), params.end());
      const auto res = grad_check([&] { return stua_loss(stua_score(v, w, heads), heads.temperature()); }, inputs);
      CHECK_MESSAGE(res.max_rel_err <= kGradTol, res.worst);
    }
  }

  TEST_CASE("trained heads put the matching text first on a separable toy set") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      Rng rng(seed);
      AlignmentHeads heads(4, 4, 4, rng, 0.1);
      Tensor v({4, 4}, 0.0), w({4, 4}, 0.0);
      for (std::size_t i = 0; i < 4; ++i) {
        v.mutable_data()[i * 4 + i] = 1.0;
        w.mutable_data()[i * 4 + (i + 1) % 4] = 2.0;
      }
      Optimizer opt;
      opt.add_group({"heads", heads.parameters(), OptimizerKind::kAdamW, {.lr = 0.05, .weight_decay = 0.0}, false});
      for (int step = 0; step < 200; ++step) {
        opt.zero_grad();
        stua_loss(stua_score(v, w, heads), heads.temperature()).backward();
        opt.step();
        heads.clamp_temperature();
      }
      const auto r = stua_score(v, w, heads).to_vector();
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t m = 0; m < 4; ++m)
          if (m != i) CHECK(r[i * 4 + i] > r[i * 4 + m]);
    }
  }

  TEST_CASE("temperature is clamped") {
    Rng rng(42);
    AlignmentHeads heads(2, 2, 2, rng);
    CHECK(std::abs(heads.temperature_value() - 0.07) <= 1e-15);
    heads.named_parameters("")[4].tensor.mutable_data()[0] = 50.0;
    heads.clamp_temperature();
    CHECK(std::abs(heads.temperature_value() - 10.0) <= 1e-12);
    heads.named_parameters("")[4].tensor.mutable_data()[0] = -50.0;
    heads.clamp_temperature();
    CHECK(std::abs(heads.temperature_value() - 1e-3) <= 1e-15);
    CHECK_THROWS_AS(AlignmentHeads(2, 2, 2, rng, 0.0), ParameterError);
  }

  TEST_CASE("vqa accuracy") {
    CHECK(vqa_accuracy(0) == 0.0);
    CHECK(vqa_accuracy(1) == 1.0 / 3.0);
    CHECK(vqa_accuracy(2) == 2.0 / 3.0);
    CHECK(vqa_accuracy(3) == 1.0);
    CHECK(vqa_accuracy(5) == 1.0);
    CHECK_THROWS_AS(vqa_accuracy(-1), ParameterError);
  }
}
