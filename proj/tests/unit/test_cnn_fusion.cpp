#include <doctest.h>

#include <cmath>

#include "ash/cnn.hpp"
#include "ash/errors.hpp"
#include "ash/fusion.hpp"
#include "ash/ops.hpp"
#include "gradcheck.hpp"

using namespace ash;
using ash::testing::grad_check;
using ash::testing::probe_like;
using ash::testing::probe_sum;
using ash::testing::random_leaf;

namespace {

cnn::ConvStackConfig small_stack() {
  cnn::ConvStackConfig c;
  c.channels = {2, 3, 4};
  c.patch_stride = 4;
  return c;
}

}  // namespace

TEST_SUITE("cnn-encoder") {
  TEST_CASE("zero image with zero biases gives exact zeros") {
    Rng rng(71);
    const cnn::ConvStack stack(cnn::ConvStackConfig{}, rng);
    for (double v : stack.encode_concrete(Tensor({1, 3, 32, 32}, 0.0)).to_vector()) CHECK(v == 0.0);
  }

  TEST_CASE("output shape") {
    Rng rng(72);
    const cnn::ConvStack stack(cnn::ConvStackConfig{}, rng);
    CHECK(stack.num_patches(32, 32) == 16);
    CHECK(stack.encode_concrete(Tensor::uniform({2, 3, 32, 32}, rng, 0.0, 1.0)).shape() == Shape{32, 32});
    CHECK_THROWS_AS(stack.encode_concrete(Tensor({1, 3, 30, 32})), DimensionError);
    CHECK_THROWS_AS(stack.encode_concrete(Tensor({1, 1, 32, 32})), DimensionError);
    cnn::ConvStackConfig bad;
    bad.patch_stride = 6;
    CHECK_THROWS_AS(cnn::ConvStack(bad, rng), ParameterError);
  }

  TEST_CASE("batch encoding equals per-sample encoding") {
    Rng rng(73);
    const cnn::ConvStack stack(cnn::ConvStackConfig{}, rng);
    const Tensor batch = Tensor::uniform({3, 3, 32, 32}, rng, 0.0, 1.0);
    const auto all = stack.encode_concrete(batch).to_vector();
    const std::size_t per_image = 3 * 32 * 32, per_out = 16 * 32;
    for (std::size_t i = 0; i < 3; ++i) {
      const std::vector<double> img(batch.data().begin() + static_cast<std::ptrdiff_t>(i * per_image),
                                    batch.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * per_image));
      const auto one = stack.encode_concrete(Tensor({1, 3, 32, 32}, img)).to_vector();
      double worst = 0.0;
      for (std::size_t k = 0; k < per_out; ++k) worst = std::max(worst, std::abs(one[k] - all[i * per_out + k]));
      CHECK(worst <= 1e-12);
    }
  }

  TEST_CASE("gradient of mean features matches finite differences") {
    Rng rng(74);
    for (int trial = 0; trial < 20; ++trial) {
      const cnn::ConvStack stack(small_stack(), rng);
      Tensor x = random_leaf({2, 3, 8, 8}, rng, 0.0, 1.0);
      auto params = stack.parameters();
      std::vector<Tensor> inputs{x};
      inputs.insert(inputs.end(), params.begin(), params.end());
      const Tensor p = probe_like({8, 4}, rng);
      const auto res = grad_check([&] { return probe_sum(stack.encode_concrete(x), p); }, inputs);
      CHECK_MESSAGE(res.max_rel_err <= 1e-6, res.worst);
      const auto mean_res = grad_check([&] { return mean(stack.encode_concrete(x)); }, {params.front()});
      CHECK(mean_res.max_rel_err <= 1e-6);
    }
  }
}

TEST_SUITE("fusion") {
  TEST_CASE("zero gate gives one half") {
    const Tensor sr = fusion::summary_ratio(Tensor({2, 3}, 0.0), Tensor({3, 3}, 0.0), Tensor({3}, 0.0));
    for (double v : sr.to_vector()) CHECK(v == 0.5);
  }

  TEST_CASE("summary ratio stays strictly inside the unit interval") {
    Rng rng(75);
    fusion::SummaryGate gate(8, rng);
    for (double v : gate.summary_ratio(Tensor::uniform({20, 8}, rng, -3.0, 3.0)).to_vector()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
    CHECK_THROWS_AS(gate.summary_ratio(Tensor({2, 7})), DimensionError);
  }

  TEST_CASE("gate gradient matches finite differences") {
    Rng rng(76);
    for (int trial = 0; trial < 20; ++trial) {
      Tensor f = random_leaf({4, 5}, rng), w = random_leaf({5, 5}, rng), b = random_leaf({5}, rng);
      const Tensor p = probe_like({4, 5}, rng);
      const auto res = grad_check([&] { return probe_sum(fusion::summary_ratio(f, w, b), p); }, {f, w, b});
      CHECK(res.max_rel_err <= 1e-6);
    }
  }

  TEST_CASE("fuse modes") {
    Rng rng(77);
    const Tensor cnn_f = Tensor::uniform({6, 4}, rng, -1.0, 1.0), snn_f = Tensor::uniform({6, 4}, rng, -1.0, 1.0);
    const Tensor sr = Tensor::uniform({6, 4}, rng, 0.01, 0.99);
    const Tensor zero({6, 4}, 0.0);
    for (auto mode : {fusion::SrMode::kFixedZero, fusion::SrMode::kFixedOne, fusion::SrMode::kTrainable})
      CHECK(fusion::fuse(sr, zero, cnn_f, mode).to_vector() == cnn_f.to_vector());
    CHECK(fusion::fuse({}, snn_f, cnn_f, fusion::SrMode::kFixedZero).to_vector() == cnn_f.to_vector());
    const auto one = fusion::fuse({}, snn_f, cnn_f, fusion::SrMode::kFixedOne).to_vector();
    const auto tr = fusion::fuse(sr, snn_f, cnn_f, fusion::SrMode::kTrainable).to_vector();
    for (std::size_t i = 0; i < tr.size(); ++i) {
      CHECK(std::abs(one[i] - (snn_f.at(i) + cnn_f.at(i))) <= 1e-12);
      CHECK(std::abs(tr[i] - (sr.at(i) * snn_f.at(i) + cnn_f.at(i))) <= 1e-12);
    }
    CHECK_THROWS_AS(fusion::fuse(sr, Tensor({6, 3}), cnn_f, fusion::SrMode::kTrainable), DimensionError);
    CHECK_THROWS_AS(fusion::fuse(Tensor({2, 2}), snn_f, cnn_f, fusion::SrMode::kTrainable), DimensionError);
    CHECK(fusion::to_string(fusion::SrMode::kTrainable) == "trainable");
  }

  TEST_CASE("fused output rises with the abstract stream") {
    Rng rng(78);
    Tensor snn_f = random_leaf({3, 4}, rng);
    const Tensor cnn_f = Tensor::uniform({3, 4}, rng, -1.0, 1.0), sr = Tensor::uniform({3, 4}, rng, 0.01, 0.99);
    sum(fusion::fuse(sr, snn_f, cnn_f, fusion::SrMode::kTrainable)).backward();
    for (double g : snn_f.grad()) CHECK(g > 0.0);
  }
}
