#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracle_helpers.hpp"
#include "tmr/errors.hpp"
#include "tmr/tvl.hpp"

using namespace tmr;

namespace {

std::vector<std::uint8_t> all_valid(std::size_t n) {
  return std::vector<std::uint8_t>(n, 1);
}

// Independent evaluation of every branch followed by a per-position,
// per-channel reduction. Loop order matches the stated branch semantics, not
// the library's graph ops.
std::vector<double> brute_force_tvl(const TvlParams& p, const std::vector<double>& x,
                                    std::size_t L, std::size_t d, FusionMode fusion) {
  std::vector<std::vector<double>> branches;
  for (std::size_t i = 0; i < p.kernels.size(); ++i) {
    std::vector<double> ker(p.kernels[i].values().begin(), p.kernels[i].values().end());
    branches.push_back(oracle::naive_conv1d(x, L, d, ker, p.kernel_sizes[i], d));
  }
  branches.push_back(oracle::naive_maxpool_same(x, L, d, 2));
  branches.push_back(x);

  std::vector<double> out(L * d);
  for (std::size_t i = 0; i < L * d; ++i) {
    if (fusion == FusionMode::Max) {
      double best = branches[0][i];
      for (const auto& b : branches) best = std::max(best, b[i]);
      out[i] = best;
    } else {
      double s = 0.0;
      for (const auto& b : branches) s += b[i];
      out[i] = s / static_cast<double>(branches.size());
    }
  }
  return out;
}

}  // namespace

TEST_CASE("shape preservation across window lengths") {
  Rng rng(3);
  const std::size_t d = 6;
  std::vector<std::size_t> ks{3, 5, 7};
  TvlParams p = init_tvl(ks, d, rng);
  for (std::size_t len : {std::size_t{1}, std::size_t{5}, std::size_t{30}}) {
    auto x = Tensor::uniform({len, d}, -1.0, 1.0, rng);
    Tensor y = tvl_apply(p, x, all_valid(len), FusionMode::Max);
    CHECK(y.rows() == len);
    CHECK(y.cols() == d);
    Tensor ya = tvl_apply(p, x, all_valid(len), FusionMode::Ave);
    CHECK(ya.rows() == len);
    CHECK(ya.cols() == d);
  }
}

TEST_CASE("identical branch outputs reduce to the input") {
  // constant-over-time input plus identity conv kernels makes all branches
  // emit exactly the input block, so both fusions return it unchanged
  Rng rng(5);
  const std::size_t d = 4, len = 9;
  std::vector<std::size_t> ks{3, 5, 7};
  TvlParams p = init_tvl(ks, d, rng);
  for (std::size_t b = 0; b < p.kernels.size(); ++b) {
    auto vals = p.kernels[b].mutable_values();
    std::fill(vals.begin(), vals.end(), 0.0);
    const std::size_t k = p.kernel_sizes[b];
    const std::size_t center = k / 2;
    for (std::size_t c = 0; c < d; ++c) vals[(center * d + c) * d + c] = 1.0;
  }
  std::vector<double> row{0.3, -1.2, 0.7, 2.5};
  std::vector<double> data;
  for (std::size_t i = 0; i < len; ++i) data.insert(data.end(), row.begin(), row.end());
  auto x = Tensor::from_data({len, d}, data);

  Tensor ymax = tvl_apply(p, x, all_valid(len), FusionMode::Max);
  Tensor yave = tvl_apply(p, x, all_valid(len), FusionMode::Ave);
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(ymax.values()[i] == data[i]);
    CHECK(yave.values()[i] == doctest::Approx(data[i]).epsilon(1e-12));
  }
}

TEST_CASE("hand-evaluated value table at len=3, d=1") {
  Rng rng(1);
  std::vector<std::size_t> ks{3};
  TvlParams p = init_tvl(ks, 1, rng);
  p.kernels[0].mutable_values()[0] = 1.0;   // tap at offset -1
  p.kernels[0].mutable_values()[1] = 0.0;   // center
  p.kernels[0].mutable_values()[2] = -1.0;  // offset +1

  auto x = Tensor::from_data({3, 1}, {1.0, 4.0, 2.0});
  // conv:     [0*?+1*0-1*4, 1*1+0-1*2, 1*4+0-0] = [-4, -1, 4]
  // pool k2:  [max(1,4), max(4,2), max(2,2)] = [4, 4, 2]
  // identity: [1, 4, 2]
  // max fuse: [4, 4, 4]
  Tensor y = tvl_apply(p, x, all_valid(3), FusionMode::Max);
  CHECK(y.values()[0] == 4.0);
  CHECK(y.values()[1] == 4.0);
  CHECK(y.values()[2] == 4.0);
}

TEST_CASE("max fusion equals independent per-branch brute force, exact") {
  Rng rng(77);
  std::vector<std::size_t> ks{3, 5, 7};
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 1 + rng.integer(5);
    const std::size_t len = 1 + rng.integer(30);
    TvlParams p = init_tvl(ks, d, rng);
    auto x = Tensor::uniform({len, d}, -2.0, 2.0, rng);
    Tensor y = tvl_apply(p, x, all_valid(len), FusionMode::Max);
    std::vector<double> want = brute_force_tvl(
        p, std::vector<double>(x.values().begin(), x.values().end()), len, d,
        FusionMode::Max);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(y.values()[i] == want[i]);
  }
}

TEST_CASE("masked positions emit zeros and never influence valid ones") {
  Rng rng(13);
  const std::size_t d = 3, L = 12, pad = 4;
  std::vector<std::size_t> ks{3, 5, 7};
  TvlParams p = init_tvl(ks, d, rng);

  // left-padded window: rows 0..pad-1 are garbage but masked off
  auto x = Tensor::uniform({L, d}, -1.0, 1.0, rng);
  std::vector<std::uint8_t> mask(L, 1);
  for (std::size_t i = 0; i < pad; ++i) mask[i] = 0;
  Tensor y = tvl_apply(p, x, mask, FusionMode::Max);

  for (std::size_t i = 0; i < pad; ++i)
    for (std::size_t c = 0; c < d; ++c) CHECK(y.at(i, c) == 0.0);

  // perturbing masked rows changes nothing at valid rows
  std::vector<double> perturbed(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < pad; ++i)
    for (std::size_t c = 0; c < d; ++c) perturbed[i * d + c] = 1000.0;
  Tensor y2 = tvl_apply(p, Tensor::from_data({L, d}, perturbed), mask, FusionMode::Max);
  for (std::size_t i = pad; i < L; ++i)
    for (std::size_t c = 0; c < d; ++c) CHECK(y.at(i, c) == y2.at(i, c));

  // the masked window equals the equivalent shorter window
  std::vector<double> shorter(x.values().begin() + pad * d, x.values().end());
  Tensor ys = tvl_apply(p, Tensor::from_data({L - pad, d}, shorter),
                        all_valid(L - pad), FusionMode::Max);
  for (std::size_t i = 0; i < L - pad; ++i)
    for (std::size_t c = 0; c < d; ++c) CHECK(ys.at(i, c) == y.at(i + pad, c));
}

TEST_CASE("causality radius within the window is at most 3") {
  Rng rng(29);
  const std::size_t d = 2, L = 20;
  std::vector<std::size_t> ks{3, 5, 7};
  TvlParams p = init_tvl(ks, d, rng);
  auto x = Tensor::uniform({L, d}, -1.0, 1.0, rng);
  Tensor base = tvl_apply(p, x, all_valid(L), FusionMode::Max);

  const std::size_t probe = 10;
  std::vector<double> perturbed(x.values().begin(), x.values().end());
  for (std::size_t c = 0; c < d; ++c) perturbed[probe * d + c] += 5.0;
  Tensor moved = tvl_apply(p, Tensor::from_data({L, d}, perturbed), all_valid(L),
                           FusionMode::Max);
  for (std::size_t i = 0; i < L; ++i) {
    const bool within = i + 3 >= probe && i <= probe + 3;
    if (within) continue;
    for (std::size_t c = 0; c < d; ++c) CHECK(base.at(i, c) == moved.at(i, c));
  }
}

TEST_CASE("gradients reach the kernels through max fusion") {
  Rng rng(41);
  std::vector<std::size_t> ks{3, 5, 7};
  TvlParams p = init_tvl(ks, 3, rng);
  auto x = Tensor::uniform({10, 3}, -1.0, 1.0, rng);
  double err = oracle::fd_max_rel_err(
      {p.kernels[0], p.kernels[1], p.kernels[2]},
      [&] { return sum(tvl_apply(p, x, std::vector<std::uint8_t>(10, 1), FusionMode::Ave)); });
  CHECK(err <= 1e-4);
}
