#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracle_helpers.hpp"
#include "tmr/errors.hpp"
#include "tmr/nlop.hpp"

using namespace tmr;

namespace {

std::vector<std::uint8_t> all_valid(std::size_t n) {
  return std::vector<std::uint8_t>(n, 1);
}

}  // namespace

TEST_CASE("attention weights sum to one") {
  Rng rng(3);
  NloParams p = init_nlo(8, 4, 0.2, rng);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t len = 1 + rng.integer(20);
    auto c = Tensor::uniform({1, 8}, -2.0, 2.0, rng);
    auto w = Tensor::uniform({len, 8}, -2.0, 2.0, rng);
    Rng drng(0);
    AttendResult res = nlo_attend(p, c, w, all_valid(len), RunMode::Eval, drng);
    double s = 0.0;
    for (double v : res.weights.values()) s += v;
    CHECK(std::abs(s - 1.0) <= 1e-9);
    CHECK(res.r.rows() == 1);
    CHECK(res.r.cols() == 8);
  }
}

TEST_CASE("equal keys give uniform weights and y = g(row)") {
  Rng rng(7);
  NloParams p = init_nlo(6, 3, 0.0, rng);
  const std::size_t len = 9;
  auto c = Tensor::uniform({1, 6}, -1.0, 1.0, rng);
  std::vector<double> row{0.5, -1.0, 2.0, 0.1, -0.4, 1.5};
  std::vector<double> data;
  for (std::size_t i = 0; i < len; ++i) data.insert(data.end(), row.begin(), row.end());
  auto w = Tensor::from_data({len, 6}, data);

  Rng drng(0);
  AttendResult res = nlo_attend(p, c, w, all_valid(len), RunMode::Eval, drng);
  for (double v : res.weights.values())
    CHECK(v == doctest::Approx(1.0 / len).epsilon(1e-12));

  Tensor grow = matmul(Tensor::row(row), p.w_g);
  for (std::size_t i = 0; i < 6; ++i)
    CHECK(res.attended.at(0, i) == doctest::Approx(grow.at(0, i)).epsilon(1e-12));
}

TEST_CASE("residual identity with zero value projection") {
  Rng rng(11);
  NloParams p = init_nlo(5, 2, 0.3, rng);
  for (double& v : p.w_g.mutable_values()) v = 0.0;
  for (double& v : p.ln_gain.mutable_values()) v = 1.0;
  for (double& v : p.ln_bias.mutable_values()) v = 0.0;

  auto c = Tensor::uniform({1, 5}, -3.0, 3.0, rng);
  auto w = Tensor::uniform({7, 5}, -3.0, 3.0, rng);
  Rng drng(5);
  AttendResult res = nlo_attend(p, c, w, all_valid(7), RunMode::Eval, drng);
  for (std::size_t i = 0; i < 5; ++i) CHECK(res.r.at(0, i) == c.at(0, i));  // exact

  // holds in train mode too: dropout of an all-zero summary is zero
  Rng drng2(5);
  AttendResult rt = nlo_attend(p, c, w, all_valid(7), RunMode::Train, drng2);
  for (std::size_t i = 0; i < 5; ++i) CHECK(rt.r.at(0, i) == c.at(0, i));
}

TEST_CASE("adding a constant to all similarity logits leaves weights unchanged") {
  // shift invariance holds because weights normalize via softmax: shifting
  // every key by the same vector along w_phi's null direction is awkward to
  // construct, so probe the invariance at the softmax level instead
  Rng rng(13);
  auto logits = Tensor::uniform({1, 12}, -2.0, 2.0, rng);
  std::vector<double> shifted(logits.values().begin(), logits.values().end());
  for (double& v : shifted) v += 7.5;
  auto a = softmax(logits);
  auto b = softmax(Tensor::from_data({1, 12}, shifted));
  for (std::size_t i = 0; i < 12; ++i)
    CHECK(a.values()[i] == doctest::Approx(b.values()[i]).epsilon(1e-9));
}

TEST_CASE("masked rows receive exactly zero weight and cannot influence y") {
  Rng rng(17);
  NloParams p = init_nlo(6, 3, 0.0, rng);
  const std::size_t len = 10, pad = 3;
  auto c = Tensor::uniform({1, 6}, -1.0, 1.0, rng);
  auto w = Tensor::uniform({len, 6}, -1.0, 1.0, rng);
  std::vector<std::uint8_t> mask(len, 1);
  for (std::size_t i = 0; i < pad; ++i) mask[i] = 0;

  Rng drng(0);
  AttendResult res = nlo_attend(p, c, w, mask, RunMode::Eval, drng);
  for (std::size_t i = 0; i < pad; ++i) CHECK(res.weights.values()[i] == 0.0);

  std::vector<double> perturbed(w.values().begin(), w.values().end());
  for (std::size_t i = 0; i < pad; ++i)
    for (std::size_t cdx = 0; cdx < 6; ++cdx) perturbed[i * 6 + cdx] = 1e6;
  Rng drng2(0);
  AttendResult res2 = nlo_attend(p, c, Tensor::from_data({len, 6}, perturbed), mask,
                                 RunMode::Eval, drng2);
  for (std::size_t i = 0; i < 6; ++i)
    CHECK(res.r.at(0, i) == doctest::Approx(res2.r.at(0, i)).epsilon(1e-12));

  CHECK_THROWS_AS(
      nlo_attend(p, c, w, std::vector<std::uint8_t>(len, 0), RunMode::Eval, drng),
      ContractError);
}

TEST_CASE("eval attend is deterministic; train differs only through dropout") {
  Rng rng(23);
  NloParams p = init_nlo(8, 4, 0.5, rng);
  auto c = Tensor::uniform({1, 8}, -1.0, 1.0, rng);
  auto w = Tensor::uniform({12, 8}, -1.0, 1.0, rng);

  Rng d1(9), d2(9), d3(10);
  auto e1 = nlo_attend(p, c, w, all_valid(12), RunMode::Eval, d1);
  auto e2 = nlo_attend(p, c, w, all_valid(12), RunMode::Eval, d2);
  CHECK(e1.r.value_hash() == e2.r.value_hash());

  auto t1 = nlo_attend(p, c, w, all_valid(12), RunMode::Train, d3);
  CHECK(t1.weights.value_hash() == e1.weights.value_hash());  // weights unaffected
  bool differs = false;
  for (std::size_t i = 0; i < 8; ++i)
    differs = differs || t1.r.at(0, i) != e1.r.at(0, i);
  CHECK(differs);
}

TEST_CASE("wave operator") {
  Rng rng(31);
  WaveParams p = init_wave(10, rng);
  auto w = Tensor::uniform({10, 4}, -1.0, 1.0, rng);

  // uniform weights reduce to the mean of rows
  for (double& v : p.weights.mutable_values()) v = 0.1;
  Tensor r = wave_attend(p, w, all_valid(10));
  for (std::size_t c = 0; c < 4; ++c) {
    double m = 0.0;
    for (std::size_t i = 0; i < 10; ++i) m += w.at(i, c);
    m /= 10.0;
    CHECK(r.at(0, c) == doctest::Approx(m).epsilon(1e-12));
  }

  // a single row is returned scaled by the lag-zero weight
  auto one = Tensor::uniform({1, 4}, -1.0, 1.0, rng);
  Tensor r1 = wave_attend(p, one, all_valid(1));
  for (std::size_t c = 0; c < 4; ++c)
    CHECK(r1.at(0, c) == doctest::Approx(0.1 * one.at(0, c)).epsilon(1e-12));

  // learned weights receive gradient
  Rng rng2(1);
  WaveParams lp = init_wave(10, rng2);
  double err = oracle::fd_max_rel_err({lp.weights},
                                      [&] { return sum(wave_attend(lp, w, all_valid(10))); });
  CHECK(err <= 1e-4);
}

TEST_CASE("classify concatenates to width 2d and reaches both paths") {
  Rng rng(37);
  HeadParams head = init_head(16, 8, 5, rng);
  auto r = Tensor::uniform({1, 8}, -1.0, 1.0, rng, true);
  auto c = Tensor::uniform({1, 8}, -1.0, 1.0, rng, true);
  Tensor logits = classify(head, r, c);
  CHECK(logits.cols() == 5);

  backward(cross_entropy(logits, 2));
  double rn = 0.0, cn = 0.0;
  for (double g : r.grad()) rn += g * g;
  for (double g : c.grad()) cn += g * g;
  CHECK(rn > 0.0);
  CHECK(cn > 0.0);

  // the full-scale head consumes a 1024-wide concatenation
  Rng rng2(1);
  HeadParams big = init_head(1024, 512, 7, rng2);
  CHECK(big.w1.rows() == 1024);
  auto r5 = Tensor::zeros({1, 512});
  auto c5 = Tensor::zeros({1, 512});
  CHECK(concat_cols(r5, c5).cols() == 1024);
  CHECK(classify(big, r5, c5).cols() == 7);
}

TEST_CASE("zero head weights give the uniform prediction") {
  Rng rng(41);
  HeadParams head = init_head(6, 4, 3, rng);
  for (Tensor* t : {&head.w1, &head.b1, &head.w2, &head.b2})
    for (double& v : t->mutable_values()) v = 0.0;
  auto in = Tensor::uniform({1, 6}, -1.0, 1.0, rng);
  Tensor probs = softmax(head_logits(head, in));
  for (double v : probs.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("classify is deterministic and locally Lipschitz") {
  Rng rng(43);
  HeadParams head = init_head(8, 8, 4, rng);
  auto r = Tensor::uniform({1, 4}, -1.0, 1.0, rng);
  auto c = Tensor::uniform({1, 4}, -1.0, 1.0, rng);
  Tensor base = classify(head, r, c);
  CHECK(base.value_hash() == classify(head, r, c).value_hash());

  // measure a local slope at eps=1e-4, then verify consistency at 1e-6
  auto perturbed = [&](double eps) {
    std::vector<double> rv(r.values().begin(), r.values().end());
    rv[0] += eps;
    Tensor out = classify(head, Tensor::from_data({1, 4}, rv), c);
    double diff = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i)
      diff = std::max(diff, std::abs(out.values()[i] - base.values()[i]));
    return diff;
  };
  const double k_measured = perturbed(1e-4) / 1e-4;
  CHECK(perturbed(1e-6) <= std::max(k_measured * 10.0, 1e-9) * 1e-6 + 1e-12);
}

TEST_CASE("attend gradient check through the full operator") {
  Rng rng(47);
  NloParams p = init_nlo(5, 3, 0.0, rng);
  auto c = Tensor::uniform({1, 5}, -1.0, 1.0, rng, true);
  auto w = Tensor::uniform({6, 5}, -1.0, 1.0, rng, true);
  Rng drng(0);
  double err = oracle::fd_max_rel_err(
      {p.w_theta, p.w_phi, p.w_g, p.ln_gain, p.ln_bias, c, w}, [&] {
        Rng d2(0);
        return sum(nlo_attend(p, c, w, all_valid(6), RunMode::Eval, d2).r);
      });
  CHECK(err <= 1e-4);
}
