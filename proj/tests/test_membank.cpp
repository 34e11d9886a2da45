#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tmr/encoder.hpp"
#include "tmr/errors.hpp"
#include "tmr/membank.hpp"
#include "tmr/synth.hpp"

using namespace tmr;

TEST_CASE("offline build matches the encoder and is frozen") {
  WorkflowSchema s = default_schema();
  LabeledSequence seq = generate(s, 5, 50, 70);
  Rng rng(9);
  EncoderParams p = init_encoder(s.d_raw, 10, rng);

  MemoryBank bank = MemoryBank::build_offline(p, seq, 10);
  CHECK(bank.size() == seq.T);
  CHECK(bank.width() == 10);
  CHECK(bank.frozen());

  Tensor rows = encode_sequence(p, seq, 10);
  for (std::size_t t = 0; t < seq.T; ++t)
    for (std::size_t c = 0; c < 10; ++c)
      CHECK(std::abs(bank.entry(t)[c] - rows.at(t, c)) <= 1e-9);

  MemoryBank again = MemoryBank::build_offline(p, seq, 10);
  CHECK(bank.content_hash() == again.content_hash());

  std::vector<double> f(10, 0.0);
  CHECK_THROWS_AS(bank.append(f), StateError);
}

TEST_CASE("append assigns contiguous indices and checks width") {
  MemoryBank bank(4);
  CHECK(bank.size() == 0);
  std::vector<double> f{1, 2, 3, 4};
  bank.append(f);
  CHECK(bank.size() == 1);
  CHECK(bank.entry(0)[0] == 1.0);
  for (int i = 0; i < 9; ++i) bank.append(f);
  CHECK(bank.size() == 10);

  std::vector<double> bad{1, 2, 3};
  CHECK_THROWS_AS(bank.append(bad), ShapeError);
}

TEST_CASE("window arithmetic") {
  MemoryBank bank(2);
  for (int t = 0; t < 60; ++t) {
    std::vector<double> f{static_cast<double>(t), static_cast<double>(-t)};
    bank.append(f);
  }

  BankWindow w1 = bank.window(5, 30);
  CHECK(w1.len == 6);
  CHECK(w1.end_time == 5);
  CHECK(w1.nominal_len == 30);
  CHECK(w1.features[0] == 0.0);       // index 0
  CHECK(w1.features[5 * 2] == 5.0);   // index 5
  for (std::uint8_t m : w1.mask) CHECK(m == 1);

  BankWindow w2 = bank.window(40, 30);
  CHECK(w2.len == 30);
  CHECK(w2.features[0] == 11.0);      // indices 11..40
  CHECK(w2.features[29 * 2] == 40.0);

  BankWindow w3 = bank.window(17, 1);
  CHECK(w3.len == 1);
  CHECK(w3.features[0] == 17.0);

  CHECK_THROWS_AS(bank.window(60, 5), IndexError);
  CHECK_THROWS_AS(bank.window(3, 0), ConfigError);
}

TEST_CASE("online append equals the offline bank") {
  WorkflowSchema s = default_schema();
  LabeledSequence seq = generate(s, 8, 40, 60);
  Rng rng(3);
  EncoderParams p = init_encoder(s.d_raw, 8, rng);

  MemoryBank offline = MemoryBank::build_offline(p, seq, 10);
  MemoryBank live(8);
  for (std::size_t t = 0; t < seq.T; ++t) {
    NoGradGuard guard;
    Tensor h = encode_clip(p, clip_tensor(seq, t, 10));
    live.append(h.values());
    // windows agree at every step along the way
    BankWindow a = live.window(t, 30);
    BankWindow b = offline.window(t, 30);
    REQUIRE(a.len == b.len);
    for (std::size_t i = 0; i < a.features.size(); ++i)
      CHECK(std::abs(a.features[i] - b.features[i]) <= 1e-12);
  }
  CHECK(live.content_hash() == offline.content_hash());
}

TEST_CASE("windows never read past the end time") {
  // causality: the window at (t, L) ignores appended entries beyond t
  MemoryBank bank(1);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> f{static_cast<double>(t)};
    bank.append(f);
  }
  BankWindow before = bank.window(10, 8);
  std::vector<double> junk{999.0};
  bank.append(junk);
  BankWindow after = bank.window(10, 8);
  CHECK(before.features == after.features);
  for (double v : after.features) CHECK(v <= 10.0);
}
