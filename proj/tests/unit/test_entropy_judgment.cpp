// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fedentropy/entropy_judgment.hpp"
#include "fedentropy/testing/oracles.hpp"

using namespace fedentropy;

namespace {

SummaryMap make_summaries(std::initializer_list<std::pair<std::size_t, ProbVector>> items,
                          std::size_t count = 1) {
  SummaryMap map;
  for (const auto& [id, p] : items) map.emplace(DeviceId{id}, SoftLabelSummary{DeviceId{id}, p, count});
  return map;
}

std::vector<DeviceId> ids(std::initializer_list<std::size_t> raw) {
  std::vector<DeviceId> out;
  for (auto v : raw) out.emplace_back(v);
  return out;
}

ProbVector random_prob(std::size_t c, Rng& rng) {
  std::gamma_distribution<double> g(0.5, 1.0);
  ProbVector p(c);
  double s = 0.0;
  for (double& v : p) s += (v = g(rng));
  for (double& v : p) v /= s;
  return p;
}

}  // namespace

TEST_CASE("entropy examples") {
  const double one_hot[] = {1.0, 0.0, 0.0};
  CHECK(entropy(one_hot) == 0.0);
  const double half[] = {0.5, 0.5};
  CHECK(entropy(half) == doctest::Approx(0.693147).epsilon(1e-6));
  const double quarter[] = {0.25, 0.75};
  // -0.25 ln 0.25 - 0.75 ln 0.75
  CHECK(entropy(quarter) == doctest::Approx(0.5623351446188083).epsilon(1e-14));
}

TEST_CASE("entropy bounds on random vectors") {
  Rng rng = make_rng(21, 0);
  for (int t = 0; t < 5000; ++t) {
    const std::size_t c = std::uniform_int_distribution<std::size_t>(2, 10)(rng);
    ProbVector p = random_prob(c, rng);
    const double h = entropy(p);
    CHECK(h >= 0.0);
    CHECK(h <= std::log(double(c)) + 1e-12);
  }
  for (std::size_t c = 2; c <= 10; ++c) {
    ProbVector uniform(c, 1.0 / double(c));
    CHECK(std::abs(entropy(uniform) - std::log(double(c))) < 1e-12);
  }
}

TEST_CASE("get_entropy examples") {
  std::vector<SoftLabelSummary> single{{DeviceId{0}, {0.25, 0.75}, 4}};
  CHECK(get_entropy(single) == entropy(single[0].p));

  std::vector<SoftLabelSummary> complementary{{DeviceId{0}, {1, 0}, 2}, {DeviceId{1}, {0, 1}, 2}};
  CHECK(get_entropy(complementary) == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  // Weighted mean [0.75, 0.25].
  std::vector<SoftLabelSummary> weighted{{DeviceId{0}, {1, 0}, 3}, {DeviceId{1}, {0, 1}, 1}};
  CHECK(get_entropy(weighted) == doctest::Approx(0.5623351446188083).epsilon(1e-14));

  CHECK_THROWS_AS(get_entropy(std::vector<SoftLabelSummary>{}), std::invalid_argument);
}

TEST_CASE("get_entropy is permutation and count-scale invariant") {
  Rng rng = make_rng(22, 0);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
    const std::size_t c = std::uniform_int_distribution<std::size_t>(2, 6)(rng);
    std::vector<SoftLabelSummary> s;
    for (std::size_t i = 0; i < n; ++i) {
      s.push_back({DeviceId{i}, random_prob(c, rng),
                   std::uniform_int_distribution<std::size_t>(1, 50)(rng)});
    }
    const double h = get_entropy(s);
    std::shuffle(s.begin(), s.end(), rng);
    CHECK(std::abs(get_entropy(s) - h) < 1e-12);
    const std::size_t scale = std::uniform_int_distribution<std::size_t>(2, 9)(rng);
    for (auto& x : s) x.sample_count *= scale;
    CHECK(std::abs(get_entropy(s) - h) < 1e-12);
  }
}

TEST_CASE("aggregate_soft_labels") {
  SUBCASE("uniform model gives a uniform summary") {
    const std::size_t widths[] = {2, 4};
    ModelParams model = zero_model(widths);
    Batch data{DenseMatrix(3, 2, std::vector<double>{1, 2, 3, 4, 5, 6}), {0, 1, 2}};
    auto s = aggregate_soft_labels(model, data, DeviceId{7});
    CHECK(s.device == DeviceId{7});
    CHECK(s.sample_count == 3);
    for (double v : s.p) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("one sample reproduces its softmax") {
    Rng rng = make_rng(4, 0);
    const std::size_t widths[] = {3, 3};
    ModelParams model = random_model(widths, rng);
    Batch data{DenseMatrix(1, 3, std::vector<double>{0.3, -1.0, 2.0}), {1}};
    auto s = aggregate_soft_labels(model, data, DeviceId{0});
    auto expected = forward(model, data).probs;
    for (std::size_t j = 0; j < 3; ++j) CHECK(s.p[j] == expected(0, j));
  }
  SUBCASE("saturated opposite predictions average to one half") {
    const std::size_t widths[] = {2, 2};
    ModelParams model = zero_model(widths);
    model.layers[0].weight(0, 0) = 100.0;
    model.layers[0].weight(1, 1) = 100.0;
    Batch data{DenseMatrix(2, 2, std::vector<double>{1, 0, 0, 1}), {0, 1}};
    auto s = aggregate_soft_labels(model, data, DeviceId{0});
    CHECK(s.p[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s.p[1] == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("empty data") {
    const std::size_t widths[] = {2, 2};
    CHECK_THROWS_AS(aggregate_soft_labels(zero_model(widths), Batch{DenseMatrix(0, 2), {}},
                                          DeviceId{0}),
                    std::invalid_argument);
  }
}

TEST_CASE("judge_entropy worked example") {
  // Removing 1 or 3 lifts entropy([2/3,1/3]) = 0.636514 to ln 2; the tie goes
  // to device 1. Afterwards any removal drops entropy to 0.
  auto summaries = make_summaries({{1, {1, 0}}, {2, {0, 1}}, {3, {1, 0}}});
  auto sel = ids({1, 2, 3});
  JudgmentResult r = judge_entropy(sel, summaries);
  CHECK(r.accepted == ids({2, 3}));
  CHECK(r.rejected == ids({1}));
  CHECK(r.initial_entropy == doctest::Approx(0.6365141682948128).epsilon(1e-12));
  CHECK(std::abs(r.final_entropy - 0.693147) < 1e-6);
  CHECK(r.entropy_trace.size() == 2);
}

TEST_CASE("judge_entropy guard and degenerate cases") {
  SUBCASE("identical summaries keep everyone") {
    auto summaries = make_summaries({{0, {0.2, 0.3, 0.5}}, {4, {0.2, 0.3, 0.5}}, {9, {0.2, 0.3, 0.5}}},
                                    7);
    auto r = judge_entropy(ids({9, 0, 4}), summaries);
    CHECK(r.accepted == ids({0, 4, 9}));
    CHECK(r.rejected.empty());
  }
  SUBCASE("single device is never removed") {
    auto r = judge_entropy(ids({5}), make_summaries({{5, {1, 0}}}));
    CHECK(r.accepted == ids({5}));
    CHECK(r.rejected.empty());
  }
  SUBCASE("device equal to the group mean stays") {
    SummaryMap s = make_summaries({{0, {1, 0}}, {1, {0, 1}}});
    s.emplace(DeviceId{2}, SoftLabelSummary{DeviceId{2}, {0.5, 0.5}, 2});
    auto r = judge_entropy(ids({0, 1, 2}), s);
    CHECK(r.rejected.empty());
  }
  SUBCASE("device zero is a real device") {
    auto r = judge_entropy(ids({0, 1, 2}), make_summaries({{0, {1, 0}}, {1, {1, 0}}, {2, {0, 1}}}));
    CHECK(r.rejected == ids({0}));
  }
  SUBCASE("errors") {
    auto s = make_summaries({{1, {1, 0}}});
    CHECK_THROWS_AS(judge_entropy(std::vector<DeviceId>{}, s), std::invalid_argument);
    CHECK_THROWS_AS(judge_entropy(ids({2}), s), std::invalid_argument);
    CHECK_THROWS_AS(judge_entropy(ids({1, 1}), s), std::invalid_argument);
    CHECK_THROWS_AS(judge_entropy(ids({1, 2}), s), std::invalid_argument);
  }
}

TEST_CASE("judge_entropy invariants and oracle agreement on random instances") {
  Rng rng = make_rng(23, 0);
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
    const std::size_t c = std::uniform_int_distribution<std::size_t>(2, 5)(rng);
    std::vector<DeviceId> sel;
    SummaryMap summaries;
    for (std::size_t i = 0; i < n; ++i) {
      DeviceId id{3 * i};
      sel.push_back(id);
      summaries.emplace(id, SoftLabelSummary{id, random_prob(c, rng),
                                             std::uniform_int_distribution<std::size_t>(1, 20)(rng)});
    }
    JudgmentResult r = judge_entropy(sel, summaries);
    CHECK_FALSE(r.accepted.empty());
    CHECK(r.accepted.size() + r.rejected.size() == n);
    std::vector<DeviceId> all = r.accepted;
    all.insert(all.end(), r.rejected.begin(), r.rejected.end());
    std::sort(all.begin(), all.end());
    CHECK(all == sel);
    CHECK(r.entropy_trace.size() == r.rejected.size() + 1);
    for (std::size_t k = 1; k < r.entropy_trace.size(); ++k) {
      CHECK(r.entropy_trace[k] > r.entropy_trace[k - 1]);
    }
    CHECK(r.final_entropy >= r.initial_entropy);

    JudgmentResult o = fedentropy::testing::greedy_oracle(sel, summaries);
    CHECK(o.accepted == r.accepted);
    CHECK(o.rejected == r.rejected);
    CHECK(std::abs(o.final_entropy - r.final_entropy) < 1e-12);
  }
}

TEST_CASE("oracle agreement suite") {
  auto report = fedentropy::testing::check_judgment_oracle(1000, 99);
  INFO(report.detail);
  CHECK(report.passed);
}
