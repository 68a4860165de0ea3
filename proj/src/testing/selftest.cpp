// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>
#include <sstream>

#include "fedentropy/testing/oracles.hpp"

namespace fedentropy::testing {

namespace {

ProbVector random_soft_label(std::size_t c, const SummaryMap& earlier, Rng& rng) {
  std::uniform_int_distribution<int> kind(0, 4);
  std::uniform_int_distribution<std::size_t> cls(0, c - 1);
  ProbVector p(c, 0.0);
  switch (kind(rng)) {
    case 0:  // one-hot
      p[cls(rng)] = 1.0;
      return p;
    case 1:  // duplicate of an earlier device, to exercise ties
      if (!earlier.empty()) {
        auto it = earlier.begin();
        std::advance(it, std::uniform_int_distribution<std::size_t>(0, earlier.size() - 1)(rng));
        return it->second.p;
      }
      [[fallthrough]];
    case 2: {  // peaked
      const double mass = std::uniform_real_distribution<double>(0.5, 1.0)(rng);
      std::fill(p.begin(), p.end(), (1.0 - mass) / static_cast<double>(c));
      p[cls(rng)] += mass;
      return p;
    }
    default: {  // flat Dirichlet
      std::gamma_distribution<double> g(1.0, 1.0);
      double s = 0.0;
      for (double& v : p) s += (v = g(rng));
      for (double& v : p) v /= s;
      return p;
    }
  }
}

std::string describe(const std::vector<DeviceId>& ids) {
  std::ostringstream os;
  os << '{';
  for (std::size_t i = 0; i < ids.size(); ++i) os << (i ? "," : "") << ids[i];
  os << '}';
  return os.str();
}

}  // namespace

CheckReport check_judgment_oracle(std::size_t instances, std::uint64_t seed) {
  CheckReport report{"judgment matches greedy oracle", true, {}};
  Rng rng = make_rng(seed, 0x6a756467);
  std::size_t removals = 0;
  for (std::size_t t = 0; t < instances; ++t) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
    const std::size_t c = std::uniform_int_distribution<std::size_t>(2, 5)(rng);
    std::set<std::size_t> chosen;
    while (chosen.size() < n) chosen.insert(std::uniform_int_distribution<std::size_t>(0, 19)(rng));

    std::vector<DeviceId> selected;
    SummaryMap summaries;
    for (std::size_t raw : chosen) {
      DeviceId id{raw};
      selected.push_back(id);
      const std::size_t count = std::uniform_int_distribution<std::size_t>(1, 5)(rng);
      summaries.emplace(id, SoftLabelSummary{id, random_soft_label(c, summaries, rng), count});
    }
    std::shuffle(selected.begin(), selected.end(), rng);

    const JudgmentResult fast = judge_entropy(selected, summaries);
    const JudgmentResult slow = greedy_oracle(selected, summaries);
    removals += fast.rejected.size();
    if (fast.accepted != slow.accepted || fast.rejected != slow.rejected ||
        std::abs(fast.final_entropy - slow.final_entropy) > 1e-12) {
      std::ostringstream os;
      os << "instance " << t << ": accepted " << describe(fast.accepted) << " vs "
         << describe(slow.accepted) << ", final entropy " << fast.final_entropy << " vs "
         << slow.final_entropy;
      report.passed = false;
      report.detail = os.str();
      return report;
    }
  }
  report.detail = std::to_string(instances) + " instances, " + std::to_string(removals) +
                  " removals, all identical";
  return report;
}

CheckReport check_gradients(std::size_t instances, std::uint64_t seed) {
  CheckReport report{"analytic gradients match finite differences", true, {}};
  Rng rng = make_rng(seed, 0x67726164);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = 0.0;
  for (std::size_t t = 0; t < instances; ++t) {
    const std::size_t d = std::uniform_int_distribution<std::size_t>(2, 6)(rng);
    const std::size_t c = std::uniform_int_distribution<std::size_t>(2, 5)(rng);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
    std::vector<std::size_t> widths{d};
    if (t % 3 == 2) widths.push_back(std::uniform_int_distribution<std::size_t>(2, 6)(rng));
    widths.push_back(c);
    ModelParams model = random_model(widths, rng);

    Batch batch{DenseMatrix(n, d), {}};
    for (double& v : batch.inputs.values()) v = normal(rng);
    for (std::size_t i = 0; i < n; ++i) {
      batch.labels.push_back(std::uniform_int_distribution<std::size_t>(0, c - 1)(rng));
    }

    ParamSet anchor = model.layers;
    for (std::size_t i = 0; i < parameter_count(anchor); ++i) {
      parameter_at(anchor, i) += 0.3 * normal(rng);
    }
    std::optional<ProximalTerm> prox;
    if (t % 2 == 1) prox = ProximalTerm{std::uniform_real_distribution<double>(0.01, 1.0)(rng),
                                        std::cref(anchor)};

    const LossAndGrad analytic = loss_and_grad(model, batch, prox);
    const ParamSet numeric = finite_diff_grad(model, batch, prox);
    const double err = max_relative_error(analytic.grads, numeric);
    worst = std::max(worst, err);
    if (!(err < 1e-4)) {
      report.passed = false;
      report.detail = "instance " + std::to_string(t) + ": max relative error " +
                      std::to_string(err);
      return report;
    }
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%zu instances, worst relative error %.3e", instances, worst);
  report.detail = buf;
  return report;
}

}  // namespace fedentropy::testing
