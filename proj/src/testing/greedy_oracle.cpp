// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "fedentropy/testing/oracles.hpp"

namespace fedentropy::testing {

namespace {

struct Entry {
  DeviceId id;
  ProbVector p;
  double size;
};

double naive_entropy(const std::vector<Entry>& entries) {
  const std::size_t c = entries.front().p.size();
  double total = 0.0;
  for (const Entry& e : entries) total += e.size;
  double h = 0.0;
  for (std::size_t j = 0; j < c; ++j) {
    double q = 0.0;
    for (const Entry& e : entries) q += e.p[j] * e.size / total;
    if (q > 0.0) h += -q * std::log(q);
  }
  return std::max(h, 0.0);
}

}  // namespace

JudgmentResult greedy_oracle(std::span<const DeviceId> selected, const SummaryMap& summaries) {
  if (selected.empty()) throw std::invalid_argument("greedy_oracle: empty selection");
  if (summaries.size() != selected.size()) {
    throw std::invalid_argument("greedy_oracle: summaries do not match selection");
  }
  std::vector<DeviceId> order(selected.begin(), selected.end());
  std::sort(order.begin(), order.end());

  std::vector<Entry> pool;
  for (DeviceId id : order) {
    auto it = summaries.find(id);
    if (it == summaries.end()) throw std::invalid_argument("greedy_oracle: missing summary");
    pool.push_back({id, it->second.p, static_cast<double>(it->second.sample_count)});
  }

  JudgmentResult out;
  out.initial_entropy = naive_entropy(pool);
  out.entropy_trace.push_back(out.initial_entropy);

  while (pool.size() > 1) {
    double best = naive_entropy(pool);
    std::optional<DeviceId> index;
    for (DeviceId k : order) {
      std::vector<Entry> trial;
      bool present = false;
      for (const Entry& e : pool) {
        if (e.id == k) {
          present = true;
        } else {
          trial.push_back(e);
        }
      }
      if (!present) continue;
      const double h = naive_entropy(trial);
      if (h > best + kEntropyImprovementTolerance) {
        best = h;
        index = k;
      }
    }
    if (!index) break;
    out.rejected.push_back(*index);
    std::erase_if(pool, [&](const Entry& e) { return e.id == *index; });
    out.entropy_trace.push_back(naive_entropy(pool));
  }

  for (const Entry& e : pool) out.accepted.push_back(e.id);
  std::sort(out.rejected.begin(), out.rejected.end());
  out.final_entropy = naive_entropy(pool);
  return out;
}

}  // namespace fedentropy::testing
