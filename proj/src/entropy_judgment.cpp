// SPDX-License-Identifier: Apache-2.0

#include "fedentropy/entropy_judgment.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

namespace fedentropy {

namespace {

struct Member {
  DeviceId id;
  const ProbVector* p;
  double weight;
};

std::vector<double> weighted_sum(const std::vector<Member>& members,
                                 const std::vector<bool>& active, std::size_t classes,
                                 double& total_weight) {
  std::vector<double> sum(classes, 0.0);
  total_weight = 0.0;
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (!active[i]) continue;
    for (std::size_t j = 0; j < classes; ++j) sum[j] += (*members[i].p)[j] * members[i].weight;
    total_weight += members[i].weight;
  }
  return sum;
}

double entropy_of_mixture(const std::vector<double>& sum, double total_weight) {
  std::vector<double> mean(sum.size());
  for (std::size_t j = 0; j < sum.size(); ++j) mean[j] = sum[j] / total_weight;
  return entropy(mean);
}

}  // namespace

SoftLabelSummary aggregate_soft_labels(const ModelParams& model, const Batch& device_data,
                                       DeviceId device) {
  if (device_data.size() == 0) {
    throw std::invalid_argument("aggregate_soft_labels: device has no samples");
  }
  ForwardResult out = forward(model, device_data);
  SoftLabelSummary summary{device, ProbVector(out.probs.cols(), 0.0), device_data.size()};
  for (std::size_t i = 0; i < out.probs.rows(); ++i) {
    auto row = out.probs.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) summary.p[j] += row[j];
  }
  for (double& v : summary.p) v /= static_cast<double>(device_data.size());
  return summary;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h > 0.0 ? h : 0.0;
}

double get_entropy(std::span<const SoftLabelSummary> summaries) {
  if (summaries.empty()) throw std::invalid_argument("get_entropy: no summaries");
  const std::size_t classes = summaries.front().p.size();
  std::vector<double> mixed(classes, 0.0);
  double total = 0.0;
  for (const SoftLabelSummary& s : summaries) {
    if (s.p.size() != classes) throw std::invalid_argument("get_entropy: class counts differ");
    const double l = static_cast<double>(s.sample_count);
    for (std::size_t j = 0; j < classes; ++j) mixed[j] += s.p[j] * l;
    total += l;
  }
  if (!(total > 0.0)) throw std::invalid_argument("get_entropy: total sample count is zero");
  for (double& v : mixed) v /= total;
  return entropy(mixed);
}

JudgmentResult judge_entropy(std::span<const DeviceId> selected, const SummaryMap& summaries) {
  if (selected.empty()) throw std::invalid_argument("judge_entropy: no devices selected");

  std::vector<DeviceId> ids(selected.begin(), selected.end());
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw std::invalid_argument("judge_entropy: duplicate device in selection");
  }
  if (summaries.size() != ids.size()) {
    throw std::invalid_argument("judge_entropy: summaries do not match the selection");
  }

  std::vector<Member> members;
  members.reserve(ids.size());
  std::size_t classes = 0;
  for (DeviceId id : ids) {
    auto it = summaries.find(id);
    if (it == summaries.end()) {
      throw std::invalid_argument("judge_entropy: missing summary for device " +
                                  std::to_string(id.value));
    }
    const SoftLabelSummary& s = it->second;
    if (s.sample_count == 0) {
      throw std::invalid_argument("judge_entropy: device " + std::to_string(id.value) +
                                  " reports zero samples");
    }
    if (members.empty()) classes = s.p.size();
    if (s.p.size() != classes) throw std::invalid_argument("judge_entropy: class counts differ");
    members.push_back({id, &s.p, static_cast<double>(s.sample_count)});
  }

  std::vector<bool> active(members.size(), true);
  std::size_t remaining = members.size();
  double total = 0.0;
  std::vector<double> sum = weighted_sum(members, active, classes, total);
  double current = entropy_of_mixture(sum, total);

  JudgmentResult result;
  result.initial_entropy = current;
  result.entropy_trace.push_back(current);

  std::vector<double> without(classes);
  while (remaining > 1) {
    double best = current;
    std::optional<std::size_t> best_index;
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (!active[i]) continue;
      const Member& m = members[i];
      for (std::size_t j = 0; j < classes; ++j) without[j] = sum[j] - (*m.p)[j] * m.weight;
      const double h = entropy_of_mixture(without, total - m.weight);
      if (h > best + kEntropyImprovementTolerance) {
        best = h;
        best_index = i;
      }
    }
    if (!best_index) break;

    active[*best_index] = false;
    --remaining;
    sum = weighted_sum(members, active, classes, total);
    current = entropy_of_mixture(sum, total);
    result.entropy_trace.push_back(current);
  }

  for (std::size_t i = 0; i < members.size(); ++i) {
    (active[i] ? result.accepted : result.rejected).push_back(members[i].id);
  }
  result.final_entropy = current;
  return result;
}

}  // namespace fedentropy
