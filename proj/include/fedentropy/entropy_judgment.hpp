// SPDX-License-Identifier: Apache-2.0
//
// Soft-label summaries and the greedy maximum-entropy device filter.
//
// Each selected device reports the mean of its model's softmax outputs over
// its local samples (an "aggregated soft label") together with its sample
// count. The cloud pools these as a count-weighted mixture and repeatedly
// drops the single device whose removal raises the mixture's entropy the
// most, stopping once no removal helps. Dropped devices are "rejected" and do
// not upload their models.

#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "fedentropy/device_id.hpp"
#include "fedentropy/numerics.hpp"

namespace fedentropy {

struct SoftLabelSummary {
  DeviceId device;
  ProbVector p;
  std::size_t sample_count = 0;
};

using SummaryMap = std::map<DeviceId, SoftLabelSummary>;

struct JudgmentResult {
  std::vector<DeviceId> accepted;  // ascending
  std::vector<DeviceId> rejected;  // ascending
  double initial_entropy = 0.0;
  double final_entropy = 0.0;
  /// Group entropy before the first removal and after each committed one.
  std::vector<double> entropy_trace;
};

/// A removal counts as an improvement only if it raises the group entropy by
/// more than this. Absorbs rounding so that mathematically equal candidates
/// tie and fall to the lowest device id.
inline constexpr double kEntropyImprovementTolerance = 1e-12;

/// Mean softmax output of `model` over all rows of `device_data`.
SoftLabelSummary aggregate_soft_labels(const ModelParams& model, const Batch& device_data,
                                       DeviceId device);

/// Shannon entropy in nats, with 0 * log 0 = 0.
double entropy(std::span<const double> p);

/// Entropy of the sample-count-weighted mean of the summaries' p vectors.
double get_entropy(std::span<const SoftLabelSummary> summaries);

/// Greedy filter over `selected`. `summaries` must hold exactly one entry
/// per selected device. The last remaining device is never removed.
JudgmentResult judge_entropy(std::span<const DeviceId> selected, const SummaryMap& summaries);

}  // namespace fedentropy
