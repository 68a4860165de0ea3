// SPDX-License-Identifier: Apache-2.0
//
// Positive/negative device pools with epsilon-greedy round selection.

#pragma once

#include <cstddef>
#include <set>
#include <span>
#include <vector>

#include "fedentropy/device_id.hpp"
#include "fedentropy/numerics.hpp"

namespace fedentropy {

struct DevicePools {
  std::set<DeviceId> positive;
  std::set<DeviceId> negative;

  std::size_t size() const { return positive.size() + negative.size(); }
};

struct SelectionConfig {
  std::size_t device_count = 20;
  double fraction = 0.25;
  double epsilon = 0.8;

  /// m = round(N * C), at least 1.
  std::size_t round_size() const;
  void validate() const;
};

struct Selection {
  std::vector<DeviceId> devices;  // ascending
  bool positive_primary = true;
  std::size_t from_positive = 0;
  std::size_t from_negative = 0;
};

DevicePools init_pools(std::size_t device_count);

/// Draws u ~ U[0,1); the positive pool is primary when u < epsilon. Samples
/// up to m devices uniformly without replacement from the primary pool and
/// fills any shortfall from the other one. Selected ids leave their pools.
Selection select_round(DevicePools& pools, const SelectionConfig& cfg, Rng& rng);

/// Accepted devices join the positive pool, rejected ones the negative pool.
void return_devices(DevicePools& pools, std::span<const DeviceId> accepted,
                    std::span<const DeviceId> rejected);

/// Uniform sample of `count` ids without replacement, in draw order.
std::vector<DeviceId> sample_without_replacement(const std::set<DeviceId>& pool,
                                                 std::size_t count, Rng& rng);

}  // namespace fedentropy
