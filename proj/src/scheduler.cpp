// SPDX-License-Identifier: Apache-2.0

#include "fedentropy/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace fedentropy {

std::size_t SelectionConfig::round_size() const {
  const auto m = static_cast<std::size_t>(std::llround(static_cast<double>(device_count) * fraction));
  return std::max<std::size_t>(m, 1);
}

void SelectionConfig::validate() const {
  if (device_count < 1) throw std::invalid_argument("devices must be >= 1");
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("fraction must be in (0, 1]");
  }
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw std::invalid_argument("epsilon must be in [0, 1]");
  }
}

DevicePools init_pools(std::size_t device_count) {
  if (device_count < 1) throw std::invalid_argument("init_pools: need at least one device");
  DevicePools pools;
  for (std::size_t k = 0; k < device_count; ++k) pools.positive.insert(DeviceId{k});
  return pools;
}

std::vector<DeviceId> sample_without_replacement(const std::set<DeviceId>& pool,
                                                 std::size_t count, Rng& rng) {
  std::vector<DeviceId> ids(pool.begin(), pool.end());
  count = std::min(count, ids.size());
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, ids.size() - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(count);
  return ids;
}

Selection select_round(DevicePools& pools, const SelectionConfig& cfg, Rng& rng) {
  const std::size_t m = cfg.round_size();
  if (pools.size() < m) {
    throw std::invalid_argument("select_round: pools hold " + std::to_string(pools.size()) +
                                " devices but the round needs " + std::to_string(m));
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Selection sel;
  sel.positive_primary = unit(rng) < cfg.epsilon;

  std::set<DeviceId>& primary = sel.positive_primary ? pools.positive : pools.negative;
  std::set<DeviceId>& secondary = sel.positive_primary ? pools.negative : pools.positive;

  auto first = sample_without_replacement(primary, m, rng);
  for (DeviceId id : first) primary.erase(id);
  auto refill = sample_without_replacement(secondary, m - first.size(), rng);
  for (DeviceId id : refill) secondary.erase(id);

  sel.from_positive = sel.positive_primary ? first.size() : refill.size();
  sel.from_negative = sel.positive_primary ? refill.size() : first.size();
  sel.devices = std::move(first);
  sel.devices.insert(sel.devices.end(), refill.begin(), refill.end());
  std::sort(sel.devices.begin(), sel.devices.end());
  return sel;
}

void return_devices(DevicePools& pools, std::span<const DeviceId> accepted,
                    std::span<const DeviceId> rejected) {
  std::set<DeviceId> seen;
  for (auto group : {accepted, rejected}) {
    for (DeviceId id : group) {
      if (!seen.insert(id).second) {
        throw std::invalid_argument("return_devices: device " + std::to_string(id.value) +
                                    " appears twice");
      }
      if (pools.positive.contains(id) || pools.negative.contains(id)) {
        throw std::invalid_argument("return_devices: device " + std::to_string(id.value) +
                                    " is already pooled");
      }
    }
  }
  pools.positive.insert(accepted.begin(), accepted.end());
  pools.negative.insert(rejected.begin(), rejected.end());
}

}  // namespace fedentropy
