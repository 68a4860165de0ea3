// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstddef>
#include <functional>
#include <ostream>

namespace fedentropy {

/// Zero-based index of a device in the federation.
struct DeviceId {
  std::size_t value = 0;

  constexpr DeviceId() = default;
  constexpr explicit DeviceId(std::size_t v) : value(v) {}

  constexpr auto operator<=>(const DeviceId&) const = default;
};

inline std::ostream& operator<<(std::ostream& os, DeviceId id) { return os << id.value; }

}  // namespace fedentropy

template <>
struct std::hash<fedentropy::DeviceId> {
  std::size_t operator()(fedentropy::DeviceId id) const noexcept {
    return std::hash<std::size_t>{}(id.value);
  }
};
