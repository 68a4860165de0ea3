// SPDX-License-Identifier: Apache-2.0
//
// Synthetic Gaussian-blob datasets and non-IID partitions across devices.

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "fedentropy/numerics.hpp"

namespace fedentropy {

struct Dataset {
  DenseMatrix inputs;
  std::vector<std::size_t> labels;
  std::size_t class_count = 0;

  std::size_t size() const { return labels.size(); }

  /// Rows selected by `indices`, in that order.
  Batch subset(std::span<const std::size_t> indices) const;
  Batch as_batch() const;
};

struct SplitDataset {
  Dataset train;
  Dataset test;
};

struct BlobSpec {
  std::size_t class_count = 10;
  std::size_t dims = 16;
  std::size_t per_class = 200;
  double spread = 0.5;
};

/// One isotropic Gaussian cluster per class. Means are drawn in [-1, 1]^d
/// with rejection so that pairwise distances reach at least 2 * spread when
/// feasible. Each class is split 80/20 (floor of 20% to test).
SplitDataset make_blobs(const BlobSpec& spec, std::uint64_t seed);

enum class PartitionCase { kSingleLabel, kTwoLabel, kDirichlet };

std::string_view to_string(PartitionCase kind);
PartitionCase parse_partition_case(std::string_view name);

struct PartitionSpec {
  PartitionCase kind = PartitionCase::kSingleLabel;
  double beta = 0.1;
  std::size_t device_count = 20;
  std::uint64_t seed = 1;
};

/// Device k owns dataset rows assignments[k]. Lists are disjoint and
/// non-empty; rows left unassigned are simply unused.
struct Partition {
  std::vector<std::vector<std::size_t>> assignments;

  std::size_t device_count() const { return assignments.size(); }
};

Partition partition_single_label(const Dataset& dataset, std::size_t device_count,
                                 std::uint64_t seed);
Partition partition_two_label(const Dataset& dataset, std::size_t device_count,
                              std::uint64_t seed);
Partition partition_dirichlet(const Dataset& dataset, std::size_t device_count, double beta,
                              std::uint64_t seed);
Partition make_partition(const Dataset& dataset, const PartitionSpec& spec);

/// counts[k][j] = number of class-j samples on device k.
using ClassHistogram = std::vector<std::vector<std::size_t>>;

ClassHistogram partition_stats(const Partition& partition, const Dataset& dataset);

/// Header `device,class_0,...,class_{c-1}`, one row per device.
void write_partition_stats_csv(std::ostream& out, const ClassHistogram& table);

}  // namespace fedentropy
