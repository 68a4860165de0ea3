// SPDX-License-Identifier: Apache-2.0

#include "fedentropy/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

namespace fedentropy {

namespace {

// Stream tags keep the generators of different consumers apart.
constexpr std::uint64_t kBlobStream = 0x626c6f62;
constexpr std::uint64_t kPartitionStream = 0x70617274;

constexpr int kMeanPlacementAttempts = 1000;

void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

std::vector<std::vector<std::size_t>> rows_by_class(const Dataset& dataset) {
  std::vector<std::vector<std::size_t>> rows(dataset.class_count);
  for (std::size_t i = 0; i < dataset.size(); ++i) rows[dataset.labels[i]].push_back(i);
  return rows;
}

// Splits `rows` into `parts` consecutive chunks whose sizes differ by at most one.
std::vector<std::vector<std::size_t>> split_even(const std::vector<std::size_t>& rows,
                                                 std::size_t parts) {
  std::vector<std::vector<std::size_t>> chunks(parts);
  const std::size_t base = rows.size() / parts;
  const std::size_t extra = rows.size() % parts;
  std::size_t pos = 0;
  for (std::size_t p = 0; p < parts; ++p) {
    const std::size_t len = base + (p < extra ? 1 : 0);
    chunks[p].assign(rows.begin() + pos, rows.begin() + pos + len);
    pos += len;
  }
  return chunks;
}

// Largest-remainder apportionment of `total` items by `weights` (sum 1).
std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& weights) {
  std::vector<std::size_t> counts(weights.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const double exact = weights[k] * static_cast<double>(total);
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[k];
    remainders.emplace_back(exact - std::floor(exact), k);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total; i = (i + 1) % remainders.size()) {
    ++counts[remainders[i].second];
    ++assigned;
  }
  // Floating error can push the floor sum past total; trim if so.
  while (assigned > total) {
    auto it = std::max_element(counts.begin(), counts.end());
    --*it;
    --assigned;
  }
  return counts;
}

void finalize(Partition& partition) {
  for (auto& rows : partition.assignments) {
    if (rows.empty()) throw std::invalid_argument("partition produced an empty device");
    std::sort(rows.begin(), rows.end());
  }
}

}  // namespace

Batch Dataset::subset(std::span<const std::size_t> indices) const {
  Batch batch;
  batch.inputs = DenseMatrix(indices.size(), inputs.cols());
  batch.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = inputs.row(indices[i]);
    std::copy(src.begin(), src.end(), batch.inputs.row(i).begin());
    batch.labels.push_back(labels[indices[i]]);
  }
  return batch;
}

Batch Dataset::as_batch() const { return Batch{inputs, labels}; }

SplitDataset make_blobs(const BlobSpec& spec, std::uint64_t seed) {
  require(spec.class_count >= 2, "make_blobs: class_count must be >= 2");
  require(spec.dims >= 2, "make_blobs: dims must be >= 2");
  require(spec.per_class >= 1, "make_blobs: per_class must be >= 1");
  require(spec.spread > 0.0 && std::isfinite(spec.spread), "make_blobs: spread must be > 0");

  Rng rng = make_rng(seed, kBlobStream);
  std::uniform_real_distribution<double> box(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, spec.spread);

  const std::size_t c = spec.class_count;
  const std::size_t d = spec.dims;
  const double min_gap = 2.0 * spec.spread;

  DenseMatrix means(c, d);
  for (std::size_t j = 0; j < c; ++j) {
    std::vector<double> best(d);
    double best_gap = -1.0;
    for (int attempt = 0; attempt < kMeanPlacementAttempts; ++attempt) {
      std::vector<double> candidate(d);
      for (double& v : candidate) v = box(rng);
      double gap = std::numeric_limits<double>::infinity();
      for (std::size_t prev = 0; prev < j; ++prev) {
        gap = std::min(gap, distance(candidate, means.row(prev)));
      }
      if (gap > best_gap) {
        best = std::move(candidate);
        best_gap = gap;
      }
      if (best_gap >= min_gap) break;
    }
    std::copy(best.begin(), best.end(), means.row(j).begin());
  }

  const std::size_t test_per_class = spec.per_class / 5;
  const std::size_t train_per_class = spec.per_class - test_per_class;

  SplitDataset out;
  out.train.class_count = c;
  out.test.class_count = c;
  out.train.inputs = DenseMatrix(c * train_per_class, d);
  out.test.inputs = DenseMatrix(c * test_per_class, d);
  std::size_t train_row = 0;
  std::size_t test_row = 0;
  for (std::size_t j = 0; j < c; ++j) {
    for (std::size_t s = 0; s < spec.per_class; ++s) {
      const bool to_train = s < train_per_class;
      Dataset& target = to_train ? out.train : out.test;
      std::size_t& row = to_train ? train_row : test_row;
      auto x = target.inputs.row(row++);
      for (std::size_t k = 0; k < d; ++k) x[k] = means(j, k) + noise(rng);
      target.labels.push_back(j);
    }
  }
  return out;
}

std::string_view to_string(PartitionCase kind) {
  switch (kind) {
    case PartitionCase::kSingleLabel:
      return "single_label";
    case PartitionCase::kTwoLabel:
      return "two_label";
    case PartitionCase::kDirichlet:
      return "dirichlet";
  }
  return "unknown";
}

PartitionCase parse_partition_case(std::string_view name) {
  if (name == "single_label" || name == "1") return PartitionCase::kSingleLabel;
  if (name == "two_label" || name == "2") return PartitionCase::kTwoLabel;
  if (name == "dirichlet" || name == "3") return PartitionCase::kDirichlet;
  throw std::invalid_argument("unknown partition case '" + std::string(name) + "'");
}

Partition partition_single_label(const Dataset& dataset, std::size_t device_count,
                                 std::uint64_t seed) {
  require(device_count >= 1, "partition: device_count must be >= 1");
  Rng rng = make_rng(seed, kPartitionStream);
  const std::size_t c = dataset.class_count;
  auto by_class = rows_by_class(dataset);

  Partition partition;
  partition.assignments.resize(device_count);
  for (std::size_t j = 0; j < c && j < device_count; ++j) {
    std::vector<std::size_t> owners;
    for (std::size_t k = j; k < device_count; k += c) owners.push_back(k);
    std::shuffle(by_class[j].begin(), by_class[j].end(), rng);
    if (by_class[j].size() < owners.size()) {
      throw std::invalid_argument("partition: class " + std::to_string(j) +
                                  " has fewer samples than devices assigned to it");
    }
    auto chunks = split_even(by_class[j], owners.size());
    for (std::size_t i = 0; i < owners.size(); ++i) {
      partition.assignments[owners[i]] = std::move(chunks[i]);
    }
  }
  finalize(partition);
  return partition;
}

Partition partition_two_label(const Dataset& dataset, std::size_t device_count,
                              std::uint64_t seed) {
  require(device_count >= 1, "partition: device_count must be >= 1");
  const std::size_t c = dataset.class_count;
  require(c >= 2, "partition_two_label: needs at least two classes");
  Rng rng = make_rng(seed, kPartitionStream);

  std::vector<std::size_t> order(c);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  // Neighbours on a random cycle over the classes; every class sits in two
  // pairs (or the single pair when c == 2).
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (c == 2) {
    pairs.emplace_back(order[0], order[1]);
  } else {
    for (std::size_t j = 0; j < c; ++j) pairs.emplace_back(order[j], order[(j + 1) % c]);
  }

  std::vector<std::pair<std::size_t, std::size_t>> device_pairs(device_count);
  std::vector<std::size_t> slots(c, 0);
  for (std::size_t k = 0; k < device_count; ++k) {
    device_pairs[k] = pairs[k % pairs.size()];
    ++slots[device_pairs[k].first];
    ++slots[device_pairs[k].second];
  }

  auto by_class = rows_by_class(dataset);
  for (auto& rows : by_class) std::shuffle(rows.begin(), rows.end(), rng);
  std::vector<std::size_t> cursor(c, 0);

  Partition partition;
  partition.assignments.resize(device_count);
  for (std::size_t k = 0; k < device_count; ++k) {
    const auto [a, b] = device_pairs[k];
    const std::size_t per_label =
        std::min(by_class[a].size() / slots[a], by_class[b].size() / slots[b]);
    if (per_label == 0) {
      throw std::invalid_argument("partition_two_label: too few samples for " +
                                  std::to_string(device_count) + " devices");
    }
    for (std::size_t label : {a, b}) {
      auto& rows = partition.assignments[k];
      rows.insert(rows.end(), by_class[label].begin() + cursor[label],
                  by_class[label].begin() + cursor[label] + per_label);
      cursor[label] += per_label;
    }
  }
  finalize(partition);
  return partition;
}

Partition partition_dirichlet(const Dataset& dataset, std::size_t device_count, double beta,
                              std::uint64_t seed) {
  require(device_count >= 1, "partition: device_count must be >= 1");
  require(beta > 0.0 && std::isfinite(beta), "partition_dirichlet: beta must be > 0");
  require(dataset.size() >= device_count,
          "partition_dirichlet: fewer samples than devices");
  Rng rng = make_rng(seed, kPartitionStream);
  std::gamma_distribution<double> gamma(beta, 1.0);

  Partition partition;
  partition.assignments.resize(device_count);
  auto by_class = rows_by_class(dataset);
  for (auto& rows : by_class) {
    std::vector<double> weights(device_count);
    double total = 0.0;
    for (double& w : weights) {
      w = gamma(rng);
      total += w;
    }
    if (!(total > 0.0)) {
      // Every draw underflowed; give the class to one device.
      std::fill(weights.begin(), weights.end(), 0.0);
      weights[std::uniform_int_distribution<std::size_t>(0, device_count - 1)(rng)] = 1.0;
      total = 1.0;
    }
    for (double& w : weights) w /= total;

    std::shuffle(rows.begin(), rows.end(), rng);
    auto counts = apportion(rows.size(), weights);
    std::size_t pos = 0;
    for (std::size_t k = 0; k < device_count; ++k) {
      auto& dst = partition.assignments[k];
      dst.insert(dst.end(), rows.begin() + pos, rows.begin() + pos + counts[k]);
      pos += counts[k];
    }
  }

  // l_k must be positive: move one random sample from the largest device.
  for (std::size_t k = 0; k < device_count; ++k) {
    if (!partition.assignments[k].empty()) continue;
    auto donor = std::max_element(
        partition.assignments.begin(), partition.assignments.end(),
        [](const auto& a, const auto& b) { return a.size() < b.size(); });
    std::uniform_int_distribution<std::size_t> pick(0, donor->size() - 1);
    const std::size_t at = pick(rng);
    partition.assignments[k].push_back((*donor)[at]);
    donor->erase(donor->begin() + static_cast<std::ptrdiff_t>(at));
  }
  finalize(partition);
  return partition;
}

Partition make_partition(const Dataset& dataset, const PartitionSpec& spec) {
  switch (spec.kind) {
    case PartitionCase::kSingleLabel:
      return partition_single_label(dataset, spec.device_count, spec.seed);
    case PartitionCase::kTwoLabel:
      return partition_two_label(dataset, spec.device_count, spec.seed);
    case PartitionCase::kDirichlet:
      return partition_dirichlet(dataset, spec.device_count, spec.beta, spec.seed);
  }
  throw std::invalid_argument("unknown partition case");
}

ClassHistogram partition_stats(const Partition& partition, const Dataset& dataset) {
  ClassHistogram table(partition.device_count(),
                       std::vector<std::size_t>(dataset.class_count, 0));
  for (std::size_t k = 0; k < partition.device_count(); ++k) {
    for (std::size_t row : partition.assignments[k]) {
      if (row >= dataset.size()) throw std::out_of_range("partition index outside dataset");
      ++table[k][dataset.labels[row]];
    }
  }
  return table;
}

void write_partition_stats_csv(std::ostream& out, const ClassHistogram& table) {
  const std::size_t c = table.empty() ? 0 : table.front().size();
  out << "device";
  for (std::size_t j = 0; j < c; ++j) out << ",class_" << j;
  out << '\n';
  for (std::size_t k = 0; k < table.size(); ++k) {
    out << k;
    for (std::size_t count : table[k]) out << ',' << count;
    out << '\n';
  }
}

}  // namespace fedentropy
