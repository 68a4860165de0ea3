// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration, multi-seed/multi-mode runs, and CSV output.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fedentropy/datagen.hpp"
#include "fedentropy/federation.hpp"
#include "fedentropy/scheduler.hpp"

namespace fedentropy {

enum class Mode { kFedEntropy, kFedAvgRandom, kFedProxRandom, kFedProxFedEntropy };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view name);

struct ExperimentConfig {
  BlobSpec blobs;
  PartitionCase partition = PartitionCase::kSingleLabel;
  double beta = 0.1;
  SelectionConfig selection;
  ClientConfig client;
  std::size_t hidden_units = 0;  // 0: linear softmax
  std::size_t rounds = 100;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<Mode> modes{Mode::kFedEntropy, Mode::kFedAvgRandom};
  std::optional<double> target_accuracy = 0.8;
  std::size_t last_rounds_window = 10;
  std::size_t workers = 0;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// Sets one `key = value` entry (see README for the key list).
void apply_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value);

/// Parses flat `key = value` text; `#` starts a comment. Unknown keys are errors.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

struct RunRecord {
  Mode mode;
  std::uint64_t seed;
  std::vector<RoundReport> reports;
};

struct SummaryRow {
  Mode mode;
  std::size_t seeds = 0;
  double accuracy_mean = 0.0;  // mean over seeds of the last-window mean accuracy
  double accuracy_std = 0.0;
  std::optional<double> target;
  /// Unreached seeds count as rounds + 1 here.
  double rounds_to_target_mean = 0.0;
  double rounds_to_target_std = 0.0;
  std::size_t seeds_unreached = 0;
  double upload_bytes_to_target_mean = 0.0;
  double upload_bytes_total_mean = 0.0;
  std::size_t rounds = 0;
};

struct ExperimentResult {
  std::vector<RunRecord> runs;
  std::vector<SummaryRow> summaries;
};

/// One TrainingState per (mode, seed); data, partition and initial model
/// depend only on the seed so modes are compared on identical inputs.
RunRecord run_single(const ExperimentConfig& cfg, Mode mode, std::uint64_t seed);
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// First round (1-based) whose accuracy reaches `target`.
std::optional<std::size_t> rounds_to_target(const std::vector<RoundReport>& reports,
                                            double target);
double last_window_accuracy(const std::vector<RoundReport>& reports, std::size_t window);

std::vector<SummaryRow> summarize(const std::vector<RunRecord>& runs,
                                  const ExperimentConfig& cfg);

void write_round_csv(std::ostream& out, const std::vector<RunRecord>& runs);
void write_round_csv(const std::filesystem::path& path, const std::vector<RunRecord>& runs);
void write_summary(std::ostream& out, const std::vector<SummaryRow>& rows);
void write_summary(const std::filesystem::path& path, const std::vector<SummaryRow>& rows);

}  // namespace fedentropy
