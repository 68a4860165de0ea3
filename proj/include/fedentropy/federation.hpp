// SPDX-License-Identifier: Apache-2.0
//
// Cloud/device training loop: selection, local training, soft-label
// judgment, selective model upload, weighted aggregation and evaluation.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "fedentropy/datagen.hpp"
#include "fedentropy/device_id.hpp"
#include "fedentropy/entropy_judgment.hpp"
#include "fedentropy/numerics.hpp"
#include "fedentropy/scheduler.hpp"

namespace fedentropy {

enum class LocalOptimizer { kFedAvg, kFedProx };

struct ClientConfig {
  std::size_t local_epochs = 5;
  std::size_t batch_size = 50;
  double learning_rate = 0.01;
  double momentum = 0.5;
  LocalOptimizer optimizer = LocalOptimizer::kFedAvg;
  double mu = 0.01;  // FedProx only

  void validate() const;
};

struct ClientResult {
  ModelParams model;
  SoftLabelSummary summary;
  /// Loss over all local samples after each epoch.
  std::vector<double> epoch_losses;
};

/// Trains a copy of `global` on `data` with fresh (zero) velocity, then
/// summarises the trained model's soft labels over every local sample.
ClientResult client_update(const ModelParams& global, const Batch& data, DeviceId device,
                           const ClientConfig& cfg, Rng& rng);

/// sum_i l_i * w_i / sum_i l_i over `accepted`; velocity of the result is zero.
ModelParams aggregate(const std::map<DeviceId, ModelParams>& models,
                      const std::map<DeviceId, std::size_t>& counts,
                      std::span<const DeviceId> accepted);

/// Fraction of argmax-correct predictions; ties go to the lowest class.
double evaluate(const ModelParams& model, const Batch& test);

struct RoundReport {
  std::size_t round = 0;  // 1-based
  std::vector<DeviceId> selected;
  std::vector<DeviceId> accepted;
  std::vector<DeviceId> rejected;
  bool positive_primary = true;
  double entropy_initial = 0.0;
  double entropy_final = 0.0;
  std::uint64_t bytes_models = 0;
  std::uint64_t bytes_labels = 0;
  double test_accuracy = 0.0;
  std::size_t positive_pool = 0;  // pool sizes after the round
  std::size_t negative_pool = 0;
  double wall_time_seconds = 0.0;
};

struct FederationConfig {
  SelectionConfig selection;
  ClientConfig client;
  /// Concurrent client updates per round; 0 picks the hardware concurrency.
  std::size_t workers = 0;
};

struct TrainingState {
  ModelParams global;
  DevicePools pools;
  std::vector<Batch> device_data;
  Batch test;
  std::size_t class_count = 0;
  std::size_t round = 0;
  Rng rng;
};

TrainingState make_training_state(const SplitDataset& data, const Partition& partition,
                                  ModelParams initial_model, std::uint64_t seed);

std::uint64_t model_bytes(const ModelParams& model);

/// One FedEntropy round: pool-based selection, judgment, upload of accepted
/// models only, aggregation, pool update, evaluation.
RoundReport run_round(TrainingState& state, const FederationConfig& cfg);

/// Plain FedAvg round: uniform selection over all devices, every selected
/// model is aggregated, pools are left untouched.
RoundReport baseline_random_selection_round(TrainingState& state, const FederationConfig& cfg);

enum class SelectionPolicy { kFedEntropy, kRandom };

struct TrainingResult {
  std::vector<RoundReport> reports;
  ModelParams final_model;
};

TrainingResult run_training(TrainingState state, const FederationConfig& cfg, std::size_t rounds,
                            SelectionPolicy policy);

}  // namespace fedentropy
