// SPDX-License-Identifier: Apache-2.0

#include "fedentropy/federation.hpp"

#include <algorithm>
#include <chrono>
#include <future>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>

namespace fedentropy {

namespace {

constexpr std::uint64_t kTrainingStream = 0x7472616e;

void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

std::vector<ClientResult> train_clients(const TrainingState& state, const FederationConfig& cfg,
                                        std::span<const DeviceId> devices,
                                        std::uint64_t round_seed) {
  auto train_one = [&](DeviceId id) {
    Rng rng = make_rng(round_seed, id.value);
    return client_update(state.global, state.device_data[id.value], id, cfg.client, rng);
  };

  std::size_t workers = cfg.workers == 0 ? std::thread::hardware_concurrency() : cfg.workers;
  workers = std::clamp<std::size_t>(workers, 1, devices.size());

  std::vector<ClientResult> results;
  results.reserve(devices.size());
  if (workers == 1) {
    for (DeviceId id : devices) results.push_back(train_one(id));
    return results;
  }

  // Each client owns its generator, so results do not depend on scheduling.
  std::vector<std::future<ClientResult>> pending;
  pending.reserve(devices.size());
  for (std::size_t start = 0; start < devices.size(); start += workers) {
    const std::size_t stop = std::min(devices.size(), start + workers);
    for (std::size_t i = start; i < stop; ++i) {
      pending.push_back(std::async(std::launch::async, train_one, devices[i]));
    }
    for (std::size_t i = start; i < stop; ++i) results.push_back(pending[i].get());
  }
  return results;
}

RoundReport execute_round(TrainingState& state, const FederationConfig& cfg,
                          const Selection& selection, bool judge) {
  const auto started = std::chrono::steady_clock::now();
  const std::uint64_t round_seed = state.rng();

  std::vector<ClientResult> results = train_clients(state, cfg, selection.devices, round_seed);

  SummaryMap summaries;
  std::map<DeviceId, std::size_t> counts;
  for (const ClientResult& r : results) {
    summaries.emplace(r.summary.device, r.summary);
    counts.emplace(r.summary.device, r.summary.sample_count);
  }

  RoundReport report;
  report.round = ++state.round;
  report.selected = selection.devices;
  report.positive_primary = selection.positive_primary;

  if (judge) {
    JudgmentResult verdict = judge_entropy(selection.devices, summaries);
    report.accepted = std::move(verdict.accepted);
    report.rejected = std::move(verdict.rejected);
    report.entropy_initial = verdict.initial_entropy;
    report.entropy_final = verdict.final_entropy;
    report.bytes_labels = static_cast<std::uint64_t>(selection.devices.size()) *
                          state.class_count * sizeof(double);
  } else {
    std::vector<SoftLabelSummary> all;
    for (const auto& [id, s] : summaries) all.push_back(s);
    report.accepted = selection.devices;
    report.entropy_initial = report.entropy_final = get_entropy(all);
  }

  // Only accepted devices upload their models.
  std::map<DeviceId, ModelParams> uploaded;
  for (ClientResult& r : results) {
    if (std::binary_search(report.accepted.begin(), report.accepted.end(), r.summary.device)) {
      uploaded.emplace(r.summary.device, std::move(r.model));
    }
  }
  report.bytes_models = static_cast<std::uint64_t>(uploaded.size()) * model_bytes(state.global);

  state.global = aggregate(uploaded, counts, report.accepted);
  if (judge) return_devices(state.pools, report.accepted, report.rejected);

  report.test_accuracy = evaluate(state.global, state.test);
  report.positive_pool = state.pools.positive.size();
  report.negative_pool = state.pools.negative.size();
  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

void check_state(const TrainingState& state, const FederationConfig& cfg) {
  cfg.selection.validate();
  cfg.client.validate();
  require(state.device_data.size() == cfg.selection.device_count,
          "training state holds " + std::to_string(state.device_data.size()) +
              " devices but the selection config expects " +
              std::to_string(cfg.selection.device_count));
}

}  // namespace

void ClientConfig::validate() const {
  require(local_epochs >= 1, "local_epochs must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(learning_rate >= 0.0, "lr must be >= 0");
  require(momentum >= 0.0 && momentum < 1.0, "momentum must be in [0, 1)");
  require(mu >= 0.0, "mu must be >= 0");
}

ClientResult client_update(const ModelParams& global, const Batch& data, DeviceId device,
                           const ClientConfig& cfg, Rng& rng) {
  require(data.size() > 0, "client_update: device " + std::to_string(device.value) +
                               " has no samples");
  cfg.validate();

  ClientResult result;
  result.model = global;
  result.model.velocity = zeros_like(global.layers);

  std::optional<ProximalTerm> proximal;
  if (cfg.optimizer == LocalOptimizer::kFedProx) {
    proximal = ProximalTerm{cfg.mu, std::cref(global.layers)};
  }

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> chunk;
  for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      Batch mini;
      mini.inputs = DenseMatrix(stop - start, data.inputs.cols());
      for (std::size_t i = start; i < stop; ++i) {
        auto src = data.inputs.row(order[i]);
        std::copy(src.begin(), src.end(), mini.inputs.row(i - start).begin());
        mini.labels.push_back(data.labels[order[i]]);
      }
      LossAndGrad lg = loss_and_grad(result.model, mini, proximal);
      sgd_step(result.model, lg.grads, cfg.learning_rate, cfg.momentum);
    }
    result.epoch_losses.push_back(loss(result.model, data, proximal));
  }

  result.summary = aggregate_soft_labels(result.model, data, device);
  return result;
}

ModelParams aggregate(const std::map<DeviceId, ModelParams>& models,
                      const std::map<DeviceId, std::size_t>& counts,
                      std::span<const DeviceId> accepted) {
  require(!accepted.empty(), "aggregate: no accepted devices");

  double total = 0.0;
  for (DeviceId id : accepted) {
    auto it = counts.find(id);
    require(it != counts.end() && it->second > 0,
            "aggregate: missing sample count for device " + std::to_string(id.value));
    require(models.contains(id), "aggregate: missing model for device " + std::to_string(id.value));
    total += static_cast<double>(it->second);
  }

  // Accumulate offsets from the first model so that identical inputs (and a
  // single accepted model) reproduce it bit for bit.
  const ModelParams& reference = models.at(accepted.front());
  ModelParams result{reference.layers, zeros_like(reference.layers)};
  std::vector<double> base = flatten(reference.layers);
  std::vector<double> offset(base.size(), 0.0);
  for (DeviceId id : accepted) {
    const ModelParams& m = models.at(id);
    require(same_shape(m.layers, reference.layers), "aggregate: model shapes differ");
    const double share = static_cast<double>(counts.at(id)) / total;
    std::vector<double> w = flatten(m.layers);
    for (std::size_t i = 0; i < w.size(); ++i) offset[i] += share * (w[i] - base[i]);
  }
  for (std::size_t i = 0; i < base.size(); ++i) {
    parameter_at(result.layers, i) = base[i] + offset[i];
  }
  return result;
}

double evaluate(const ModelParams& model, const Batch& test) {
  require(test.size() > 0, "evaluate: empty test set");
  ForwardResult out = forward(model, test);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    auto z = out.logits.row(i);
    const auto best = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    if (best == test.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

TrainingState make_training_state(const SplitDataset& data, const Partition& partition,
                                  ModelParams initial_model, std::uint64_t seed) {
  require(partition.device_count() >= 1, "make_training_state: empty partition");
  require(initial_model.input_dim() == data.train.inputs.cols(),
          "make_training_state: model input width differs from data");
  require(initial_model.class_count() == data.train.class_count,
          "make_training_state: model class count differs from data");
  TrainingState state;
  state.global = std::move(initial_model);
  state.pools = init_pools(partition.device_count());
  for (const auto& rows : partition.assignments) {
    state.device_data.push_back(data.train.subset(rows));
  }
  state.test = data.test.as_batch();
  state.class_count = data.train.class_count;
  state.rng = make_rng(seed, kTrainingStream);
  return state;
}

std::uint64_t model_bytes(const ModelParams& model) {
  return static_cast<std::uint64_t>(parameter_count(model.layers)) * sizeof(double);
}

RoundReport run_round(TrainingState& state, const FederationConfig& cfg) {
  check_state(state, cfg);
  Selection selection = select_round(state.pools, cfg.selection, state.rng);
  return execute_round(state, cfg, selection, /*judge=*/true);
}

RoundReport baseline_random_selection_round(TrainingState& state, const FederationConfig& cfg) {
  check_state(state, cfg);
  // A fresh all-positive pool consumes the generator exactly like a
  // FedEntropy round whose pools are still in their initial state.
  DevicePools everyone = init_pools(cfg.selection.device_count);
  Selection selection = select_round(everyone, cfg.selection, state.rng);
  return execute_round(state, cfg, selection, /*judge=*/false);
}

TrainingResult run_training(TrainingState state, const FederationConfig& cfg, std::size_t rounds,
                            SelectionPolicy policy) {
  TrainingResult result;
  result.reports.reserve(rounds);
  for (std::size_t t = 0; t < rounds; ++t) {
    result.reports.push_back(policy == SelectionPolicy::kFedEntropy
                                 ? run_round(state, cfg)
                                 : baseline_random_selection_round(state, cfg));
  }
  result.final_model = std::move(state.global);
  return result;
}

}  // namespace fedentropy
