// SPDX-License-Identifier: Apache-2.0

#include "fedentropy/experiment.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fedentropy {

namespace {

constexpr std::uint64_t kInitStream = 0x696e6974;

[[noreturn]] void invalid(const std::string& message) { throw std::invalid_argument(message); }

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_list(std::string_view value) {
  std::vector<std::string_view> items;
  while (!value.empty()) {
    const auto comma = value.find(',');
    auto item = trim(value.substr(0, comma));
    if (!item.empty()) items.push_back(item);
    if (comma == std::string_view::npos) break;
    value.remove_prefix(comma + 1);
  }
  return items;
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  value = trim(value);
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    invalid("invalid value '" + std::string(value) + "' for '" + std::string(key) + "'");
  }
  return out;
}

std::string format_double(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

// Population standard deviation; a single seed reports 0.
double stddev(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size()));
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

}  // namespace

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::kFedEntropy:
      return "fedentropy";
    case Mode::kFedAvgRandom:
      return "fedavg_random";
    case Mode::kFedProxRandom:
      return "fedprox_random";
    case Mode::kFedProxFedEntropy:
      return "fedprox_fedentropy";
  }
  return "unknown";
}

Mode parse_mode(std::string_view name) {
  for (Mode m : {Mode::kFedEntropy, Mode::kFedAvgRandom, Mode::kFedProxRandom,
                 Mode::kFedProxFedEntropy}) {
    if (name == to_string(m)) return m;
  }
  invalid("unknown mode '" + std::string(name) + "'");
}

void ExperimentConfig::validate() const {
  if (blobs.class_count < 2) invalid("classes must be >= 2");
  if (blobs.dims < 2) invalid("dims must be >= 2");
  if (blobs.per_class < 1) invalid("per_class must be >= 1");
  if (blobs.per_class / 5 < 1) invalid("per_class must be >= 5 to leave a test split");
  if (!(blobs.spread > 0.0 && std::isfinite(blobs.spread))) invalid("spread must be > 0");
  if (partition == PartitionCase::kDirichlet && !(beta > 0.0 && std::isfinite(beta))) {
    invalid("beta must be > 0 for the dirichlet partition");
  }
  selection.validate();
  client.validate();
  if (!(client.learning_rate > 0.0)) invalid("lr must be > 0");
  if (rounds < 1) invalid("rounds must be >= 1");
  if (seeds.empty()) invalid("seeds must not be empty");
  if (modes.empty()) invalid("modes must not be empty");
  if (target_accuracy && !(*target_accuracy >= 0.0 && *target_accuracy <= 1.0)) {
    invalid("target_acc must be in [0, 1]");
  }
  if (last_rounds_window < 1) invalid("last_rounds must be >= 1");
}

void apply_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "classes") {
    cfg.blobs.class_count = parse_number<std::size_t>(key, value);
  } else if (key == "dims") {
    cfg.blobs.dims = parse_number<std::size_t>(key, value);
  } else if (key == "per_class") {
    cfg.blobs.per_class = parse_number<std::size_t>(key, value);
  } else if (key == "spread") {
    cfg.blobs.spread = parse_number<double>(key, value);
  } else if (key == "partition") {
    try {
      cfg.partition = parse_partition_case(value);
    } catch (const std::invalid_argument&) {
      invalid("invalid value '" + std::string(value) + "' for 'partition'");
    }
  } else if (key == "beta") {
    cfg.beta = parse_number<double>(key, value);
  } else if (key == "devices") {
    cfg.selection.device_count = parse_number<std::size_t>(key, value);
  } else if (key == "fraction") {
    cfg.selection.fraction = parse_number<double>(key, value);
  } else if (key == "epsilon") {
    cfg.selection.epsilon = parse_number<double>(key, value);
  } else if (key == "local_epochs") {
    cfg.client.local_epochs = parse_number<std::size_t>(key, value);
  } else if (key == "batch_size") {
    cfg.client.batch_size = parse_number<std::size_t>(key, value);
  } else if (key == "lr") {
    cfg.client.learning_rate = parse_number<double>(key, value);
  } else if (key == "momentum") {
    cfg.client.momentum = parse_number<double>(key, value);
  } else if (key == "mu") {
    cfg.client.mu = parse_number<double>(key, value);
  } else if (key == "hidden") {
    cfg.hidden_units = parse_number<std::size_t>(key, value);
  } else if (key == "rounds") {
    cfg.rounds = parse_number<std::size_t>(key, value);
  } else if (key == "seeds" || key == "seed") {
    cfg.seeds.clear();
    for (auto item : split_list(value)) cfg.seeds.push_back(parse_number<std::uint64_t>(key, item));
  } else if (key == "modes" || key == "mode") {
    cfg.modes.clear();
    for (auto item : split_list(value)) cfg.modes.push_back(parse_mode(item));
  } else if (key == "target_acc") {
    if (value.empty() || value == "none") {
      cfg.target_accuracy.reset();
    } else {
      cfg.target_accuracy = parse_number<double>(key, value);
    }
  } else if (key == "last_rounds") {
    cfg.last_rounds_window = parse_number<std::size_t>(key, value);
  } else if (key == "workers") {
    cfg.workers = parse_number<std::size_t>(key, value);
  } else {
    invalid("unknown config key '" + std::string(key) + "'");
  }
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      invalid("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    apply_config_value(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read config '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

RunRecord run_single(const ExperimentConfig& cfg, Mode mode, std::uint64_t seed) {
  cfg.validate();
  SplitDataset data = make_blobs(cfg.blobs, seed);
  PartitionSpec pspec{cfg.partition, cfg.beta, cfg.selection.device_count, seed};
  Partition partition = make_partition(data.train, pspec);

  std::vector<std::size_t> widths{cfg.blobs.dims};
  if (cfg.hidden_units > 0) widths.push_back(cfg.hidden_units);
  widths.push_back(cfg.blobs.class_count);
  Rng init_rng = make_rng(seed, kInitStream);
  ModelParams initial = random_model(widths, init_rng);

  FederationConfig fed{cfg.selection, cfg.client, cfg.workers};
  const bool prox = mode == Mode::kFedProxRandom || mode == Mode::kFedProxFedEntropy;
  fed.client.optimizer = prox ? LocalOptimizer::kFedProx : LocalOptimizer::kFedAvg;
  const bool entropy = mode == Mode::kFedEntropy || mode == Mode::kFedProxFedEntropy;

  TrainingState state = make_training_state(data, partition, std::move(initial), seed);
  TrainingResult result =
      run_training(std::move(state), fed, cfg.rounds,
                   entropy ? SelectionPolicy::kFedEntropy : SelectionPolicy::kRandom);
  return RunRecord{mode, seed, std::move(result.reports)};
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult result;
  for (Mode mode : cfg.modes) {
    for (std::uint64_t seed : cfg.seeds) result.runs.push_back(run_single(cfg, mode, seed));
  }
  result.summaries = summarize(result.runs, cfg);
  return result;
}

std::optional<std::size_t> rounds_to_target(const std::vector<RoundReport>& reports,
                                            double target) {
  for (const RoundReport& r : reports) {
    if (r.test_accuracy >= target) return r.round;
  }
  return std::nullopt;
}

double last_window_accuracy(const std::vector<RoundReport>& reports, std::size_t window) {
  if (reports.empty()) return 0.0;
  const std::size_t n = std::min(window, reports.size());
  double s = 0.0;
  for (std::size_t i = reports.size() - n; i < reports.size(); ++i) s += reports[i].test_accuracy;
  return s / static_cast<double>(n);
}

std::vector<SummaryRow> summarize(const std::vector<RunRecord>& runs,
                                  const ExperimentConfig& cfg) {
  std::vector<SummaryRow> rows;
  for (Mode mode : cfg.modes) {
    SummaryRow row;
    row.mode = mode;
    row.target = cfg.target_accuracy;
    row.rounds = cfg.rounds;
    std::vector<double> accuracy, rounds, bytes_to_target, bytes_total;
    for (const RunRecord& run : runs) {
      if (run.mode != mode) continue;
      ++row.seeds;
      accuracy.push_back(last_window_accuracy(run.reports, cfg.last_rounds_window));

      std::optional<std::size_t> reached;
      if (cfg.target_accuracy) reached = rounds_to_target(run.reports, *cfg.target_accuracy);
      if (cfg.target_accuracy && !reached) ++row.seeds_unreached;
      rounds.push_back(reached ? static_cast<double>(*reached)
                               : static_cast<double>(run.reports.size() + 1));

      double upto = 0.0;
      double total = 0.0;
      for (const RoundReport& r : run.reports) {
        const double b = static_cast<double>(r.bytes_models + r.bytes_labels);
        total += b;
        if (!reached || r.round <= *reached) upto += b;
      }
      bytes_to_target.push_back(upto);
      bytes_total.push_back(total);
    }
    row.accuracy_mean = mean(accuracy);
    row.accuracy_std = stddev(accuracy);
    row.rounds_to_target_mean = mean(rounds);
    row.rounds_to_target_std = stddev(rounds);
    row.upload_bytes_to_target_mean = mean(bytes_to_target);
    row.upload_bytes_total_mean = mean(bytes_total);
    rows.push_back(row);
  }
  return rows;
}

void write_round_csv(std::ostream& out, const std::vector<RunRecord>& runs) {
  out << "round,mode,seed,accuracy,selected,accepted,rejected,entropy_initial,entropy_final,"
         "bytes_models,bytes_labels\n";
  for (const RunRecord& run : runs) {
    for (const RoundReport& r : run.reports) {
      out << r.round << ',' << to_string(run.mode) << ',' << run.seed << ','
          << format_double(r.test_accuracy, 6) << ',' << r.selected.size() << ','
          << r.accepted.size() << ',' << r.rejected.size() << ','
          << format_double(r.entropy_initial, 9) << ',' << format_double(r.entropy_final, 9)
          << ',' << r.bytes_models << ',' << r.bytes_labels << '\n';
    }
  }
}

void write_round_csv(const std::filesystem::path& path, const std::vector<RunRecord>& runs) {
  if (runs.empty()) throw std::invalid_argument("write_round_csv: no runs");
  auto out = open_for_write(path);
  write_round_csv(out, runs);
  finish(out, path);
}

void write_summary(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "mode,seeds,rounds,accuracy_pct_mean,accuracy_pct_std,target_acc,"
         "rounds_to_target_mean,rounds_to_target_std,seeds_unreached,"
         "upload_bytes_to_target_mean,upload_bytes_total_mean\n";
  for (const SummaryRow& r : rows) {
    out << to_string(r.mode) << ',' << r.seeds << ',' << r.rounds << ','
        << format_double(100.0 * r.accuracy_mean, 2) << ','
        << format_double(100.0 * r.accuracy_std, 2) << ',';
    if (!r.target) {
      out << "n/a,n/a,n/a,n/a";
    } else {
      out << format_double(*r.target, 4) << ',';
      if (r.seeds_unreached > 0) {
        out << '>' << r.rounds;
      } else {
        out << format_double(r.rounds_to_target_mean, 2);
      }
      out << ',' << format_double(r.rounds_to_target_std, 2) << ',' << r.seeds_unreached;
    }
    out << ',' << format_double(r.upload_bytes_to_target_mean, 0) << ','
        << format_double(r.upload_bytes_total_mean, 0) << '\n';
  }
}

void write_summary(const std::filesystem::path& path, const std::vector<SummaryRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("write_summary: no summary rows");
  auto out = open_for_write(path);
  write_summary(out, rows);
  finish(out, path);
}

}  // namespace fedentropy
