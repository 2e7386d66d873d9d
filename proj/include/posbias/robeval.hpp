#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "posbias/corpus.hpp"
#include "posbias/metrics.hpp"
#include "posbias/models.hpp"
#include "posbias/trainer.hpp"

namespace posbias::eval {

enum class Scenario { InDomain, OutOfDomain, Adversarial };

inline const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::InDomain: return "id";
    case Scenario::OutOfDomain: return "ood";
    default: return "adv";
  }
}

inline const char* scenario_title(Scenario s) {
  switch (s) {
    case Scenario::InDomain: return "I.D.";
    case Scenario::OutOfDomain: return "O.O.D.";
    default: return "Adv.";
  }
}

inline std::optional<Scenario> scenario_from_string(const std::string& s) {
  if (s == "id") return Scenario::InDomain;
  if (s == "ood") return Scenario::OutOfDomain;
  if (s == "adv") return Scenario::Adversarial;
  return std::nullopt;
}

/// Training always happens on the train domain's I.D. split; the scenario
/// picks the test set: same-domain SemEval (I.D.), other-domain SemEval
/// (O.O.D.), or the ARTS counterpart of the train domain (Adv.).
struct ScenarioSpec {
  Scenario scenario = Scenario::OutOfDomain;
  corpus::Domain train_domain = corpus::Domain::Laptop;
};

inline corpus::Domain other_domain(corpus::Domain d) {
  return d == corpus::Domain::Laptop ? corpus::Domain::Restaurant
                                     : corpus::Domain::Laptop;
}

struct DatasetBundle {
  std::optional<corpus::Dataset> semeval_train[2];
  std::optional<corpus::Dataset> semeval_test[2];
  std::optional<corpus::Dataset> arts_test[2];

  static std::size_t slot(corpus::Domain d) { return static_cast<std::size_t>(d); }

  const corpus::Dataset& train_of(corpus::Domain d) const {
    return require(semeval_train[slot(d)], "SemEval train", d);
  }

  const corpus::Dataset& test_for(const ScenarioSpec& spec) const {
    switch (spec.scenario) {
      case Scenario::InDomain:
        return require(semeval_test[slot(spec.train_domain)], "SemEval test",
                       spec.train_domain);
      case Scenario::OutOfDomain:
        return require(semeval_test[slot(other_domain(spec.train_domain))],
                       "SemEval test", other_domain(spec.train_domain));
      default:
        return require(arts_test[slot(spec.train_domain)], "ARTS test",
                       spec.train_domain);
    }
  }

 private:
  static const corpus::Dataset& require(const std::optional<corpus::Dataset>& ds,
                                        const char* what, corpus::Domain d) {
    if (!ds)
      throw std::invalid_argument(std::string("missing dataset: ") + what +
                                  " for domain " + corpus::to_string(d));
    return *ds;
  }
};

struct ProtocolConfig {
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::size_t dev_size = 150;
  std::uint64_t dev_seed = 0;
};

struct SeedRun {
  std::uint64_t seed = 0;
  Metrics test;
  double best_dev_accuracy = 0.0;
  std::size_t best_epoch = 0;
};

/// One (model, bias mode, scenario) cell of the report.
struct Cell {
  models::Arch arch = models::Arch::Lstm;
  bias::BiasMode mode = bias::BiasMode::None;
  Scenario scenario = Scenario::OutOfDomain;
  corpus::Domain train_domain = corpus::Domain::Laptop;
  std::vector<SeedRun> runs;
  Metrics mean;
  std::optional<Metrics> delta;  // vs the bias-free baseline, same seeds
};

using RobustnessReport = std::vector<Cell>;

/// Trains one seed on the I.D. split, selects on the I.D. dev split, and
/// evaluates on the scenario's test set.
inline SeedRun run_single(const ScenarioSpec& spec,
                          const models::ModelConfig& model_config,
                          const train::TrainConfig& tmpl,
                          const DatasetBundle& bundle,
                          const corpus::EmbeddingTable& table,
                          const ProtocolConfig& protocol, std::uint64_t seed,
                          std::ostream* log = nullptr,
                          train::TrainedModel* best_out = nullptr) {
  const corpus::Dataset& full_train = bundle.train_of(spec.train_domain);
  auto [train_split, dev_split] =
      corpus::split_dev(full_train, protocol.dev_size, protocol.dev_seed);

  train::TrainConfig config = tmpl;
  config.model = model_config;
  config.seed = seed;
  train::TrainResult result =
      train::train(train_split, dev_split, config, table, log);

  SeedRun run;
  run.seed = seed;
  run.best_dev_accuracy = result.best_dev_accuracy;
  run.best_epoch = result.best_epoch;
  run.test = train::evaluate(result.best, table, bundle.test_for(spec));
  if (best_out) *best_out = std::move(result.best);
  return run;
}

inline Metrics mean_metrics(const std::vector<SeedRun>& runs) {
  Metrics m;
  for (const SeedRun& r : runs) {
    m.accuracy += r.test.accuracy;
    m.macro_f1 += r.test.macro_f1;
  }
  const double n = static_cast<double>(runs.size());
  m.accuracy /= n;
  m.macro_f1 /= n;
  return m;
}

/// Full seeded protocol for one cell.
inline Cell run_protocol(const ScenarioSpec& spec,
                         const models::ModelConfig& model_config,
                         const train::TrainConfig& tmpl,
                         const DatasetBundle& bundle,
                         const corpus::EmbeddingTable& table,
                         const ProtocolConfig& protocol) {
  Cell cell;
  cell.arch = model_config.arch;
  cell.mode = model_config.bias_mode;
  cell.scenario = spec.scenario;
  cell.train_domain = spec.train_domain;
  for (std::uint64_t seed : protocol.seeds)
    cell.runs.push_back(
        run_single(spec, model_config, tmpl, bundle, table, protocol, seed));
  cell.mean = mean_metrics(cell.runs);
  return cell;
}

/// Fills in deltas against the bias-free cell with the same architecture,
/// scenario, and train domain.
inline void attach_deltas(RobustnessReport& report) {
  for (Cell& cell : report) {
    if (cell.mode == bias::BiasMode::None) {
      cell.delta.reset();
      continue;
    }
    const Cell* baseline = nullptr;
    for (const Cell& other : report) {
      if (other.mode == bias::BiasMode::None && other.arch == cell.arch &&
          other.scenario == cell.scenario &&
          other.train_domain == cell.train_domain) {
        baseline = &other;
        break;
      }
    }
    if (!baseline) {
      cell.delta.reset();
      continue;
    }
    cell.delta = Metrics{cell.mean.accuracy - baseline->mean.accuracy,
                         cell.mean.macro_f1 - baseline->mean.macro_f1};
  }
}

// ---- rendering -------------------------------------------------------------

namespace detail {

inline std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

inline std::string pct(double v) { return fmt("%.2f", v * 100.0); }

inline std::string delta_mark(double v) {
  return (v >= 0.0 ? "↑" : "↓") + fmt("%.2f", std::abs(v) * 100.0);
}

}  // namespace detail

/// Markdown table, one row per (model, bias mode), scenario x metric columns,
/// deltas annotated against the bias-free row.
inline std::string render_report_markdown(const RobustnessReport& report) {
  if (report.empty()) throw std::invalid_argument("render_report: empty report");

  std::vector<Scenario> scenarios;
  for (const Cell& c : report)
    if (std::find(scenarios.begin(), scenarios.end(), c.scenario) ==
        scenarios.end())
      scenarios.push_back(c.scenario);

  std::vector<std::pair<models::Arch, bias::BiasMode>> rows;
  for (const Cell& c : report) {
    const auto key = std::make_pair(c.arch, c.mode);
    if (std::find(rows.begin(), rows.end(), key) == rows.end())
      rows.push_back(key);
  }

  std::ostringstream os;
  os << "| Model |";
  for (Scenario s : scenarios)
    os << ' ' << scenario_title(s) << " Acc. | " << scenario_title(s) << " F1 |";
  os << "\n|---|";
  for (std::size_t i = 0; i < 2 * scenarios.size(); ++i) os << "---|";
  os << '\n';

  for (const auto& [arch, mode] : rows) {
    os << "| " << models::to_string(arch);
    if (mode != bias::BiasMode::None) os << " w/ " << bias::to_string(mode);
    os << " |";
    for (Scenario s : scenarios) {
      const Cell* cell = nullptr;
      for (const Cell& c : report)
        if (c.arch == arch && c.mode == mode && c.scenario == s) cell = &c;
      if (!cell) {
        os << " - | - |";
        continue;
      }
      os << ' ' << detail::pct(cell->mean.accuracy);
      if (cell->delta) os << ' ' << detail::delta_mark(cell->delta->accuracy);
      os << " | " << detail::pct(cell->mean.macro_f1);
      if (cell->delta) os << ' ' << detail::delta_mark(cell->delta->macro_f1);
      os << " |";
    }
    os << '\n';
  }
  return os.str();
}

/// Per-seed raw values: model,bias_mode,scenario,seed,accuracy,macro_f1.
inline std::string render_report_csv(const RobustnessReport& report) {
  if (report.empty()) throw std::invalid_argument("render_report: empty report");
  std::ostringstream os;
  os << "model,bias_mode,scenario,seed,accuracy,macro_f1\n";
  for (const Cell& cell : report) {
    for (const SeedRun& run : cell.runs) {
      os << models::to_string(cell.arch) << ',' << bias::to_string(cell.mode)
         << ',' << to_string(cell.scenario) << ',' << run.seed << ','
         << detail::fmt("%.12g", run.test.accuracy) << ','
         << detail::fmt("%.12g", run.test.macro_f1) << '\n';
    }
  }
  return os.str();
}

}  // namespace posbias::eval
