// Command-line front end: dataset ingestion, dev splits, training, evaluation,
// the seeded robustness protocol, proximity density curves, and saliency /
// attention heatmaps.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "posbias/corpus.hpp"
#include "posbias/explain.hpp"
#include "posbias/manifest.hpp"
#include "posbias/metrics.hpp"
#include "posbias/models.hpp"
#include "posbias/position_bias.hpp"
#include "posbias/robeval.hpp"
#include "posbias/trainer.hpp"
#include "posbias/version.hpp"

namespace fs = std::filesystem;
using namespace posbias;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitRuntime = 3;

void print_warnings(const std::vector<std::string>& warnings) {
  for (const std::string& w : warnings) std::cerr << "warning: " << w << '\n';
}

std::string data_dir_fallback() {
  const char* env = std::getenv("POSBIAS_DATA_DIR");
  return env ? env : "";
}

/// Resolves a path against the data dir when it does not exist as given.
std::string resolve_input(const std::string& path, const std::string& data_dir) {
  if (fs::exists(path) || data_dir.empty()) return path;
  const fs::path joined = fs::path(data_dir) / path;
  return fs::exists(joined) ? joined.string() : path;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

corpus::Domain parse_domain(const std::string& s) {
  const auto d = corpus::domain_from_string(s);
  if (!d) throw CLI::ValidationError("--domain", "expected lap(top) or rest(aurant)");
  return *d;
}

/// Loads a dataset by format; "auto" keys off the extension
/// (.xml -> semeval, .jsonl -> internal dump, .json -> arts).
corpus::Dataset load_dataset(const std::string& path, std::string format,
                             corpus::Domain domain, corpus::Split split,
                             std::vector<std::string>* warnings) {
  if (format == "auto") {
    const std::string ext = fs::path(path).extension().string();
    if (ext == ".xml") format = "semeval";
    else if (ext == ".jsonl") format = "jsonl";
    else if (ext == ".json") format = "arts";
    else throw ParseError("cannot infer format of " + path);
  }
  if (format == "semeval")
    return corpus::parse_semeval_xml(read_file(path), domain, split, warnings);
  if (format == "arts") return corpus::parse_arts(read_file(path), domain, warnings);
  if (format == "jsonl") return corpus::load_jsonl_file(path, split);
  throw ParseError("unknown format: " + format);
}

void write_dataset(const corpus::Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  corpus::dump_jsonl(ds, out);
}

void print_stats(const corpus::Dataset& ds, std::ostream& out) {
  const corpus::LabelCounts c = corpus::label_counts(ds);
  out << "domain=" << corpus::to_string(ds.domain)
      << " split=" << corpus::to_string(ds.split) << " instances=" << c.total()
      << " pos=" << c.positive << " neu=" << c.neutral << " neg=" << c.negative
      << '\n';
}

std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> seeds;
  for (const std::string& tok : split_csv_list(s)) seeds.push_back(std::stoull(tok));
  if (seeds.empty()) throw CLI::ValidationError("--seeds", "empty seed list");
  return seeds;
}

// ---- dataset discovery for the robustness protocol -------------------------

const std::vector<std::string>& candidate_names(corpus::Domain d,
                                                const std::string& role) {
  static const std::vector<std::string> lap_train = {
      "semeval14_laptop_train.xml", "semeval14_laptop_train.jsonl",
      "Laptop_Train_v2.xml", "Laptops_Train.xml"};
  static const std::vector<std::string> lap_test = {
      "semeval14_laptop_test.xml", "semeval14_laptop_test.jsonl",
      "Laptops_Test_Gold.xml"};
  static const std::vector<std::string> rest_train = {
      "semeval14_restaurant_train.xml", "semeval14_restaurant_train.jsonl",
      "Restaurants_Train_v2.xml", "Restaurants_Train.xml"};
  static const std::vector<std::string> rest_test = {
      "semeval14_restaurant_test.xml", "semeval14_restaurant_test.jsonl",
      "Restaurants_Test_Gold.xml"};
  static const std::vector<std::string> lap_arts = {
      "arts_laptop_test.json", "laptop_arts_test.json", "arts_lap.json"};
  static const std::vector<std::string> rest_arts = {
      "arts_restaurant_test.json", "rest_arts_test.json", "arts_rest.json"};
  if (role == "train") return d == corpus::Domain::Laptop ? lap_train : rest_train;
  if (role == "test") return d == corpus::Domain::Laptop ? lap_test : rest_test;
  return d == corpus::Domain::Laptop ? lap_arts : rest_arts;
}

std::string find_dataset_file(const std::string& data_dir, corpus::Domain d,
                              const std::string& role) {
  for (const std::string& name : candidate_names(d, role)) {
    const fs::path p = fs::path(data_dir) / name;
    if (fs::exists(p)) return p.string();
  }
  std::string tried;
  for (const std::string& name : candidate_names(d, role))
    tried += (tried.empty() ? "" : ", ") + name;
  throw ParseError(std::string("no ") + role + " dataset for domain " +
                   corpus::to_string(d) + " under '" + data_dir +
                   "' (tried: " + tried + ")");
}

// ---- shared option bundles --------------------------------------------------

struct ModelOptions {
  std::string arch = "lstm";
  std::string mode = "none";
  std::size_t hidden = 300;
  std::size_t embed_dim = 300;
  std::size_t hops = 3;
  bool keep_aspect = false;

  models::ModelConfig to_config() const {
    const auto a = models::arch_from_string(arch);
    if (!a) throw CLI::ValidationError("--arch", "unknown architecture " + arch);
    const auto m = bias::bias_mode_from_string(mode);
    if (!m) throw CLI::ValidationError("--mode", "unknown bias mode " + mode);
    models::ModelConfig c;
    c.arch = *a;
    c.bias_mode = *m;
    c.hidden = hidden;
    c.embed_dim = embed_dim;
    c.memnet_hops = hops;
    c.keep_aspect = keep_aspect;
    return c;
  }
};

struct TrainOptions {
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double l2 = 1e-5;
  std::size_t epochs = 20;
  bool finetune_embeddings = false;

  train::TrainConfig to_config() const {
    train::TrainConfig c;
    c.batch_size = batch_size;
    c.learning_rate = learning_rate;
    c.l2 = l2;
    c.max_epochs = epochs;
    c.finetune_embeddings = finetune_embeddings;
    return c;
  }
};

corpus::EmbeddingTable load_table(const std::string& path,
                                  const std::set<std::string>& vocab,
                                  std::size_t dim, std::uint64_t oov_seed) {
  std::vector<std::string> warnings;
  corpus::EmbeddingTable table =
      corpus::load_embeddings_file(path, vocab, dim, oov_seed, &warnings);
  print_warnings(warnings);
  std::cerr << "embeddings: " << table.found << " found, " << table.missing
            << " missing of " << vocab.size() << " vocabulary words\n";
  return table;
}

// ---- subcommand: ingest ------------------------------------------------------

struct IngestArgs {
  std::string format = "auto";
  std::string in;
  std::string out;
  std::string domain = "laptop";
  std::string split = "train";
  bool stats = false;
};

int run_ingest(const IngestArgs& args) {
  const corpus::Domain domain = parse_domain(args.domain);
  corpus::Split split = corpus::Split::Train;
  if (args.split == "test") split = corpus::Split::Test;
  else if (args.split == "dev") split = corpus::Split::Dev;
  else if (args.split != "train")
    throw CLI::ValidationError("--split", "expected train, dev or test");

  const std::string in_path = resolve_input(args.in, data_dir_fallback());
  std::vector<std::string> warnings;
  const corpus::Dataset ds =
      load_dataset(in_path, args.format, domain, split, &warnings);
  print_warnings(warnings);

  if (!args.out.empty()) {
    cli::RunManifest manifest;
    manifest.command = "ingest";
    manifest.config = {{"format", args.format},
                       {"in", in_path},
                       {"out", args.out},
                       {"domain", args.domain},
                       {"split", args.split}};
    manifest.add_input(in_path);
    manifest.write(args.out + ".manifest.json");
    write_dataset(ds, args.out);
  }
  if (args.stats || args.out.empty()) print_stats(ds, std::cout);
  return kExitOk;
}

// ---- subcommand: split -------------------------------------------------------

struct SplitArgs {
  std::string in;
  std::string out_train;
  std::string out_dev;
  std::size_t k = 150;
  std::uint64_t seed = 0;
};

int run_split(const SplitArgs& args) {
  const corpus::Dataset full = corpus::load_jsonl_file(
      resolve_input(args.in, data_dir_fallback()), corpus::Split::Train);
  auto [rest, dev] = corpus::split_dev(full, args.k, args.seed);

  cli::RunManifest manifest;
  manifest.command = "split";
  manifest.config = {{"in", args.in},
                     {"k", args.k},
                     {"out_train", args.out_train},
                     {"out_dev", args.out_dev}};
  manifest.seeds = {args.seed};
  manifest.add_input(resolve_input(args.in, data_dir_fallback()));
  manifest.write(args.out_train + ".manifest.json");

  write_dataset(rest, args.out_train);
  write_dataset(dev, args.out_dev);
  std::cout << "train'=" << rest.size() << " dev=" << dev.size() << '\n';
  return kExitOk;
}

// ---- subcommand: train -------------------------------------------------------

struct TrainArgs {
  ModelOptions model;
  TrainOptions train;
  std::string train_file;
  std::string dev_file;
  std::string embeddings;
  std::string out_dir = "run";
  std::string domain = "laptop";
  std::uint64_t seed = 0;
  std::size_t dev_k = 0;  // when no --dev file: split this many off the train set
  std::uint64_t dev_seed = 0;
};

int run_train(const TrainArgs& args) {
  const std::string data_dir = data_dir_fallback();
  const corpus::Domain domain = parse_domain(args.domain);
  std::vector<std::string> warnings;

  corpus::Dataset train_set =
      load_dataset(resolve_input(args.train_file, data_dir), "auto", domain,
                   corpus::Split::Train, &warnings);
  corpus::Dataset dev_set;
  if (!args.dev_file.empty()) {
    dev_set = load_dataset(resolve_input(args.dev_file, data_dir), "auto", domain,
                           corpus::Split::Dev, &warnings);
  } else {
    if (args.dev_k == 0)
      throw CLI::ValidationError("--dev/--dev-k", "need a dev file or --dev-k");
    auto [rest, dev] = corpus::split_dev(train_set, args.dev_k, args.dev_seed);
    train_set = std::move(rest);
    dev_set = std::move(dev);
  }
  print_warnings(warnings);

  train::TrainConfig config = args.train.to_config();
  config.model = args.model.to_config();
  config.seed = args.seed;

  const std::string emb_path = resolve_input(args.embeddings, data_dir);
  const corpus::EmbeddingTable table =
      load_table(emb_path, corpus::vocabulary_of({&train_set, &dev_set}),
                 config.model.embed_dim, /*oov_seed=*/0);

  fs::create_directories(args.out_dir);
  cli::RunManifest manifest;
  manifest.command = "train";
  manifest.config = {{"model", models::to_json(config.model)},
                     {"batch_size", config.batch_size},
                     {"learning_rate", config.learning_rate},
                     {"l2", config.l2},
                     {"max_epochs", config.max_epochs},
                     {"finetune_embeddings", config.finetune_embeddings},
                     {"train", args.train_file},
                     {"dev", args.dev_file},
                     {"dev_k", args.dev_k},
                     {"dev_seed", args.dev_seed},
                     {"embeddings", emb_path}};
  manifest.seeds = {args.seed};
  manifest.add_input(resolve_input(args.train_file, data_dir));
  if (!args.dev_file.empty()) manifest.add_input(resolve_input(args.dev_file, data_dir));
  manifest.add_input(emb_path);
  manifest.write((fs::path(args.out_dir) / "manifest.json").string());

  std::ofstream log((fs::path(args.out_dir) / "trainlog.jsonl").string());
  const train::TrainResult result =
      train::train(train_set, dev_set, config, table, &log);

  const std::string ck = (fs::path(args.out_dir) / "checkpoint.bin").string();
  train::save_checkpoint(ck, result.best);
  std::cout << "best_epoch=" << result.best_epoch
            << " best_dev_accuracy=" << result.best_dev_accuracy
            << " checkpoint=" << ck << '\n';
  return kExitOk;
}

// ---- subcommand: eval --------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string test_file;
  std::string embeddings;
  std::string domain = "laptop";
  std::string out_csv;
};

int run_eval(const EvalArgs& args) {
  const std::string data_dir = data_dir_fallback();
  const train::TrainedModel model =
      train::load_checkpoint(resolve_input(args.checkpoint, data_dir));
  std::vector<std::string> warnings;
  const corpus::Dataset test =
      load_dataset(resolve_input(args.test_file, data_dir), "auto",
                   parse_domain(args.domain), corpus::Split::Test, &warnings);
  print_warnings(warnings);

  const corpus::EmbeddingTable table = load_table(
      resolve_input(args.embeddings, data_dir), corpus::vocabulary_of({&test}),
      model.config.embed_dim, /*oov_seed=*/0);

  std::vector<int> preds, golds;
  std::ofstream csv;
  if (!args.out_csv.empty()) {
    csv.open(args.out_csv);
    if (!csv) throw std::runtime_error("cannot write " + args.out_csv);
    csv << "id,gold,predicted\n";
  }
  for (const corpus::Instance& ins : test.instances) {
    const train::Prediction p = train::predict_one(model, table, ins);
    preds.push_back(p.cls);
    golds.push_back(static_cast<int>(ins.label));
    if (csv.is_open())
      csv << ins.id << ','
          << corpus::to_string(static_cast<corpus::Polarity>(ins.label)) << ','
          << corpus::to_string(static_cast<corpus::Polarity>(p.cls)) << '\n';
  }
  const eval::Metrics m = eval::compute_metrics(preds, golds);
  std::cout << "instances=" << test.size() << " accuracy=" << m.accuracy
            << " macro_f1=" << m.macro_f1 << '\n';
  return kExitOk;
}

// ---- subcommand: robustness ---------------------------------------------------

struct RobustnessArgs {
  std::string archs = "lstm";
  std::string modes = "none,pos-wt";
  std::string scenarios = "ood,adv";
  std::string train_domain = "lap";
  std::string seeds = "0,1,2,3,4";
  std::string data_dir;
  std::string embeddings;
  std::string out_dir = "robustness";
  ModelOptions model;  // arch/mode ignored; dims and hops apply to all
  TrainOptions train;
  std::size_t dev_k = 150;
  std::uint64_t dev_seed = 0;
  std::size_t jobs = 1;
  bool save_checkpoints = false;
};

int run_robustness(const RobustnessArgs& args) {
  const std::string data_dir =
      args.data_dir.empty() ? data_dir_fallback() : args.data_dir;
  if (data_dir.empty())
    throw CLI::ValidationError("--data-dir",
                               "set --data-dir or POSBIAS_DATA_DIR");
  const corpus::Domain domain = parse_domain(args.train_domain);

  std::vector<models::Arch> archs;
  for (const std::string& a : split_csv_list(args.archs)) {
    const auto arch = models::arch_from_string(a);
    if (!arch) throw CLI::ValidationError("--arch", "unknown architecture " + a);
    archs.push_back(*arch);
  }
  std::vector<bias::BiasMode> modes;
  for (const std::string& m : split_csv_list(args.modes)) {
    const auto mode = bias::bias_mode_from_string(m);
    if (!mode) throw CLI::ValidationError("--modes", "unknown bias mode " + m);
    modes.push_back(*mode);
  }
  std::vector<eval::Scenario> scenarios;
  for (const std::string& s : split_csv_list(args.scenarios)) {
    const auto sc = eval::scenario_from_string(s);
    if (!sc) throw CLI::ValidationError("--scenarios", "unknown scenario " + s);
    scenarios.push_back(*sc);
  }
  const std::vector<std::uint64_t> seeds = parse_seed_list(args.seeds);
  if (archs.empty() || modes.empty() || scenarios.empty())
    throw CLI::ValidationError("--arch/--modes/--scenarios", "empty selection");

  // Gather the datasets the scenario selection needs.
  std::vector<std::string> warnings;
  eval::DatasetBundle bundle;
  std::vector<std::string> inputs;
  auto ingest = [&](corpus::Domain d, const std::string& role,
                    std::optional<corpus::Dataset>& slot) {
    if (slot) return;
    const std::string path = find_dataset_file(data_dir, d, role);
    inputs.push_back(path);
    const corpus::Split split =
        role == "train" ? corpus::Split::Train : corpus::Split::Test;
    slot = load_dataset(path, "auto", d, split, &warnings);
  };
  ingest(domain, "train", bundle.semeval_train[eval::DatasetBundle::slot(domain)]);
  for (eval::Scenario sc : scenarios) {
    const eval::ScenarioSpec spec{sc, domain};
    switch (sc) {
      case eval::Scenario::InDomain:
        ingest(domain, "test", bundle.semeval_test[eval::DatasetBundle::slot(domain)]);
        break;
      case eval::Scenario::OutOfDomain:
        ingest(eval::other_domain(domain), "test",
               bundle.semeval_test[eval::DatasetBundle::slot(eval::other_domain(domain))]);
        break;
      case eval::Scenario::Adversarial:
        ingest(domain, "arts", bundle.arts_test[eval::DatasetBundle::slot(domain)]);
        break;
    }
    (void)spec;
  }
  print_warnings(warnings);

  // Vocabulary across everything involved, one shared table load.
  std::vector<const corpus::Dataset*> all;
  for (const auto& slot : bundle.semeval_train)
    if (slot) all.push_back(&*slot);
  for (const auto& slot : bundle.semeval_test)
    if (slot) all.push_back(&*slot);
  for (const auto& slot : bundle.arts_test)
    if (slot) all.push_back(&*slot);

  std::string emb_path = args.embeddings;
  if (emb_path.empty()) {
    for (const char* name : {"glove.840B.300d.txt", "glove.6B.300d.txt", "glove.txt"}) {
      const fs::path p = fs::path(data_dir) / name;
      if (fs::exists(p)) {
        emb_path = p.string();
        break;
      }
    }
    if (emb_path.empty())
      throw ParseError("no embedding file: pass --embeddings or place a GloVe "
                       "file in the data dir");
  } else {
    emb_path = resolve_input(emb_path, data_dir);
  }
  const corpus::EmbeddingTable table = load_table(
      emb_path, corpus::vocabulary_of(all), args.model.embed_dim, /*oov_seed=*/0);

  fs::create_directories(args.out_dir);
  cli::RunManifest manifest;
  manifest.command = "robustness";
  manifest.config = {{"archs", args.archs},
                     {"modes", args.modes},
                     {"scenarios", args.scenarios},
                     {"train_domain", corpus::to_string(domain)},
                     {"hidden", args.model.hidden},
                     {"embed_dim", args.model.embed_dim},
                     {"memnet_hops", args.model.hops},
                     {"keep_aspect", args.model.keep_aspect},
                     {"batch_size", args.train.batch_size},
                     {"learning_rate", args.train.learning_rate},
                     {"l2", args.train.l2},
                     {"max_epochs", args.train.epochs},
                     {"finetune_embeddings", args.train.finetune_embeddings},
                     {"dev_k", args.dev_k},
                     {"dev_seed", args.dev_seed},
                     {"embeddings", emb_path}};
  manifest.seeds = seeds;
  for (const std::string& path : inputs) manifest.add_input(path);
  manifest.add_input(emb_path);
  manifest.write((fs::path(args.out_dir) / "manifest.json").string());

  // One training per (arch, mode, seed); every requested scenario reuses the
  // trained model for its own test set.
  struct Task {
    models::Arch arch;
    bias::BiasMode mode;
    std::uint64_t seed;
    std::vector<eval::SeedRun> per_scenario;  // parallel to `scenarios`
  };
  std::vector<Task> tasks;
  for (models::Arch arch : archs)
    for (bias::BiasMode mode : modes)
      for (std::uint64_t seed : seeds) tasks.push_back({arch, mode, seed, {}});

  const eval::ProtocolConfig protocol{seeds, args.dev_k, args.dev_seed};
  std::atomic<std::size_t> next{0};
  std::mutex io_mutex;

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      Task& task = tasks[i];

      models::ModelConfig mc = args.model.to_config();
      mc.arch = task.arch;
      mc.bias_mode = task.mode;

      std::ostringstream run_name;
      run_name << models::to_string(task.arch) << '_'
               << bias::to_string(task.mode) << '_'
               << corpus::to_string(domain) << "_s" << task.seed;
      const fs::path run_dir = fs::path(args.out_dir) / "runs" / run_name.str();
      fs::create_directories(run_dir);
      std::ofstream log((run_dir / "trainlog.jsonl").string());

      const corpus::Dataset& full_train = bundle.train_of(domain);
      auto [train_split, dev_split] =
          corpus::split_dev(full_train, protocol.dev_size, protocol.dev_seed);
      train::TrainConfig config = args.train.to_config();
      config.model = mc;
      config.seed = task.seed;
      const train::TrainResult result =
          train::train(train_split, dev_split, config, table, &log);

      for (eval::Scenario sc : scenarios) {
        const eval::ScenarioSpec spec{sc, domain};
        eval::SeedRun run;
        run.seed = task.seed;
        run.best_dev_accuracy = result.best_dev_accuracy;
        run.best_epoch = result.best_epoch;
        run.test = train::evaluate(result.best, table, bundle.test_for(spec));
        task.per_scenario.push_back(run);
      }
      if (args.save_checkpoints)
        train::save_checkpoint((run_dir / "checkpoint.bin").string(), result.best);

      std::lock_guard<std::mutex> lock(io_mutex);
      std::cerr << "done " << run_name.str() << " (best epoch "
                << result.best_epoch << ", dev acc "
                << result.best_dev_accuracy << ")\n";
    }
  };

  const std::size_t n_threads = std::max<std::size_t>(1, args.jobs);
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();

  // Assemble the report in canonical order: arch, mode, scenario.
  eval::RobustnessReport report;
  for (models::Arch arch : archs) {
    for (bias::BiasMode mode : modes) {
      for (std::size_t si = 0; si < scenarios.size(); ++si) {
        eval::Cell cell;
        cell.arch = arch;
        cell.mode = mode;
        cell.scenario = scenarios[si];
        cell.train_domain = domain;
        for (const Task& task : tasks)
          if (task.arch == arch && task.mode == mode)
            cell.runs.push_back(task.per_scenario[si]);
        std::sort(cell.runs.begin(), cell.runs.end(),
                  [](const eval::SeedRun& a, const eval::SeedRun& b) {
                    return a.seed < b.seed;
                  });
        cell.mean = eval::mean_metrics(cell.runs);
        report.push_back(std::move(cell));
      }
    }
  }
  eval::attach_deltas(report);

  const std::string md = eval::render_report_markdown(report);
  const std::string csv = eval::render_report_csv(report);
  {
    std::ofstream out((fs::path(args.out_dir) / "report.md").string());
    out << md;
  }
  {
    std::ofstream out((fs::path(args.out_dir) / "report.csv").string());
    out << csv;
  }
  std::cout << md;
  return kExitOk;
}

// ---- subcommand: proximity ----------------------------------------------------

struct ProximityArgs {
  std::vector<std::string> inputs;
  std::string bandwidth = "auto";
  std::size_t grid_points = 201;
  std::string out_csv;
  std::string out_svg;
};

std::vector<double> read_proximity_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open: " + path);
  std::vector<double> samples;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string sid;
    long long n, a0, a1, o0, o1;
    if (!(ss >> sid >> n >> a0 >> a1 >> o0 >> o1)) {
      if (lineno == 1) continue;  // header row
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": expected sentence_id n aspect_start aspect_end "
                       "opinion_start opinion_end");
    }
    if (n < 1 || a0 < 0 || o0 < 0)
      throw ParseError(path + ":" + std::to_string(lineno) + ": bad spans");
    samples.push_back(bias::aspect_proximity(
        static_cast<std::size_t>(n), static_cast<std::size_t>(a0),
        static_cast<std::size_t>(a1), static_cast<std::size_t>(o0),
        static_cast<std::size_t>(o1)));
  }
  if (samples.empty()) throw ParseError(path + ": no samples");
  return samples;
}

int run_proximity(const ProximityArgs& args) {
  if (args.inputs.empty())
    throw CLI::ValidationError("--in", "need at least one input file");
  std::optional<double> bandwidth;
  if (args.bandwidth != "auto") bandwidth = std::stod(args.bandwidth);

  std::vector<double> grid(args.grid_points);
  for (std::size_t i = 0; i < grid.size(); ++i)
    grid[i] = static_cast<double>(i) / static_cast<double>(grid.size() - 1);

  std::vector<explain::KdeSeries> series;
  const std::string data_dir = data_dir_fallback();
  for (const std::string& input : args.inputs) {
    const std::string path = resolve_input(input, data_dir);
    const std::vector<double> samples = read_proximity_tsv(path);
    const std::vector<double> densities = bias::kde(samples, bandwidth, grid);
    explain::KdeSeries s;
    s.label = fs::path(path).stem().string();
    for (std::size_t i = 0; i < grid.size(); ++i)
      s.points.emplace_back(grid[i], densities[i]);
    series.push_back(std::move(s));
  }

  if (!args.out_csv.empty()) {
    cli::RunManifest manifest;
    manifest.command = "proximity";
    manifest.config = {{"bandwidth", args.bandwidth},
                       {"grid_points", args.grid_points}};
    for (const std::string& input : args.inputs)
      manifest.add_input(resolve_input(input, data_dir));
    manifest.write(args.out_csv + ".manifest.json");

    std::ofstream out(args.out_csv);
    if (!out) throw std::runtime_error("cannot write " + args.out_csv);
    char buf[64];
    if (series.size() == 1) {
      out << "x,density\n";
      for (const auto& [x, y] : series[0].points) {
        std::snprintf(buf, sizeof(buf), "%.12g,%.12g", x, y);
        out << buf << '\n';
      }
    } else {
      out << "series,x,density\n";
      for (const explain::KdeSeries& s : series)
        for (const auto& [x, y] : s.points) {
          std::snprintf(buf, sizeof(buf), "%.12g,%.12g", x, y);
          out << s.label << ',' << buf << '\n';
        }
    }
  }
  if (!args.out_svg.empty()) explain::render_kde(series, args.out_svg);
  if (args.out_csv.empty() && args.out_svg.empty())
    for (const explain::KdeSeries& s : series)
      std::cout << s.label << ": " << s.points.size() << " grid points\n";
  return kExitOk;
}

// ---- subcommand: explain -------------------------------------------------------

struct ExplainArgs {
  std::string checkpoint;
  std::string in;
  std::string domain = "laptop";
  std::size_t index = 0;
  std::string what = "saliency";
  std::string record;
  std::string embeddings;
  std::string out = "heatmap.svg";
  bool html = false;
};

int run_explain(const ExplainArgs& args) {
  const std::string data_dir = data_dir_fallback();
  const train::TrainedModel model =
      train::load_checkpoint(resolve_input(args.checkpoint, data_dir));
  std::vector<std::string> warnings;
  const corpus::Dataset ds =
      load_dataset(resolve_input(args.in, data_dir), "auto",
                   parse_domain(args.domain), corpus::Split::Test, &warnings);
  print_warnings(warnings);
  if (args.index >= ds.size())
    throw ParseError("--index out of range: dataset has " +
                     std::to_string(ds.size()) + " instances");
  const corpus::Instance& ins = ds.instances[args.index];

  const corpus::EmbeddingTable table = load_table(
      resolve_input(args.embeddings, data_dir), corpus::vocabulary_of({&ds}),
      model.config.embed_dim, /*oov_seed=*/0);

  explain::TokenScores scores;
  if (args.what == "saliency") {
    scores = explain::saliency(model, table, ins);
  } else if (args.what == "attention") {
    if (args.record.empty())
      throw CLI::ValidationError("--record", "attention needs a record name");
    const train::Prediction p = train::predict_one(model, table, ins);
    std::vector<std::string> tokens;
    for (const corpus::Token& t : ins.tokens) tokens.push_back(t.surface);
    scores = explain::attention_scores(p.trace, args.record, tokens,
                                       ins.aspect_start, ins.aspect_len);
  } else {
    throw CLI::ValidationError("--what", "expected saliency or attention");
  }

  cli::RunManifest manifest;
  manifest.command = "explain";
  manifest.config = {{"checkpoint", args.checkpoint},
                     {"in", args.in},
                     {"index", args.index},
                     {"what", args.what},
                     {"record", args.record},
                     {"html", args.html}};
  manifest.add_input(resolve_input(args.checkpoint, data_dir));
  manifest.add_input(resolve_input(args.in, data_dir));
  manifest.write(args.out + ".manifest.json");

  explain::render_heatmap(scores, args.out, args.html);
  std::cout << "wrote " << args.out << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"position-bias workbench for aspect sentiment classification"};
  app.set_version_flag("--version", std::string("posbias ") + kVersion);
  app.set_config("--config", "", "INI config file; command-line flags override it");
  app.require_subcommand(1);

  IngestArgs ingest_args;
  CLI::App* ingest = app.add_subcommand("ingest", "parse a dataset file and dump/report it");
  ingest->add_option("--format", ingest_args.format, "semeval, arts, jsonl or auto");
  ingest->add_option("--in", ingest_args.in, "input file")->required();
  ingest->add_option("--out", ingest_args.out, "output JSONL dump");
  ingest->add_option("--domain", ingest_args.domain, "laptop or restaurant");
  ingest->add_option("--split", ingest_args.split, "train, dev or test");
  ingest->add_flag("--stats", ingest_args.stats, "print label counts");

  SplitArgs split_args;
  CLI::App* split = app.add_subcommand("split", "draw a seeded dev split");
  split->add_option("--in", split_args.in, "input JSONL dump")->required();
  split->add_option("--k", split_args.k, "dev size");
  split->add_option("--seed", split_args.seed, "split seed");
  split->add_option("--out-train", split_args.out_train)->required();
  split->add_option("--out-dev", split_args.out_dev)->required();

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "train one model");
  train_cmd->add_option("--arch", train_args.model.arch, "lstm, lstm-attn, ian, memnet or aoa");
  train_cmd->add_option("--mode", train_args.model.mode, "none, pos-wt or pos-dp");
  train_cmd->add_option("--hidden", train_args.model.hidden);
  train_cmd->add_option("--embed-dim", train_args.model.embed_dim);
  train_cmd->add_option("--hops", train_args.model.hops, "MemNet hops");
  train_cmd->add_flag("--keep-aspect", train_args.model.keep_aspect,
                      "force weight 1 on aspect tokens");
  train_cmd->add_option("--batch", train_args.train.batch_size);
  train_cmd->add_option("--lr", train_args.train.learning_rate);
  train_cmd->add_option("--l2", train_args.train.l2);
  train_cmd->add_option("--epochs", train_args.train.epochs);
  train_cmd->add_flag("--finetune-embeddings", train_args.train.finetune_embeddings);
  train_cmd->add_option("--train", train_args.train_file)->required();
  train_cmd->add_option("--dev", train_args.dev_file);
  train_cmd->add_option("--dev-k", train_args.dev_k, "split this many dev instances off --train");
  train_cmd->add_option("--dev-seed", train_args.dev_seed);
  train_cmd->add_option("--domain", train_args.domain);
  train_cmd->add_option("--seed", train_args.seed);
  train_cmd->add_option("--embeddings", train_args.embeddings)->required();
  train_cmd->add_option("--out-dir", train_args.out_dir);

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a test set");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint)->required();
  eval_cmd->add_option("--test", eval_args.test_file)->required();
  eval_cmd->add_option("--domain", eval_args.domain);
  eval_cmd->add_option("--embeddings", eval_args.embeddings)->required();
  eval_cmd->add_option("--out-csv", eval_args.out_csv, "per-instance predictions");

  RobustnessArgs rob_args;
  CLI::App* rob = app.add_subcommand("robustness", "seeded multi-run robustness protocol");
  rob->add_option("--arch", rob_args.archs, "comma list of architectures");
  rob->add_option("--modes", rob_args.modes, "comma list of bias modes");
  rob->add_option("--scenarios", rob_args.scenarios, "comma list of id, ood, adv");
  rob->add_option("--train-domain", rob_args.train_domain, "lap or rest");
  rob->add_option("--seeds", rob_args.seeds, "comma list of seeds");
  rob->add_option("--data-dir", rob_args.data_dir, "dataset root (default $POSBIAS_DATA_DIR)");
  rob->add_option("--embeddings", rob_args.embeddings, "GloVe text file");
  rob->add_option("--out-dir", rob_args.out_dir);
  rob->add_option("--hidden", rob_args.model.hidden);
  rob->add_option("--embed-dim", rob_args.model.embed_dim);
  rob->add_option("--hops", rob_args.model.hops);
  rob->add_flag("--keep-aspect", rob_args.model.keep_aspect);
  rob->add_option("--batch", rob_args.train.batch_size);
  rob->add_option("--lr", rob_args.train.learning_rate);
  rob->add_option("--l2", rob_args.train.l2);
  rob->add_option("--epochs", rob_args.train.epochs);
  rob->add_flag("--finetune-embeddings", rob_args.train.finetune_embeddings);
  rob->add_option("--dev-k", rob_args.dev_k);
  rob->add_option("--dev-seed", rob_args.dev_seed);
  rob->add_option("--jobs", rob_args.jobs, "concurrent (arch, mode, seed) runs");
  rob->add_flag("--save-checkpoints", rob_args.save_checkpoints);

  ProximityArgs prox_args;
  CLI::App* prox = app.add_subcommand("proximity", "aspect-opinion proximity KDE");
  prox->add_option("--in", prox_args.inputs, "TSV of span pairs; repeat for multiple series")
      ->required();
  prox->add_option("--bandwidth", prox_args.bandwidth, "positive number or 'auto'");
  prox->add_option("--grid-points", prox_args.grid_points);
  prox->add_option("--out-csv", prox_args.out_csv);
  prox->add_option("--out-svg", prox_args.out_svg);

  ExplainArgs explain_args;
  CLI::App* explain_cmd = app.add_subcommand("explain", "saliency / attention heatmaps");
  explain_cmd->add_option("--checkpoint", explain_args.checkpoint)->required();
  explain_cmd->add_option("--in", explain_args.in, "dataset file")->required();
  explain_cmd->add_option("--domain", explain_args.domain);
  explain_cmd->add_option("--index", explain_args.index, "instance index");
  explain_cmd->add_option("--what", explain_args.what, "saliency or attention");
  explain_cmd->add_option("--record", explain_args.record, "attention record name");
  explain_cmd->add_option("--embeddings", explain_args.embeddings)->required();
  explain_cmd->add_option("--out", explain_args.out, "output SVG/HTML path");
  explain_cmd->add_flag("--html", explain_args.html, "emit an HTML fragment");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (app.got_subcommand(ingest)) return run_ingest(ingest_args);
    if (app.got_subcommand(split)) return run_split(split_args);
    if (app.got_subcommand(train_cmd)) return run_train(train_args);
    if (app.got_subcommand(eval_cmd)) return run_eval(eval_args);
    if (app.got_subcommand(rob)) return run_robustness(rob_args);
    if (app.got_subcommand(prox)) return run_proximity(prox_args);
    if (app.got_subcommand(explain_cmd)) return run_explain(explain_args);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
