#pragma once

#include <cstdint>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "posbias/adam.hpp"
#include "posbias/checkpoint.hpp"
#include "posbias/common.hpp"
#include "posbias/corpus.hpp"
#include "posbias/metrics.hpp"
#include "posbias/models.hpp"

namespace posbias::train {

struct TrainConfig {
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double l2 = 1e-5;
  std::size_t max_epochs = 20;
  std::uint64_t seed = 0;
  models::ModelConfig model;
  bool finetune_embeddings = false;
};

struct EpochStats {
  double train_loss = 0.0;
  double dev_accuracy = 0.0;
  double dev_macro_f1 = 0.0;
};

/// A trained model plus everything prediction needs. `embed_vocab` is
/// non-empty when embeddings were fine-tuned; the parameter "embed.table"
/// then holds one row per vocabulary word plus a trailing OOV row.
struct TrainedModel {
  models::ModelConfig config;
  models::ModelParams params;
  std::vector<std::string> embed_vocab;
  std::uint64_t seed = 0;

  bool has_embed_table() const { return !embed_vocab.empty(); }
};

struct TrainResult {
  TrainedModel best;
  std::size_t best_epoch = 0;  // 1-based
  double best_dev_accuracy = 0.0;
  std::vector<EpochStats> history;
};

namespace detail {

struct EmbedVocab {
  std::vector<std::string> surfaces;
  std::unordered_map<std::string, std::size_t> index;

  std::size_t oov_row() const { return surfaces.size(); }

  std::size_t row_of(const std::string& surface) const {
    auto it = index.find(surface);
    return it != index.end() ? it->second : oov_row();
  }
};

inline EmbedVocab collect_vocab(const corpus::Dataset& a,
                                const corpus::Dataset& b) {
  EmbedVocab v;
  for (const corpus::Dataset* ds : {&a, &b}) {
    for (const corpus::Instance& ins : ds->instances) {
      for (const corpus::Token& t : ins.tokens) {
        if (v.index.emplace(t.surface, v.surfaces.size()).second)
          v.surfaces.push_back(t.surface);
      }
    }
  }
  return v;
}

inline nn::Tensor build_embed_matrix(const EmbedVocab& vocab,
                                     const corpus::EmbeddingTable& table) {
  nn::Tensor m = nn::Tensor::zeros(vocab.surfaces.size() + 1, table.dimension);
  for (std::size_t r = 0; r < vocab.surfaces.size(); ++r) {
    const std::vector<double>& e = table.lookup(vocab.surfaces[r]);
    std::copy(e.begin(), e.end(), m.data() + r * table.dimension);
  }
  std::copy(table.oov_vector.begin(), table.oov_vector.end(),
            m.data() + vocab.surfaces.size() * table.dimension);
  return m;
}

}  // namespace detail

/// V for one instance under a trained model: fine-tuned rows when present,
/// otherwise raw table lookups.
inline nn::Tensor instance_v(const TrainedModel& model,
                             const corpus::EmbeddingTable& table,
                             const corpus::Instance& ins) {
  if (!model.has_embed_table()) return models::embed_lookup(ins, table);
  const nn::Tensor& m = model.params.at("embed.table");
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(model.embed_vocab.size());
  for (std::size_t i = 0; i < model.embed_vocab.size(); ++i)
    index.emplace(model.embed_vocab[i], i);
  nn::Tensor v = nn::Tensor::zeros(ins.size(), m.cols());
  for (std::size_t i = 0; i < ins.size(); ++i) {
    auto it = index.find(ins.tokens[i].surface);
    const std::size_t row = it != index.end() ? it->second : m.rows() - 1;
    std::copy(m.data() + row * m.cols(), m.data() + (row + 1) * m.cols(),
              v.data() + i * m.cols());
  }
  return v;
}

struct Prediction {
  int cls = 0;
  std::array<double, 3> logits{};
  models::ForwardTrace trace;
};

inline Prediction predict_one(const TrainedModel& model,
                              const corpus::EmbeddingTable& table,
                              const corpus::Instance& ins) {
  nn::Tape tape;
  models::BoundParams bound =
      models::bind_params(tape, model.params, /*trainable=*/false);
  const nn::Tensor v = instance_v(model, table, ins);
  models::InstanceGraph g =
      models::build_graph(tape, model.config, bound, v, ins.size(),
                          ins.aspect_start, ins.aspect_len,
                          /*training=*/false, nullptr);
  Prediction p;
  p.trace = models::extract_trace(tape, g.trace);
  p.logits = p.trace.logits;
  p.cls = models::argmax_class(p.logits);
  return p;
}

inline std::vector<Prediction> predict(const TrainedModel& model,
                                       const corpus::EmbeddingTable& table,
                                       const std::vector<corpus::Instance>& batch) {
  std::vector<Prediction> out;
  out.reserve(batch.size());
  for (const corpus::Instance& ins : batch)
    out.push_back(predict_one(model, table, ins));
  return out;
}

inline eval::Metrics evaluate(const TrainedModel& model,
                              const corpus::EmbeddingTable& table,
                              const corpus::Dataset& ds) {
  std::vector<int> preds, golds;
  preds.reserve(ds.size());
  golds.reserve(ds.size());
  for (const corpus::Instance& ins : ds.instances) {
    preds.push_back(predict_one(model, table, ins).cls);
    golds.push_back(static_cast<int>(ins.label));
  }
  return eval::compute_metrics(preds, golds);
}

/// Mini-batch training with per-epoch dev selection. Deterministic for a
/// fixed seed: the run rng drives, in order, the OOV redraw, parameter
/// initialization, then each epoch's shuffle and dropout masks. The best
/// epoch by dev accuracy is kept, earlier epochs winning ties.
inline TrainResult train(const corpus::Dataset& train_set,
                         const corpus::Dataset& dev_set,
                         const TrainConfig& config,
                         const corpus::EmbeddingTable& table,
                         std::ostream* log = nullptr) {
  if (train_set.instances.empty() || dev_set.instances.empty())
    throw std::invalid_argument("train: datasets must be non-empty");
  if (config.batch_size < 1 || config.max_epochs < 1)
    throw std::invalid_argument("train: batch_size and max_epochs must be >= 1");
  if (table.dimension != config.model.embed_dim)
    throw std::invalid_argument("train: table dimension != model embed_dim");

  Rng rng(config.seed);

  // Run-local OOV vector, redrawn from the run seed.
  corpus::EmbeddingTable run_table = table;
  for (double& v : run_table.oov_vector) v = rng.uniform(-0.1, 0.1);

  TrainedModel model;
  model.config = config.model;
  model.seed = config.seed;
  model.params = models::init_params(config.model, rng);

  detail::EmbedVocab vocab;
  if (config.finetune_embeddings) {
    vocab = detail::collect_vocab(train_set, dev_set);
    model.embed_vocab = vocab.surfaces;
    model.params.tensors.emplace("embed.table",
                                 detail::build_embed_matrix(vocab, run_table));
  }

  nn::AdamOptimizer optimizer({config.learning_rate});
  const auto decay_of = [&config](const std::string& name) {
    if (models::is_bias_name(name) || name == "embed.table") return 0.0;
    return config.l2;
  };

  // Per-instance V cache for the frozen-embedding path.
  std::vector<nn::Tensor> v_cache;
  if (!config.finetune_embeddings) {
    v_cache.reserve(train_set.size());
    for (const corpus::Instance& ins : train_set.instances)
      v_cache.push_back(models::embed_lookup(ins, run_table));
  }

  TrainResult result;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  std::map<std::string, nn::Tensor> grads;
  for (const auto& [name, t] : model.params.tensors)
    grads.emplace(name, nn::Tensor(t.shape()));

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;

    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      for (auto& [name, g] : grads) g.fill(0.0);

      for (std::size_t b = start; b < stop; ++b) {
        const corpus::Instance& ins = train_set.instances[order[b]];
        nn::Tape tape;
        models::BoundParams bound =
            models::bind_params(tape, model.params, /*trainable=*/true);

        nn::Var input;
        if (config.finetune_embeddings) {
          std::vector<std::size_t> ids(ins.size());
          for (std::size_t i = 0; i < ins.size(); ++i)
            ids[i] = vocab.row_of(ins.tokens[i].surface);
          input = tape.gather_rows(bound.at("embed.table"), std::move(ids));
        } else {
          input = tape.leaf(v_cache[order[b]]);
        }

        models::InstanceGraph g = models::build_graph_on(
            tape, config.model, bound, input, ins.aspect_start, ins.aspect_len,
            /*training=*/true, &rng);
        nn::Var loss = tape.cross_entropy_logits(
            g.trace.logits, static_cast<std::size_t>(ins.label));
        loss_sum += tape.value(loss).value();
        tape.backward(loss);

        for (const auto& [name, var] : bound.vars) {
          if (const nn::Tensor* gp = tape.grad(var))
            grads[name].vec() += gp->vec();
        }
      }

      const double inv = 1.0 / static_cast<double>(stop - start);
      for (auto& [name, g] : grads) g.vec() *= inv;
      optimizer.step(model.params.tensors, grads, decay_of);
    }

    EpochStats stats;
    stats.train_loss = loss_sum / static_cast<double>(train_set.size());
    const eval::Metrics dev = evaluate(model, run_table, dev_set);
    stats.dev_accuracy = dev.accuracy;
    stats.dev_macro_f1 = dev.macro_f1;
    result.history.push_back(stats);

    if (log) {
      nlohmann::json line = {{"epoch", epoch},
                             {"train_loss", stats.train_loss},
                             {"dev_acc", stats.dev_accuracy},
                             {"dev_f1", stats.dev_macro_f1}};
      (*log) << line.dump() << '\n';
    }

    if (result.best_epoch == 0 || dev.accuracy > result.best_dev_accuracy) {
      result.best_epoch = epoch;
      result.best_dev_accuracy = dev.accuracy;
      result.best = model;  // deep copy of the current parameters
    }
  }
  return result;
}

// ---- checkpoint with sidecar metadata --------------------------------------

inline void save_checkpoint(const std::string& path, const TrainedModel& model) {
  nn::save_tensors(path, model.params.tensors);
  nlohmann::json meta = {{"format", 1},
                         {"model", models::to_json(model.config)},
                         {"seed", model.seed},
                         {"embed_vocab", model.embed_vocab}};
  std::ofstream out(path + ".meta.json");
  if (!out) throw std::runtime_error("cannot write " + path + ".meta.json");
  out << meta.dump(2) << '\n';
}

inline TrainedModel load_checkpoint(const std::string& path) {
  TrainedModel model;
  model.params.tensors = nn::load_tensors(path);
  std::ifstream in(path + ".meta.json");
  if (!in) throw ParseError("missing checkpoint metadata: " + path + ".meta.json");
  nlohmann::json meta;
  try {
    in >> meta;
    model.config = models::model_config_from_json(meta.at("model"));
    model.seed = meta.at("seed").get<std::uint64_t>();
    model.embed_vocab =
        meta.at("embed_vocab").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad checkpoint metadata: ") + e.what());
  }
  // The embedding table is optional; everything else must match the config.
  models::ModelParams core = model.params;
  core.tensors.erase("embed.table");
  models::validate_params(model.config, core);
  if (model.has_embed_table() && !model.params.tensors.count("embed.table"))
    throw ParseError("checkpoint metadata lists a vocabulary but no embed.table");
  return model;
}

}  // namespace posbias::train
