#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "posbias/common.hpp"
#include "posbias/corpus.hpp"
#include "posbias/layers.hpp"
#include "posbias/position_bias.hpp"
#include "posbias/tape.hpp"

namespace posbias::models {

enum class Arch { Lstm, LstmAttn, Ian, MemNet, Aoa };

inline const char* to_string(Arch a) {
  switch (a) {
    case Arch::Lstm: return "lstm";
    case Arch::LstmAttn: return "lstm-attn";
    case Arch::Ian: return "ian";
    case Arch::MemNet: return "memnet";
    default: return "aoa";
  }
}

inline std::optional<Arch> arch_from_string(const std::string& s) {
  if (s == "lstm") return Arch::Lstm;
  if (s == "lstm-attn" || s == "lstm_attn") return Arch::LstmAttn;
  if (s == "ian") return Arch::Ian;
  if (s == "memnet") return Arch::MemNet;
  if (s == "aoa") return Arch::Aoa;
  return std::nullopt;
}

struct ModelConfig {
  Arch arch = Arch::Lstm;
  bias::BiasMode bias_mode = bias::BiasMode::None;
  std::size_t hidden = 300;
  std::size_t embed_dim = 300;
  std::size_t memnet_hops = 3;
  bool keep_aspect = false;
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"arch", to_string(c.arch)},
          {"bias_mode", bias::to_string(c.bias_mode)},
          {"hidden", c.hidden},
          {"embed_dim", c.embed_dim},
          {"memnet_hops", c.memnet_hops},
          {"keep_aspect", c.keep_aspect}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  const auto arch = arch_from_string(j.at("arch").get<std::string>());
  const auto mode = bias::bias_mode_from_string(j.at("bias_mode").get<std::string>());
  if (!arch || !mode) throw ParseError("model config: unknown arch or bias mode");
  c.arch = *arch;
  c.bias_mode = *mode;
  c.hidden = j.at("hidden").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.memnet_hops = j.at("memnet_hops").get<std::size_t>();
  c.keep_aspect = j.at("keep_aspect").get<bool>();
  return c;
}

/// All learnable tensors of one model, keyed <module>.<layer>.<tensor>.
struct ModelParams {
  std::map<std::string, nn::Tensor> tensors;

  const nn::Tensor& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw std::invalid_argument("missing parameter: " + name);
    return it->second;
  }
};

namespace detail {

inline std::string arch_prefix(Arch a) {
  switch (a) {
    case Arch::Lstm: return "lstm";
    case Arch::LstmAttn: return "lstm_attn";
    case Arch::Ian: return "ian";
    case Arch::MemNet: return "memnet";
    default: return "aoa";
  }
}

inline void add_lstm_spec(std::vector<std::pair<std::string, std::vector<std::size_t>>>& spec,
                          const std::string& prefix, std::size_t input_dim,
                          std::size_t hidden) {
  for (const char* dir : {"fw", "bw"}) {
    spec.push_back({prefix + "." + dir + ".w_x", {4 * hidden, input_dim}});
    spec.push_back({prefix + "." + dir + ".w_h", {4 * hidden, hidden}});
    spec.push_back({prefix + "." + dir + ".b", {4 * hidden}});
  }
}

}  // namespace detail

/// Name/shape plan for one architecture, in initialization order.
inline std::vector<std::pair<std::string, std::vector<std::size_t>>> param_spec(
    const ModelConfig& c) {
  using detail::add_lstm_spec;
  const std::size_t d = c.embed_dim, h = c.hidden, h2 = 2 * c.hidden;
  const std::string p = detail::arch_prefix(c.arch);
  std::vector<std::pair<std::string, std::vector<std::size_t>>> spec;
  switch (c.arch) {
    case Arch::Lstm:
      add_lstm_spec(spec, p + ".ctx", d, h);
      break;
    case Arch::LstmAttn:
      add_lstm_spec(spec, p + ".ctx", 2 * d, h);
      spec.push_back({p + ".attn.w_q", {h2, d}});
      break;
    case Arch::Ian:
      add_lstm_spec(spec, p + ".ctx", d, h);
      add_lstm_spec(spec, p + ".asp", d, h);
      spec.push_back({p + ".attn_ctx.w_q", {h2, h2}});
      spec.push_back({p + ".attn_asp.w_q", {h2, h2}});
      break;
    case Arch::MemNet:
      add_lstm_spec(spec, p + ".mem", d, h);
      spec.push_back({p + ".query.w", {h2, d}});
      spec.push_back({p + ".attn.w_q", {h2, h2}});
      spec.push_back({p + ".hop.w", {h2, h2}});
      spec.push_back({p + ".hop.b", {h2}});
      break;
    case Arch::Aoa:
      add_lstm_spec(spec, p + ".ctx", d, h);
      add_lstm_spec(spec, p + ".asp", d, h);
      break;
  }
  const std::size_t head_in = c.arch == Arch::Ian ? 4 * c.hidden : h2;
  spec.push_back({p + ".head.w", {3, head_in}});
  spec.push_back({p + ".head.b", {3}});
  return spec;
}

inline bool is_bias_name(const std::string& name) {
  return name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0;
}

/// Weights uniform in [-0.1, 0.1], biases zero, LSTM forget-gate bias +1.
inline ModelParams init_params(const ModelConfig& c, Rng& rng) {
  ModelParams params;
  for (const auto& [name, shape] : param_spec(c)) {
    nn::Tensor t{shape};
    if (!is_bias_name(name)) {
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-0.1, 0.1);
    } else if (name.find(".fw.b") != std::string::npos ||
               name.find(".bw.b") != std::string::npos) {
      const std::size_t h = t.size() / 4;
      for (std::size_t i = h; i < 2 * h; ++i) t[i] = 1.0;
    }
    params.tensors.emplace(name, std::move(t));
  }
  return params;
}

/// Checks a loaded parameter set against the plan for `c`.
inline void validate_params(const ModelConfig& c, const ModelParams& params) {
  const auto spec = param_spec(c);
  if (spec.size() != params.tensors.size())
    throw ParseError("checkpoint does not match model config: tensor count");
  for (const auto& [name, shape] : spec) {
    auto it = params.tensors.find(name);
    if (it == params.tensors.end())
      throw ParseError("checkpoint does not match model config: missing " + name);
    if (it->second.shape() != shape)
      throw ParseError("checkpoint does not match model config: shape of " + name);
  }
}

// ---- graph construction ---------------------------------------------------

struct BoundParams {
  std::map<std::string, nn::Var> vars;

  nn::Var at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end())
      throw std::invalid_argument("unbound parameter: " + name);
    return it->second;
  }
};

/// Registers every parameter tensor on the tape. Trainable binding records
/// gradients; frozen binding skips them. Tensors are aliased, not copied, so
/// `params` must outlive the tape.
inline BoundParams bind_params(nn::Tape& tape, const ModelParams& params,
                               bool trainable) {
  BoundParams bound;
  for (const auto& [name, tensor] : params.tensors)
    bound.vars.emplace(name, trainable ? tape.leaf_ref(&tensor)
                                       : tape.constant_ref(&tensor));
  return bound;
}

inline nn::BiLstmVars bind_bilstm(const BoundParams& p, const std::string& prefix) {
  return {{p.at(prefix + ".fw.w_x"), p.at(prefix + ".fw.w_h"), p.at(prefix + ".fw.b")},
          {p.at(prefix + ".bw.w_x"), p.at(prefix + ".bw.w_h"), p.at(prefix + ".bw.b")}};
}

struct GraphTrace {
  nn::Var logits;
  std::vector<std::pair<std::string, nn::Var>> attention;
};

/// Final-position state of the BiLSTM feeds the classifier directly.
inline GraphTrace forward_lstm(nn::Tape& t, nn::Var ctx, const BoundParams& p) {
  nn::Var states = nn::bilstm_encode(t, ctx, bind_bilstm(p, "lstm.ctx"));
  nn::Var final = t.row(states, t.value(states).rows() - 1);
  return {t.affine(p.at("lstm.head.w"), final, p.at("lstm.head.b")), {}};
}

/// Aspect mean is appended to every token vector before encoding; a learned
/// projection of the aspect mean queries the hidden states.
inline GraphTrace forward_lstm_attn(nn::Tape& t, nn::Var ctx, nn::Var aspect_mean,
                                    const BoundParams& p) {
  const std::size_t n = t.value(ctx).rows();
  nn::Var tiled = t.stack_rows(std::vector<nn::Var>(n, aspect_mean));
  nn::Var states = nn::bilstm_encode(t, t.concat_cols(ctx, tiled),
                                     bind_bilstm(p, "lstm_attn.ctx"));
  nn::Var query = t.matvec(p.at("lstm_attn.attn.w_q"), aspect_mean);
  nn::Attention att = nn::dot_attention(t, query, states);
  nn::Var logits =
      t.affine(p.at("lstm_attn.head.w"), att.context, p.at("lstm_attn.head.b"));
  return {logits, {{"attention", att.weights}}};
}

/// Context and aspect are encoded separately; each side's mean pool queries
/// the other side's states.
inline GraphTrace forward_ian(nn::Tape& t, nn::Var ctx, nn::Var aspect,
                              const BoundParams& p) {
  nn::Var ctx_states = nn::bilstm_encode(t, ctx, bind_bilstm(p, "ian.ctx"));
  nn::Var asp_states = nn::bilstm_encode(t, aspect, bind_bilstm(p, "ian.asp"));
  nn::Var ctx_pool = t.mean_rows(ctx_states);
  nn::Var asp_pool = t.mean_rows(asp_states);
  nn::Attention over_asp = nn::dot_attention(
      t, t.matvec(p.at("ian.attn_asp.w_q"), ctx_pool), asp_states);
  nn::Attention over_ctx = nn::dot_attention(
      t, t.matvec(p.at("ian.attn_ctx.w_q"), asp_pool), ctx_states);
  nn::Var final = t.concat(over_ctx.context, over_asp.context);
  nn::Var logits = t.affine(p.at("ian.head.w"), final, p.at("ian.head.b"));
  return {logits, {{"context", over_ctx.weights}, {"aspect", over_asp.weights}}};
}

/// Multi-hop attention over BiLSTM memories; the hop update adds a linear
/// transform of the previous query to the attended context.
inline GraphTrace forward_memnet(nn::Tape& t, nn::Var ctx, nn::Var aspect_mean,
                                 const BoundParams& p, std::size_t hops) {
  if (hops < 1) throw std::invalid_argument("forward_memnet: hops >= 1");
  nn::Var memories = nn::bilstm_encode(t, ctx, bind_bilstm(p, "memnet.mem"));
  nn::Var query = t.matvec(p.at("memnet.query.w"), aspect_mean);
  GraphTrace trace;
  for (std::size_t hop = 1; hop <= hops; ++hop) {
    nn::Attention att = nn::dot_attention(
        t, t.matvec(p.at("memnet.attn.w_q"), query), memories);
    query = t.add(att.context,
                  t.affine(p.at("memnet.hop.w"), query, p.at("memnet.hop.b")));
    trace.attention.emplace_back("hop" + std::to_string(hop), att.weights);
  }
  trace.logits = t.affine(p.at("memnet.head.w"), query, p.at("memnet.head.b"));
  return trace;
}

/// Attention-over-attention: column softmax x mean of row softmax gives the
/// final token weights.
inline GraphTrace forward_aoa(nn::Tape& t, nn::Var ctx, nn::Var aspect,
                              const BoundParams& p) {
  nn::Var ctx_states = nn::bilstm_encode(t, ctx, bind_bilstm(p, "aoa.ctx"));
  nn::Var asp_states = nn::bilstm_encode(t, aspect, bind_bilstm(p, "aoa.asp"));
  nn::Var interaction = t.matmul(ctx_states, asp_states, false, true);  // n x m
  nn::Var alpha = t.softmax_cols(interaction);
  nn::Var beta_bar = t.mean_rows(t.softmax_rows(interaction));
  nn::Var weights = t.matvec(alpha, beta_bar);
  nn::Var sentence = t.matvec(ctx_states, weights, /*ta=*/true);
  nn::Var logits = t.affine(p.at("aoa.head.w"), sentence, p.at("aoa.head.b"));
  return {logits, {{"aoa", weights}}};
}

// ---- data-level entry points ------------------------------------------------

/// Per-token multipliers applied to V before the encoders, or nullopt for the
/// identity. Training under pos-dp samples a fresh mask; evaluation uses the
/// weights themselves (expectation rule, no rescaling).
inline std::optional<std::vector<double>> bias_factors(
    const ModelConfig& c, std::size_t n, std::size_t m, std::size_t gamma,
    bool training, Rng* rng) {
  if (c.bias_mode == bias::BiasMode::None) return std::nullopt;
  bias::PositionWeights w = bias::position_weights(n, m, gamma);
  if (c.keep_aspect)
    for (std::size_t i = gamma; i < gamma + m; ++i) w.values[i] = 1.0;
  if (c.bias_mode == bias::BiasMode::PosDp && training) {
    if (!rng)
      throw std::invalid_argument("bias_factors: pos-dp training needs an rng");
    const bias::DropoutMask z = bias::sample_dropout_mask(w, *rng);
    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i) f[i] = z.values[i];
    return f;
  }
  return w.values;
}

/// Raw embedding rows for every token of the instance.
inline nn::Tensor embed_lookup(const corpus::Instance& ins,
                               const corpus::EmbeddingTable& table) {
  nn::Tensor v = nn::Tensor::zeros(ins.size(), table.dimension);
  for (std::size_t i = 0; i < ins.size(); ++i) {
    const std::vector<double>& e = table.lookup(ins.tokens[i].surface);
    std::copy(e.begin(), e.end(), v.data() + i * table.dimension);
  }
  return v;
}

/// Looks up V and applies the configured bias, yielding the representation E
/// that the encoders consume.
inline bias::BiasedSentence embed_and_bias(const corpus::Instance& ins,
                                           const corpus::EmbeddingTable& table,
                                           const ModelConfig& c, Rng* rng,
                                           bool training) {
  bias::EmbeddedSentence v{embed_lookup(ins, table)};
  const auto factors =
      bias_factors(c, ins.size(), ins.aspect_len, ins.aspect_start, training, rng);
  bias::BiasedSentence out;
  out.mode = c.bias_mode;
  if (!factors) {
    out.vectors = std::move(v.vectors);
    return out;
  }
  out.vectors = v.vectors;
  const std::size_t d = v.dim();
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) out.vectors[i * d + j] *= (*factors)[i];
  return out;
}

struct InstanceGraph {
  nn::Var input;  // the V node, one row per real token
  GraphTrace trace;
};

/// Attaches the architecture graph to an existing V node (n_true x d).
/// Aspect-side inputs are taken from raw V so dropout cannot erase the
/// model's view of the aspect.
inline InstanceGraph build_graph_on(nn::Tape& tape, const ModelConfig& c,
                                    const BoundParams& p, nn::Var input,
                                    std::size_t aspect_start,
                                    std::size_t aspect_len, bool training,
                                    Rng* rng) {
  const nn::Tensor& v = tape.value(input);
  const std::size_t n_true = v.rows();
  if (v.rank() != 2 || n_true < 1)
    throw std::invalid_argument("build_graph: V must be a non-empty matrix");
  if (aspect_len < 1 || aspect_start + aspect_len > n_true)
    throw std::invalid_argument("build_graph: aspect span out of range");
  if (v.cols() != c.embed_dim)
    throw std::invalid_argument("build_graph: embedding dimension mismatch");

  const auto factors =
      bias_factors(c, n_true, aspect_len, aspect_start, training, rng);
  nn::Var ctx = input;
  if (factors)
    ctx = tape.row_scale(input, tape.constant(nn::Tensor::from_vector(*factors)));

  InstanceGraph g;
  g.input = input;
  switch (c.arch) {
    case Arch::Lstm:
      g.trace = forward_lstm(tape, ctx, p);
      break;
    case Arch::LstmAttn: {
      nn::Var asp_mean =
          tape.mean_rows(tape.row_range(input, aspect_start, aspect_len));
      g.trace = forward_lstm_attn(tape, ctx, asp_mean, p);
      break;
    }
    case Arch::Ian:
      g.trace = forward_ian(tape, ctx,
                            tape.row_range(input, aspect_start, aspect_len), p);
      break;
    case Arch::MemNet: {
      nn::Var asp_mean =
          tape.mean_rows(tape.row_range(input, aspect_start, aspect_len));
      g.trace = forward_memnet(tape, ctx, asp_mean, p, c.memnet_hops);
      break;
    }
    case Arch::Aoa:
      g.trace = forward_aoa(tape, ctx,
                            tape.row_range(input, aspect_start, aspect_len), p);
      break;
  }
  return g;
}

/// Builds the graph for one instance from a plain V tensor. `v_full` may
/// carry padding rows past `n_true`; they never enter the graph.
inline InstanceGraph build_graph(nn::Tape& tape, const ModelConfig& c,
                                 const BoundParams& p, const nn::Tensor& v_full,
                                 std::size_t n_true, std::size_t aspect_start,
                                 std::size_t aspect_len, bool training,
                                 Rng* rng) {
  if (n_true < 1 || n_true > v_full.rows())
    throw std::invalid_argument("build_graph: bad true length");
  const std::size_t d = v_full.cols();
  nn::Tensor v_true = nn::Tensor::zeros(n_true, d);
  std::copy(v_full.data(), v_full.data() + n_true * d, v_true.data());
  nn::Var input = tape.leaf(std::move(v_true));
  return build_graph_on(tape, c, p, input, aspect_start, aspect_len, training,
                        rng);
}

/// Per-instance forward output with the captured attention records.
struct ForwardTrace {
  std::array<double, 3> logits{};
  std::vector<std::pair<std::string, std::vector<double>>> attention_records;
};

inline ForwardTrace extract_trace(const nn::Tape& tape, const GraphTrace& g) {
  ForwardTrace out;
  const nn::Tensor& lv = tape.value(g.logits);
  for (std::size_t i = 0; i < 3; ++i) out.logits[i] = lv[i];
  for (const auto& [name, var] : g.attention) {
    const nn::Tensor& w = tape.value(var);
    out.attention_records.emplace_back(
        name, std::vector<double>(w.data(), w.data() + w.size()));
  }
  return out;
}

/// Evaluation-mode forward pass for one instance (no gradients recorded).
inline ForwardTrace run_instance(const ModelConfig& c, const ModelParams& params,
                                 const corpus::EmbeddingTable& table,
                                 const corpus::Instance& ins,
                                 Rng* training_rng = nullptr) {
  nn::Tape tape;
  BoundParams bound = bind_params(tape, params, /*trainable=*/false);
  const nn::Tensor v = embed_lookup(ins, table);
  InstanceGraph g =
      build_graph(tape, c, bound, v, ins.size(), ins.aspect_start,
                  ins.aspect_len, /*training=*/training_rng != nullptr,
                  training_rng);
  return extract_trace(tape, g.trace);
}

/// Argmax with ties resolved to the lowest class index.
inline int argmax_class(const std::array<double, 3>& logits) {
  int best = 0;
  for (int i = 1; i < 3; ++i)
    if (logits[static_cast<std::size_t>(i)] > logits[static_cast<std::size_t>(best)])
      best = i;
  return best;
}

}  // namespace posbias::models
