#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "posbias/common.hpp"
#include "posbias/tensor.hpp"

namespace posbias::bias {

enum class BiasMode { None, PosWt, PosDp };

inline const char* to_string(BiasMode m) {
  switch (m) {
    case BiasMode::None: return "none";
    case BiasMode::PosWt: return "pos-wt";
    default: return "pos-dp";
  }
}

inline std::optional<BiasMode> bias_mode_from_string(const std::string& s) {
  if (s == "none") return BiasMode::None;
  if (s == "pos-wt" || s == "poswt") return BiasMode::PosWt;
  if (s == "pos-dp" || s == "posdp") return BiasMode::PosDp;
  return std::nullopt;
}

/// Per-token position weights p_0..p_{n-1} for a sentence of n tokens whose
/// aspect occupies [gamma, gamma+m).
struct PositionWeights {
  std::vector<double> values;
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t gamma = 0;
};

/// Distance-decayed weights: context tokens fall off linearly with their
/// distance to the aspect span, aspect tokens share the constant 1/(n-m).
/// When the sentence is entirely the aspect (n == m) every weight is 1.
inline PositionWeights position_weights(std::size_t n, std::size_t m,
                                        std::size_t gamma) {
  if (n < 1 || m < 1) throw std::invalid_argument("position_weights: n, m >= 1");
  if (gamma + m > n)
    throw std::invalid_argument("position_weights: aspect span exceeds sentence");
  PositionWeights w;
  w.n = n;
  w.m = m;
  w.gamma = gamma;
  w.values.resize(n);
  if (n == m) {
    for (double& v : w.values) v = 1.0;
    return w;
  }
  const double ctx = static_cast<double>(n - m);
  for (std::size_t i = 0; i < n; ++i) {
    if (i < gamma) {
      w.values[i] = 1.0 - static_cast<double>(gamma - i) / ctx;
    } else if (i < gamma + m) {
      w.values[i] = 1.0 / ctx;
    } else {
      w.values[i] = 1.0 - static_cast<double>(i - gamma - m + 1) / ctx;
    }
  }
  return w;
}

struct DropoutMask {
  std::vector<std::uint8_t> values;  // each exactly 0 or 1
};

/// z_i ~ Bernoulli(p_i), independently per token.
inline DropoutMask sample_dropout_mask(const PositionWeights& p, Rng& rng) {
  DropoutMask mask;
  mask.values.resize(p.values.size());
  for (std::size_t i = 0; i < p.values.size(); ++i)
    mask.values[i] = rng.bernoulli(p.values[i]) ? 1 : 0;
  return mask;
}

/// Raw per-token embeddings e_0..e_{n-1}, one row per token.
struct EmbeddedSentence {
  nn::Tensor vectors;  // n x d

  std::size_t size() const { return vectors.rows(); }
  std::size_t dim() const { return vectors.cols(); }
};

/// Bias-refined representation h_0..h_{n-1}; same shape as its source.
struct BiasedSentence {
  nn::Tensor vectors;  // n x d
  BiasMode mode = BiasMode::None;
};

/// h_i = p_i * e_i.
inline BiasedSentence apply_weights(const EmbeddedSentence& v,
                                    const PositionWeights& p) {
  if (v.size() != p.values.size())
    throw std::invalid_argument("apply_weights: length mismatch");
  BiasedSentence out;
  out.mode = BiasMode::PosWt;
  out.vectors = v.vectors;
  const std::size_t d = v.dim();
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) out.vectors[i * d + j] *= p.values[i];
  return out;
}

/// h_i = z_i * e_i.
inline BiasedSentence apply_dropout(const EmbeddedSentence& v,
                                    const DropoutMask& z) {
  if (v.size() != z.values.size())
    throw std::invalid_argument("apply_dropout: length mismatch");
  BiasedSentence out;
  out.mode = BiasMode::PosDp;
  out.vectors = v.vectors;
  const std::size_t d = v.dim();
  for (std::size_t i = 0; i < v.size(); ++i)
    if (z.values[i] == 0)
      for (std::size_t j = 0; j < d; ++j) out.vectors[i * d + j] = 0.0;
  return out;
}

// ---- aspect proximity and its density ------------------------------------

/// Minimum token distance between an aspect span and an opinion span, divided
/// by the sentence length. Overlapping spans yield 0.
inline double aspect_proximity(std::size_t n, std::size_t aspect_begin,
                               std::size_t aspect_end, std::size_t opinion_begin,
                               std::size_t opinion_end) {
  if (n == 0 || aspect_begin >= aspect_end || aspect_end > n ||
      opinion_begin >= opinion_end || opinion_end > n)
    throw std::invalid_argument("aspect_proximity: invalid spans");
  std::size_t dist = 0;
  if (opinion_begin >= aspect_end) dist = opinion_begin - (aspect_end - 1);
  else if (aspect_begin >= opinion_end) dist = aspect_begin - (opinion_end - 1);
  return static_cast<double>(dist) / static_cast<double>(n);
}

/// Silverman's rule of thumb: 1.06 * sigma * N^(-1/5). Uses the sample
/// standard deviation (N-1 denominator); needs at least two distinct samples.
inline double silverman_bandwidth(const std::vector<double>& samples) {
  if (samples.size() < 2)
    throw std::invalid_argument("silverman_bandwidth: need at least 2 samples");
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= static_cast<double>(samples.size());
  double ss = 0.0;
  for (double s : samples) ss += (s - mean) * (s - mean);
  const double sigma = std::sqrt(ss / static_cast<double>(samples.size() - 1));
  if (sigma <= 0.0)
    throw std::invalid_argument("silverman_bandwidth: zero variance");
  return 1.06 * sigma *
         std::pow(static_cast<double>(samples.size()), -0.2);
}

/// Gaussian kernel density estimate over the grid:
/// f(x) = (1/(N h)) sum_k phi((x - s_k)/h). Bandwidth nullopt means
/// Silverman's rule.
inline std::vector<double> kde(const std::vector<double>& samples,
                               std::optional<double> bandwidth,
                               const std::vector<double>& grid) {
  if (samples.empty()) throw std::invalid_argument("kde: no samples");
  if (grid.empty()) throw std::invalid_argument("kde: empty grid");
  double h;
  if (bandwidth) {
    if (*bandwidth <= 0.0) throw std::invalid_argument("kde: bandwidth must be > 0");
    h = *bandwidth;
  } else {
    h = silverman_bandwidth(samples);
  }
  constexpr double inv_sqrt_2pi = 0.3989422804014326779;
  const double norm = inv_sqrt_2pi / (h * static_cast<double>(samples.size()));
  std::vector<double> densities(grid.size(), 0.0);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double acc = 0.0;
    for (double s : samples) {
      const double u = (grid[g] - s) / h;
      acc += std::exp(-0.5 * u * u);
    }
    densities[g] = acc * norm;
  }
  return densities;
}

}  // namespace posbias::bias
