#pragma once

#include <array>
#include <stdexcept>
#include <vector>

namespace posbias::eval {

inline constexpr int kNumClasses = 3;

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

inline double accuracy(const std::vector<int>& predictions,
                       const std::vector<int>& golds) {
  if (predictions.size() != golds.size())
    throw std::invalid_argument("accuracy: length mismatch");
  if (predictions.empty()) throw std::invalid_argument("accuracy: empty input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < golds.size(); ++i)
    if (predictions[i] == golds[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(golds.size());
}

/// Unweighted mean of per-class F1 over all three classes. A class with
/// P + R = 0 contributes an F1 of 0; the divisor is always 3.
inline double macro_f1(const std::vector<int>& predictions,
                       const std::vector<int>& golds) {
  if (predictions.size() != golds.size())
    throw std::invalid_argument("macro_f1: length mismatch");
  if (predictions.empty()) throw std::invalid_argument("macro_f1: empty input");
  std::array<std::size_t, kNumClasses> tp{}, fp{}, fn{};
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const int p = predictions[i], g = golds[i];
    if (p < 0 || p >= kNumClasses || g < 0 || g >= kNumClasses)
      throw std::invalid_argument("macro_f1: class index out of range");
    if (p == g) ++tp[static_cast<std::size_t>(p)];
    else {
      ++fp[static_cast<std::size_t>(p)];
      ++fn[static_cast<std::size_t>(g)];
    }
  }
  double sum = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    const auto i = static_cast<std::size_t>(c);
    const double prec = tp[i] + fp[i] > 0
                            ? static_cast<double>(tp[i]) /
                                  static_cast<double>(tp[i] + fp[i])
                            : 0.0;
    const double rec = tp[i] + fn[i] > 0
                           ? static_cast<double>(tp[i]) /
                                 static_cast<double>(tp[i] + fn[i])
                           : 0.0;
    sum += prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
  }
  return sum / kNumClasses;
}

inline Metrics compute_metrics(const std::vector<int>& predictions,
                               const std::vector<int>& golds) {
  return {accuracy(predictions, golds), macro_f1(predictions, golds)};
}

}  // namespace posbias::eval
