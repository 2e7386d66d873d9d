#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "posbias/corpus.hpp"
#include "posbias/models.hpp"
#include "posbias/trainer.hpp"

namespace posbias::explain {

/// Per-token scores normalized so the maximum is 1 (an all-zero vector stays
/// all zero). The aspect span is kept for rendering.
struct TokenScores {
  enum class Kind { Saliency, Attention };

  std::vector<std::string> tokens;
  std::vector<double> scores;
  Kind kind = Kind::Saliency;
  std::size_t aspect_start = 0;
  std::size_t aspect_len = 0;
};

namespace detail {

inline void max_normalize(std::vector<double>& scores) {
  double mx = 0.0;
  for (double s : scores) mx = std::max(mx, s);
  if (mx > 0.0)
    for (double& s : scores) s /= mx;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

}  // namespace detail

/// Euclidean norm of the gradient of the predicted-class logit with respect
/// to each token's input embedding, max-normalized. Dropout bias runs in
/// evaluation mode.
inline TokenScores saliency(const train::TrainedModel& model,
                            const corpus::EmbeddingTable& table,
                            const corpus::Instance& ins) {
  if (ins.tokens.empty())
    throw std::invalid_argument("saliency: zero-length instance");
  nn::Tape tape;
  models::BoundParams bound =
      models::bind_params(tape, model.params, /*trainable=*/false);
  const nn::Tensor v = train::instance_v(model, table, ins);
  models::InstanceGraph g =
      models::build_graph(tape, model.config, bound, v, ins.size(),
                          ins.aspect_start, ins.aspect_len,
                          /*training=*/false, nullptr);
  const models::ForwardTrace trace = models::extract_trace(tape, g.trace);
  const int predicted = models::argmax_class(trace.logits);
  tape.backward(tape.index(g.trace.logits, static_cast<std::size_t>(predicted)));

  TokenScores out;
  out.kind = TokenScores::Kind::Saliency;
  out.aspect_start = ins.aspect_start;
  out.aspect_len = ins.aspect_len;
  out.scores.assign(ins.size(), 0.0);
  for (const corpus::Token& t : ins.tokens) out.tokens.push_back(t.surface);
  if (const nn::Tensor* grad = tape.grad(g.input)) {
    const std::size_t d = grad->cols();
    for (std::size_t i = 0; i < ins.size(); ++i) {
      double ss = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double gij = (*grad)[i * d + j];
        ss += gij * gij;
      }
      out.scores[i] = std::sqrt(ss);
    }
  }
  detail::max_normalize(out.scores);
  return out;
}

/// Max-normalized copy of one named attention record from a forward trace.
inline TokenScores attention_scores(const models::ForwardTrace& trace,
                                    const std::string& record_name,
                                    const std::vector<std::string>& tokens,
                                    std::size_t aspect_start = 0,
                                    std::size_t aspect_len = 0) {
  for (const auto& [name, weights] : trace.attention_records) {
    if (name != record_name) continue;
    TokenScores out;
    out.kind = TokenScores::Kind::Attention;
    out.tokens = tokens;
    out.scores = weights;
    out.aspect_start = aspect_start;
    out.aspect_len = aspect_len;
    detail::max_normalize(out.scores);
    return out;
  }
  std::string known;
  for (const auto& [name, weights] : trace.attention_records)
    known += (known.empty() ? "" : ", ") + name;
  throw std::invalid_argument("attention_scores: no record '" + record_name +
                              "' (have: " + known + ")");
}

// ---- rendering ------------------------------------------------------------

/// One shaded cell per token; background opacity tracks the score and aspect
/// tokens are underlined. Writes SVG, or an HTML fragment when `html` is set.
inline void render_heatmap(const TokenScores& scores, const std::string& out_path,
                           bool html = false) {
  if (scores.tokens.size() != scores.scores.size())
    throw std::invalid_argument("render_heatmap: token/score length mismatch");
  if (scores.tokens.empty())
    throw std::invalid_argument("render_heatmap: nothing to render");

  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path);

  auto is_aspect = [&scores](std::size_t i) {
    return i >= scores.aspect_start && i < scores.aspect_start + scores.aspect_len;
  };

  if (html) {
    out << "<div class=\"token-heatmap\">";
    for (std::size_t i = 0; i < scores.tokens.size(); ++i) {
      out << "<span style=\"background-color: rgba(255,140,0,"
          << detail::fmt("%.4f", scores.scores[i]) << ");"
          << (is_aspect(i) ? " text-decoration: underline;" : "")
          << " padding: 2px 4px;\">" << detail::xml_escape(scores.tokens[i])
          << "</span> ";
    }
    out << "</div>\n";
    return;
  }

  constexpr double kCharWidth = 9.0;
  constexpr double kPad = 8.0;
  constexpr double kCellHeight = 34.0;
  std::vector<double> widths(scores.tokens.size());
  double total = kPad;
  for (std::size_t i = 0; i < scores.tokens.size(); ++i) {
    widths[i] =
        kCharWidth * static_cast<double>(
                         corpus::codepoint_length(scores.tokens[i])) +
        2.0 * kPad;
    total += widths[i] + 4.0;
  }

  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\""
      << detail::fmt("%.0f", total + kPad) << "\" height=\""
      << detail::fmt("%.0f", kCellHeight + 16.0) << "\">\n";
  double x = kPad;
  for (std::size_t i = 0; i < scores.tokens.size(); ++i) {
    out << "  <rect x=\"" << detail::fmt("%.1f", x) << "\" y=\"8\" width=\""
        << detail::fmt("%.1f", widths[i]) << "\" height=\""
        << detail::fmt("%.1f", kCellHeight)
        << "\" fill=\"rgb(255,140,0)\" fill-opacity=\""
        << detail::fmt("%.4f", scores.scores[i]) << "\" stroke=\"#cccccc\"/>\n";
    out << "  <text x=\"" << detail::fmt("%.1f", x + widths[i] / 2.0)
        << "\" y=\"" << detail::fmt("%.1f", 8.0 + kCellHeight / 2.0 + 4.0)
        << "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"13\""
        << (is_aspect(i) ? " text-decoration=\"underline\"" : "") << ">"
        << detail::xml_escape(scores.tokens[i]) << "</text>\n";
    x += widths[i] + 4.0;
  }
  out << "</svg>\n";
  if (!out) throw std::runtime_error("write failed: " + out_path);
}

struct KdeSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (x, density)
};

/// Density curves over a shared grid: one polyline per labeled series, with
/// axes and a legend. Each series' x values must be strictly increasing.
inline void render_kde(const std::vector<KdeSeries>& series,
                       const std::string& out_path) {
  if (series.empty()) throw std::invalid_argument("render_kde: no series");
  for (const KdeSeries& s : series) {
    if (s.points.size() < 2)
      throw std::invalid_argument("render_kde: series '" + s.label +
                                  "' needs at least 2 points");
    for (std::size_t i = 1; i < s.points.size(); ++i)
      if (s.points[i].first <= s.points[i - 1].first)
        throw std::invalid_argument("render_kde: series '" + s.label +
                                    "' grid is not strictly increasing");
  }

  double xmin = series[0].points.front().first;
  double xmax = series[0].points.back().first;
  double ymax = 0.0;
  for (const KdeSeries& s : series) {
    xmin = std::min(xmin, s.points.front().first);
    xmax = std::max(xmax, s.points.back().first);
    for (const auto& [px, py] : s.points) ymax = std::max(ymax, py);
  }
  if (ymax <= 0.0) ymax = 1.0;

  constexpr double kW = 640.0, kH = 400.0;
  constexpr double kLeft = 60.0, kRight = 20.0, kTop = 20.0, kBottom = 44.0;
  const double plot_w = kW - kLeft - kRight;
  const double plot_h = kH - kTop - kBottom;
  auto sx = [&](double v) {
    return kLeft + (v - xmin) / (xmax - xmin) * plot_w;
  };
  auto sy = [&](double v) { return kTop + (1.0 - v / (ymax * 1.05)) * plot_h; };

  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                   "#9467bd", "#8c564b"};

  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\">\n"
      << "  <rect x=\"0\" y=\"0\" width=\"640\" height=\"400\" fill=\"white\"/>\n";

  // axes with a few ticks
  out << "  <line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\""
      << kLeft + plot_w << "\" y2=\"" << kTop + plot_h
      << "\" stroke=\"black\"/>\n"
      << "  <line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
      << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double fx = xmin + (xmax - xmin) * t / 5.0;
    const double fy = ymax * 1.05 * t / 5.0;
    out << "  <text x=\"" << detail::fmt("%.1f", sx(fx)) << "\" y=\""
        << detail::fmt("%.1f", kTop + plot_h + 18.0)
        << "\" text-anchor=\"middle\" font-size=\"11\">"
        << detail::fmt("%.2f", fx) << "</text>\n";
    out << "  <text x=\"" << detail::fmt("%.1f", kLeft - 8.0) << "\" y=\""
        << detail::fmt("%.1f", sy(fy) + 4.0)
        << "\" text-anchor=\"end\" font-size=\"11\">" << detail::fmt("%.2f", fy)
        << "</text>\n";
  }

  for (std::size_t si = 0; si < series.size(); ++si) {
    const char* color = kPalette[si % 6];
    out << "  <polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [px, py] : series[si].points)
      out << detail::fmt("%.2f", sx(px)) << ',' << detail::fmt("%.2f", sy(py))
          << ' ';
    out << "\"/>\n";
    const double ly = kTop + 16.0 + 18.0 * static_cast<double>(si);
    out << "  <line x1=\"" << kLeft + plot_w - 150.0 << "\" y1=\"" << ly
        << "\" x2=\"" << kLeft + plot_w - 126.0 << "\" y2=\"" << ly
        << "\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
    out << "  <text x=\"" << kLeft + plot_w - 120.0 << "\" y=\"" << ly + 4.0
        << "\" font-size=\"12\">" << detail::xml_escape(series[si].label)
        << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw std::runtime_error("write failed: " + out_path);
}

}  // namespace posbias::explain
