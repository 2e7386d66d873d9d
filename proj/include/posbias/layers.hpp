#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "posbias/common.hpp"
#include "posbias/tape.hpp"
#include "posbias/tensor.hpp"

namespace posbias::nn {

/// One LSTM direction bound onto a tape. Gate order in the stacked
/// parameters is input, forget, cell, output.
struct LstmVars {
  Var w_x;  // 4H x d
  Var w_h;  // 4H x H
  Var b;    // 4H
};

struct BiLstmVars {
  LstmVars fw;
  LstmVars bw;
};

inline std::size_t lstm_hidden_size(const Tape& tape, const LstmVars& p) {
  return tape.value(p.w_h).cols();
}

/// Runs one LSTM direction over the rows of x (n x d) and returns the n
/// per-position hidden states. Initial hidden and cell states are zero.
/// The input projection for all positions is batched into one matmul; only
/// the recurrence stays sequential.
inline std::vector<Var> lstm_states(Tape& tape, Var x, const LstmVars& p,
                                    bool reverse) {
  const Tensor& xv = tape.value(x);
  if (xv.rank() != 2 || xv.rows() == 0)
    throw std::invalid_argument("lstm_states: input must be a non-empty matrix");
  const std::size_t n = xv.rows();
  const std::size_t h = lstm_hidden_size(tape, p);
  if (tape.value(p.w_x).cols() != xv.cols() ||
      tape.value(p.w_x).rows() != 4 * h || tape.value(p.b).size() != 4 * h)
    throw std::invalid_argument("lstm_states: parameter shapes disagree with input");

  Var gates_in = tape.matmul(x, p.w_x, false, true);  // n x 4H

  Var h_prev = tape.constant(Tensor::zeros(h));
  Var c_prev = tape.constant(Tensor::zeros(h));
  std::vector<Var> states(n);
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t pos = reverse ? n - 1 - step : step;
    Var pre = tape.add(tape.row(gates_in, pos), tape.affine(p.w_h, h_prev, p.b));
    Var i = tape.sigmoid(tape.slice(pre, 0, h));
    Var f = tape.sigmoid(tape.slice(pre, h, h));
    Var g = tape.tanh(tape.slice(pre, 2 * h, h));
    Var o = tape.sigmoid(tape.slice(pre, 3 * h, h));
    Var c = tape.add(tape.mul(f, c_prev), tape.mul(i, g));
    Var hv = tape.mul(o, tape.tanh(c));
    states[pos] = hv;
    h_prev = hv;
    c_prev = c;
  }
  return states;
}

/// Bidirectional encoding: per-position concatenation of the two directions,
/// shape n x 2H.
inline Var bilstm_encode(Tape& tape, Var x, const BiLstmVars& p) {
  std::vector<Var> fw = lstm_states(tape, x, p.fw, false);
  std::vector<Var> bw = lstm_states(tape, x, p.bw, true);
  return tape.concat_cols(tape.stack_rows(fw), tape.stack_rows(bw));
}

/// Unscaled dot-product attention with the keys doubling as values:
/// weights = softmax(keys . query), context = sum_i weights_i keys_i.
struct Attention {
  Var weights;
  Var context;
};

inline Attention dot_attention(Tape& tape, Var query, Var keys,
                               const std::vector<bool>* mask = nullptr) {
  const Tensor& kv = tape.value(keys);
  const Tensor& qv = tape.value(query);
  if (kv.rank() != 2 || qv.rank() != 1 || kv.cols() != qv.size())
    throw std::invalid_argument("dot_attention: query/key dimensions disagree");
  Var scores = tape.matvec(keys, query);
  Var weights = tape.softmax(scores, mask);
  Var context = tape.matvec(keys, weights, /*ta=*/true);
  return {weights, context};
}

}  // namespace posbias::nn
