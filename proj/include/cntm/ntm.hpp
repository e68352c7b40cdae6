#pragma once

// NTM memory block: one read head, one write head, content addressing
// followed by interpolation, circular shift and sharpening.

#include <cstddef>
#include <optional>
#include <utility>

#include "cntm/autodiff.hpp"

namespace cntm::ntm {

using ad::Tape;
using ad::Tensor;

struct Linear {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]
};

inline Tensor linear(Tape& tape, const Linear& layer, const Tensor& x) {
  return ad::add(tape, ad::matmul(tape, layer.weight, x), layer.bias);
}

struct HeadParams {
  Tensor key;    // [m], linear
  Tensor beta;   // scalar, relu
  Tensor gate;   // scalar, sigmoid
  Tensor shift;  // [shift_width], softmax
  Tensor gamma;  // scalar, oneplus
  Tensor erase;  // [m], sigmoid; write head only
  Tensor add;    // [m], linear; write head only
};

struct HeadProjections {
  Linear key, beta, gate, shift, gamma;
  std::optional<Linear> erase, add;
};

inline HeadParams project_head(Tape& tape, const HeadProjections& p, const Tensor& h) {
  HeadParams out;
  out.key = linear(tape, p.key, h);
  out.beta = ad::relu(tape, linear(tape, p.beta, h));
  out.gate = ad::sigmoid(tape, linear(tape, p.gate, h));
  out.shift = ad::softmax(tape, linear(tape, p.shift, h));
  out.gamma = ad::oneplus(tape, linear(tape, p.gamma, h));
  if (p.erase) out.erase = ad::sigmoid(tape, linear(tape, *p.erase, h));
  if (p.add) out.add = linear(tape, *p.add, h);
  return out;
}

// Returns (read head, write head).
inline std::pair<HeadParams, HeadParams> head_params_from_controller(Tape& tape, const Tensor& h,
                                                                     const HeadProjections& read,
                                                                     const HeadProjections& write) {
  return {project_head(tape, read, h), project_head(tape, write, h)};
}

struct MemoryState {
  Tensor memory;   // [n x m]
  Tensor w_read;   // [n]
  Tensor w_write;  // [n]
  Tensor r_prev;   // [m]
};

// softmax_i(beta * cos(k, M_i))
inline Tensor content_address(Tape& tape, const Tensor& memory, const Tensor& key, const Tensor& beta) {
  Tensor sim = ad::cosine_similarity_rows(tape, memory, key);
  return ad::softmax(tape, ad::mul(tape, beta, sim));
}

inline Tensor interpolate(Tape& tape, const Tensor& w_content, const Tensor& w_prev, const Tensor& gate) {
  return ad::add(tape, ad::mul(tape, gate, w_content), ad::mul(tape, ad::one_minus(tape, gate), w_prev));
}

inline Tensor address(Tape& tape, const Tensor& memory, const Tensor& w_prev, const HeadParams& head) {
  Tensor wc = content_address(tape, memory, head.key, head.beta);
  Tensor wg = interpolate(tape, wc, w_prev, head.gate);
  Tensor ws = ad::circular_convolve(tape, wg, head.shift);
  return ad::pow_normalize(tape, ws, head.gamma);
}

// r = M^T w
inline Tensor read(Tape& tape, const Tensor& memory, const Tensor& w_read) {
  return ad::matmul(tape, ad::transpose(tape, memory), w_read);
}

// M' = M o (1 - w e^T) + w a^T
inline Tensor write(Tape& tape, const Tensor& memory, const Tensor& w_write, const Tensor& erase,
                    const Tensor& add) {
  Tensor keep = ad::one_minus(tape, ad::outer(tape, w_write, erase));
  return ad::add(tape, ad::mul(tape, memory, keep), ad::outer(tape, w_write, add));
}

}  // namespace cntm::ntm
