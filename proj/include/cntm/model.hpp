#pragma once

// Conditional NTM: the context triple and the previous read vector feed a
// feed-forward controller; its hidden vector drives one write and one read
// head; h and the read vector are combined linearly into U, and an LSTM with
// a softmax layer turns the U sequence into next-node distributions.
//
// With use_memory = false the same pipeline runs without the memory block
// (U = W1 h + b), which is the LSTM baseline.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "cntm/autodiff.hpp"
#include "cntm/codebook.hpp"
#include "cntm/graphs.hpp"
#include "cntm/init.hpp"
#include "cntm/ntm.hpp"

namespace cntm::model {

using ad::Shape;
using ad::Tape;
using ad::Tensor;

struct ModelConfig {
  std::size_t code_bits = graphs::kCodeBits;
  std::size_t controller_width = 128;
  std::size_t head_width = 256;  // LSTM output head
  std::size_t u_width = 128;
  std::size_t memory_rows = 128;
  std::size_t memory_width = 128;
  std::size_t shift_width = 3;
  std::size_t num_classes = 0;  // |Q| + 1
  bool use_memory = true;
  bool train_memory_init = true;
  double beta_bias_init = 0.0;  // initial key-strength bias of both heads

  std::size_t input_width() const { return 3 * code_bits; }

  // Widths used by the gradient checks and the memorization run.
  static ModelConfig tiny(std::size_t num_classes) {
    ModelConfig c;
    c.controller_width = 16;
    c.head_width = 16;
    c.u_width = 16;
    c.memory_rows = 8;
    c.memory_width = 8;
    c.num_classes = num_classes;
    return c;
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// ---------------------------------------------------------------------------
// Parameters

struct Param {
  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> rms;  // optimizer state
  bool trainable = true;
  bool xavier = true;  // false: zero-initialized bias
};

class ParamStore {
 public:
  Param& add(std::string name, Shape shape, bool xavier) {
    Param p;
    p.name = std::move(name);
    p.value.assign(ad::numel(shape), 0.0);
    p.grad.assign(p.value.size(), 0.0);
    p.rms.assign(p.value.size(), 0.0);
    p.shape = std::move(shape);
    p.xavier = xavier;
    index_[p.name] = params_.size();
    params_.push_back(std::move(p));
    return params_.back();
  }

  std::size_t size() const noexcept { return params_.size(); }
  Param& operator[](std::size_t i) { return params_[i]; }
  const Param& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw LookupError("no parameter named '" + name + "'");
    return it->second;
  }
  Param& at(const std::string& name) { return params_[index(name)]; }
  const Param& at(const std::string& name) const { return params_[index(name)]; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
  }

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

inline void add_linear(ParamStore& s, const std::string& name, std::size_t out, std::size_t in) {
  s.add(name + ".weight", {out, in}, true);
  s.add(name + ".bias", {out}, false);
}

inline void add_head(ParamStore& s, const std::string& name, const ModelConfig& c, bool write) {
  add_linear(s, name + ".key", c.memory_width, c.controller_width);
  add_linear(s, name + ".beta", 1, c.controller_width);
  add_linear(s, name + ".gate", 1, c.controller_width);
  add_linear(s, name + ".shift", c.shift_width, c.controller_width);
  add_linear(s, name + ".gamma", 1, c.controller_width);
  if (write) {
    add_linear(s, name + ".erase", c.memory_width, c.controller_width);
    add_linear(s, name + ".add", c.memory_width, c.controller_width);
  }
}

}  // namespace detail

// Shapes for `config`, all zero. See init_params() for Xavier values.
inline ParamStore param_layout(const ModelConfig& c) {
  if (c.num_classes < 2) throw UsageError("model config needs num_classes >= 2");
  ParamStore s;
  const std::size_t ctrl_in = c.input_width() + (c.use_memory ? c.memory_width : 0);
  detail::add_linear(s, "controller", c.controller_width, ctrl_in);
  if (c.use_memory) {
    detail::add_head(s, "read", c, false);
    detail::add_head(s, "write", c, true);
    s.add("memory.init", {c.memory_rows, c.memory_width}, true).trainable = c.train_memory_init;
  }
  s.add("output.h.weight", {c.u_width, c.controller_width}, true);  // W1
  if (c.use_memory) s.add("output.r.weight", {c.u_width, c.memory_width}, true);  // W2
  s.add("output.bias", {c.u_width}, false);  // b
  s.add("lstm.input.weight", {4 * c.head_width, c.u_width}, true);
  s.add("lstm.hidden.weight", {4 * c.head_width, c.head_width}, true);
  s.add("lstm.bias", {4 * c.head_width}, false);
  detail::add_linear(s, "softmax", c.num_classes, c.head_width);
  return s;
}

// Xavier for every weight matrix and the memory, zeros for biases.
inline ParamStore init_params(const ModelConfig& c, std::uint64_t seed) {
  ParamStore s = param_layout(c);
  std::mt19937_64 rng(seed);
  for (auto& p : s)
    if (p.xavier) p.value = xavier_values(p.shape, rng);
  if (c.use_memory)
    for (const char* head : {"read", "write"})
      s.at(std::string(head) + ".beta.bias").value.assign(1, c.beta_bias_init);
  return s;
}

// Per-evaluation leaf tensors over a ParamStore.
struct BoundParams {
  std::vector<Tensor> leaves;  // ParamStore order
  ntm::Linear controller;
  ntm::HeadProjections read, write;
  Tensor memory_init;
  Tensor w1, w2, u_bias;
  Tensor lstm_input, lstm_hidden, lstm_bias;
  ntm::Linear softmax;
};

inline BoundParams bind(const ParamStore& store, const ModelConfig& c, bool requires_grad) {
  BoundParams b;
  std::unordered_map<std::string, Tensor> by_name;
  for (const auto& p : store) {
    Tensor t(p.shape, p.value, requires_grad && p.trainable);
    b.leaves.push_back(t);
    by_name.emplace(p.name, t);
  }
  auto get = [&](const std::string& n) {
    auto it = by_name.find(n);
    if (it == by_name.end()) throw LookupError("parameter '" + n + "' missing for this model config");
    return it->second;
  };
  auto lin = [&](const std::string& n) { return ntm::Linear{get(n + ".weight"), get(n + ".bias")}; };
  auto head = [&](const std::string& n, bool write) {
    ntm::HeadProjections h{lin(n + ".key"), lin(n + ".beta"), lin(n + ".gate"), lin(n + ".shift"),
                           lin(n + ".gamma"), std::nullopt, std::nullopt};
    if (write) {
      h.erase = lin(n + ".erase");
      h.add = lin(n + ".add");
    }
    return h;
  };
  b.controller = lin("controller");
  if (c.use_memory) {
    b.read = head("read", false);
    b.write = head("write", true);
    b.memory_init = get("memory.init");
    b.w2 = get("output.r.weight");
  }
  b.w1 = get("output.h.weight");
  b.u_bias = get("output.bias");
  b.lstm_input = get("lstm.input.weight");
  b.lstm_hidden = get("lstm.hidden.weight");
  b.lstm_bias = get("lstm.bias");
  b.softmax = lin("softmax");
  return b;
}

// Adds the bound leaves' gradients into the store's grad slots.
inline void accumulate_grads(ParamStore& store, const BoundParams& b) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!b.leaves[i].has_grad()) continue;
    auto g = b.leaves[i].grad();
    auto& dst = store[i].grad;
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += g[k];
  }
}

// ---------------------------------------------------------------------------
// Context encoding

// Bits of a 30-bit code, least significant first.
inline void append_code(std::vector<double>& out, graphs::Code code, std::size_t bits) {
  for (std::size_t i = 0; i < bits; ++i) out.push_back(static_cast<double>((code >> i) & 1u));
}

// [code(node), code(condition), code(target)]; absent slots are zero.
inline std::vector<double> encode_context(const graphs::Triple& t, const graphs::SymbolCodebook& cb) {
  std::vector<double> v;
  v.reserve(3 * graphs::kCodeBits);
  for (const auto* slot : {&t.node, &t.condition, &t.target})
    append_code(v, *slot ? cb.code(**slot) : 0u, graphs::kCodeBits);
  return v;
}

inline graphs::Triple decode_context(std::span<const double> v, const graphs::SymbolCodebook& cb) {
  if (v.size() != 3 * graphs::kCodeBits) throw DimensionError("decode_context: expected 90 values");
  graphs::Triple t;
  std::optional<std::string>* slots[] = {&t.node, &t.condition, &t.target};
  for (std::size_t s = 0; s < 3; ++s) {
    graphs::Code code = 0;
    for (std::size_t i = 0; i < graphs::kCodeBits; ++i)
      if (v[s * graphs::kCodeBits + i] != 0.0) code |= graphs::Code{1} << i;
    if (code != 0) {
      *slots[s] = cb.decode(code);
      if (!*slots[s]) throw LookupError("decode_context: code " + std::to_string(code) + " not in codebook");
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Forward pass

struct StepState {
  ntm::MemoryState memory;
  Tensor lstm_h;
  Tensor lstm_c;
};

inline StepState initial_state(Tape& tape, const BoundParams& b, const ModelConfig& c) {
  StepState s;
  if (c.use_memory) {
    std::vector<double> onehot(c.memory_rows, 0.0);
    onehot[0] = 1.0;
    s.memory.memory = b.memory_init;
    s.memory.w_read = Tensor::vector(onehot);
    s.memory.w_write = Tensor::vector(onehot);
    s.memory.r_prev = ntm::read(tape, s.memory.memory, s.memory.w_read);
  }
  s.lstm_h = Tensor::zeros({c.head_width});
  s.lstm_c = Tensor::zeros({c.head_width});
  return s;
}

// h = tanh(W [v; r_prev] + b); r_prev is ignored without memory.
inline Tensor controller_forward(Tape& tape, const Tensor& v, const Tensor& r_prev, const BoundParams& b,
                                 const ModelConfig& c) {
  Tensor in = c.use_memory ? ad::concat(tape, {v, r_prev}) : v;
  return ad::tanh(tape, ntm::linear(tape, b.controller, in));
}

// U = W1 h + W2 r + b, linear.
inline Tensor ntm_output(Tape& tape, const Tensor& h, const Tensor& r, const BoundParams& b,
                         const ModelConfig& c) {
  Tensor u = ad::matmul(tape, b.w1, h);
  if (c.use_memory) u = ad::add(tape, u, ad::matmul(tape, b.w2, r));
  return ad::add(tape, u, b.u_bias);
}

struct HeadOutput {
  Tensor logits;
  Tensor probs;
  Tensor h;
  Tensor c;
};

inline HeadOutput output_head_forward(Tape& tape, const Tensor& u, const Tensor& h_prev, const Tensor& c_prev,
                                      const BoundParams& b, const ModelConfig& c) {
  const std::size_t H = c.head_width;
  Tensor z = ad::add(tape, ad::add(tape, ad::matmul(tape, b.lstm_input, u), ad::matmul(tape, b.lstm_hidden, h_prev)),
                     b.lstm_bias);
  Tensor i = ad::sigmoid(tape, ad::slice(tape, z, 0, H));
  Tensor f = ad::sigmoid(tape, ad::slice(tape, z, H, H));
  Tensor g = ad::tanh(tape, ad::slice(tape, z, 2 * H, H));
  Tensor o = ad::sigmoid(tape, ad::slice(tape, z, 3 * H, H));
  HeadOutput out;
  out.c = ad::add(tape, ad::mul(tape, f, c_prev), ad::mul(tape, i, g));
  out.h = ad::mul(tape, o, ad::tanh(tape, out.c));
  out.logits = ntm::linear(tape, b.softmax, out.h);
  out.probs = ad::softmax(tape, out.logits);
  return out;
}

struct StepResult {
  Tensor logits;
  Tensor probs;
  StepState state;
};

// controller -> head params -> write -> address + read -> U -> LSTM softmax.
inline StepResult step(Tape& tape, const Tensor& v, const StepState& state, const BoundParams& b,
                       const ModelConfig& c) {
  StepResult res;
  Tensor h = controller_forward(tape, v, state.memory.r_prev, b, c);
  Tensor r;
  if (c.use_memory) {
    auto [rh, wh] = ntm::head_params_from_controller(tape, h, b.read, b.write);
    const auto& m = state.memory;
    Tensor w_write = ntm::address(tape, m.memory, m.w_write, wh);
    Tensor memory = ntm::write(tape, m.memory, w_write, wh.erase, wh.add);
    Tensor w_read = ntm::address(tape, memory, m.w_read, rh);
    r = ntm::read(tape, memory, w_read);
    res.state.memory = {memory, w_read, w_write, r};
  }
  Tensor u = ntm_output(tape, h, r, b, c);
  auto head = output_head_forward(tape, u, state.lstm_h, state.lstm_c, b, c);
  res.logits = head.logits;
  res.probs = head.probs;
  res.state.lstm_h = head.h;
  res.state.lstm_c = head.c;
  return res;
}

// -sum_t A(t) log P(y_t | v_1..v_t).
inline Tensor episode_loss(Tape& tape, const graphs::Episode& ep, const BoundParams& b, const ModelConfig& c,
                           const graphs::SymbolCodebook& cb) {
  if (ep.targets.size() != ep.inputs.size() || ep.mask.size() != ep.inputs.size())
    throw DataError("episode: inputs, targets and mask lengths differ");
  if (cb.num_classes() != c.num_classes)
    throw DataError("episode_loss: codebook has " + std::to_string(cb.num_classes()) + " classes, model " +
                    std::to_string(c.num_classes));
  StepState state = initial_state(tape, b, c);
  Tensor loss = Tensor::scalar(0.0);
  for (std::size_t t = 0; t < ep.inputs.size(); ++t) {
    auto res = step(tape, Tensor::vector(encode_context(ep.inputs[t], cb)), state, b, c);
    state = std::move(res.state);
    if (!ep.mask[t]) continue;
    if (!ep.targets[t]) throw DataError("episode: answer step " + std::to_string(t) + " has no target");
    const auto cls = cb.node_index(*ep.targets[t]);
    if (cls >= c.num_classes) throw DataError("episode: target class " + std::to_string(cls) + " out of range");
    loss = ad::sub(tape, loss, ad::pick(tape, ad::log_softmax(tape, res.logits), cls));
  }
  return loss;
}

// Lowest index wins ties.
inline std::size_t argmax(std::span<const double> p) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[best]) best = i;
  return best;
}

// Runs one (current?, condition, undefined) step. Returns the predicted node,
// or nullopt when the undefined class wins.
inline std::optional<std::string> predict_transition(Tape& tape, const std::optional<std::string>& current,
                                                     const std::string& condition, StepState& state,
                                                     const BoundParams& b, const ModelConfig& c,
                                                     const graphs::SymbolCodebook& cb) {
  graphs::Triple q{current, condition, std::nullopt};
  auto res = step(tape, Tensor::vector(encode_context(q, cb)), state, b, c);
  state = std::move(res.state);
  const auto cls = argmax(res.probs.values());
  if (cls == cb.undefined_class()) return std::nullopt;
  return cb.nodes()[cls];
}

}  // namespace cntm::model
