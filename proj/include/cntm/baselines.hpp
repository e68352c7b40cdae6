#pragma once

// Link predictors evaluated by the harness: the trained model (CNTM or its
// memory-less LSTM ablation), a uniform random guesser and a shortest-path
// proximity ranker.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cntm/graphs.hpp"
#include "cntm/model.hpp"

namespace cntm::baselines {

// describe() starts an episode with the observed structure; query() is then
// called once per answer step. Only the first query names the current node:
// afterwards a predictor carries its own previous answer as the current state.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::string name() const = 0;
  virtual void describe(const graphs::ConditionalGraph& observed, std::span<const graphs::Triple> description) = 0;
  virtual std::optional<std::string> query(const std::optional<std::string>& current, const std::string& condition) = 0;
};

class RandomPredictor final : public Predictor {
 public:
  explicit RandomPredictor(std::uint64_t seed) : rng_(seed) {}

  std::string name() const override { return "random"; }

  void describe(const graphs::ConditionalGraph& observed, std::span<const graphs::Triple>) override {
    nodes_ = observed.nodes;
  }

  std::optional<std::string> query(const std::optional<std::string>&, const std::string&) override {
    return draw();
  }

  std::string draw() {
    if (nodes_.empty()) throw UsageError("random predictor: describe() must run before query()");
    return nodes_[std::uniform_int_distribution<std::size_t>(0, nodes_.size() - 1)(rng_)];
  }

  void set_universe(std::vector<std::string> nodes) { nodes_ = std::move(nodes); }

 private:
  std::mt19937_64 rng_;
  std::vector<std::string> nodes_;
};

// Ranks candidates by negated directed shortest-path distance (unit weights,
// conditions ignored) from the current node in the observed graph. The current
// node and nodes that already link into it are not candidates. Unreachable
// candidates score -inf; ties go to the lowest node index. Without a usable
// current node it falls back to a random guess.
class GraphDistancePredictor final : public Predictor {
 public:
  explicit GraphDistancePredictor(std::uint64_t seed) : fallback_(seed) {}

  std::string name() const override { return "graph_distance"; }

  void describe(const graphs::ConditionalGraph& observed, std::span<const graphs::Triple> description) override {
    graph_ = observed;
    fallback_.describe(observed, description);
    last_.reset();
  }

  std::optional<std::string> query(const std::optional<std::string>& current, const std::string& condition) override {
    const auto& cur = current ? current : last_;
    last_ = rank(cur, condition);
    return last_;
  }

  // Stateless scoring; exposed for tests.
  std::string rank(const std::optional<std::string>& current, const std::string&) {
    const auto n = graph_.nodes.size();
    auto it = current ? std::find(graph_.nodes.begin(), graph_.nodes.end(), *current) : graph_.nodes.end();
    if (it == graph_.nodes.end()) return fallback_.draw();
    const auto src = static_cast<std::size_t>(it - graph_.nodes.begin());
    constexpr auto inf = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> dist(n, inf);
    std::vector<std::vector<std::size_t>> adj(n);
    std::vector<bool> links_in(n, false);
    for (const auto& e : graph_.edges) {
      adj[e.source].push_back(e.target);
      if (e.target == src) links_in[e.source] = true;
    }
    std::queue<std::size_t> q;
    dist[src] = 0;
    q.push(src);
    while (!q.empty()) {
      const auto u = q.front();
      q.pop();
      for (auto v : adj[u])
        if (dist[v] == inf) {
          dist[v] = dist[u] + 1;
          q.push(v);
        }
    }
    std::optional<std::size_t> best;
    for (std::size_t v = 0; v < n; ++v) {
      if (v == src || links_in[v]) continue;
      if (!best || dist[v] < dist[*best]) best = v;
    }
    if (!best) return fallback_.draw();
    return graph_.nodes[*best];
  }

 private:
  graphs::ConditionalGraph graph_;
  RandomPredictor fallback_;
  std::optional<std::string> last_;
};

// A trained CNTM or LSTM baseline; the recurrent state carries the implicit
// current node between queries.
class ModelPredictor final : public Predictor {
 public:
  ModelPredictor(std::string name, const model::ParamStore& params, model::ModelConfig config,
                 graphs::SymbolCodebook codebook)
      : name_(std::move(name)),
        config_(config),
        codebook_(std::move(codebook)),
        bound_(model::bind(params, config_, false)) {}

  std::string name() const override { return name_; }

  void describe(const graphs::ConditionalGraph&, std::span<const graphs::Triple> description) override {
    ad::Tape tape;
    state_ = model::initial_state(tape, bound_, config_);
    for (const auto& t : description) {
      auto res = model::step(tape, ad::Tensor::vector(model::encode_context(t, codebook_)), state_, bound_, config_);
      state_ = std::move(res.state);
    }
  }

  std::optional<std::string> query(const std::optional<std::string>& current, const std::string& condition) override {
    ad::Tape tape;
    return model::predict_transition(tape, current, condition, state_, bound_, config_, codebook_);
  }

 private:
  std::string name_;
  model::ModelConfig config_;
  graphs::SymbolCodebook codebook_;
  model::BoundParams bound_;
  model::StepState state_;
};

// The LSTM baseline is the same architecture with the memory block removed.
inline model::ModelConfig lstm_baseline_config(model::ModelConfig cntm) {
  cntm.use_memory = false;
  return cntm;
}

}  // namespace cntm::baselines
