#pragma once

// Training (RMSprop over batch-mean gradients), the implicit-state evaluation
// protocol, and baseline-relative box-plot statistics.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "cntm/baselines.hpp"
#include "cntm/graphs.hpp"
#include "cntm/init.hpp"
#include "cntm/model.hpp"
#include "cntm/seed.hpp"

namespace cntm::harness {

using cntm::mix_seed;

// ---------------------------------------------------------------------------
// Optimizer

struct RmsProp {
  double learning_rate = 1e-3;
  double decay = 0.9;
  double epsilon = 1e-8;
  double clip = 10.0;  // elementwise gradient clip; infinity disables
};

// v <- rho v + (1 - rho) g^2 ; theta <- theta - lr g / (sqrt(v) + eps), on the
// clipped gradient held in each Param's grad slot.
inline void rmsprop_step(model::ParamStore& params, const RmsProp& opt) {
  for (const auto& p : params)
    for (double g : p.grad)
      if (!std::isfinite(g)) throw NumericalError("non-finite gradient in parameter '" + p.name + "'");
  for (auto& p : params) {
    if (!p.trainable) continue;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = std::clamp(p.grad[i], -opt.clip, opt.clip);
      p.rms[i] = opt.decay * p.rms[i] + (1.0 - opt.decay) * g * g;
      p.value[i] -= opt.learning_rate * g / (std::sqrt(p.rms[i]) + opt.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// Metrics

struct GraphMetrics {
  std::string graph_id;
  std::string predictor;
  std::size_t queries = 0;
  std::size_t valid_queries = 0;
  std::size_t episodes = 0;
  std::size_t valid_episodes = 0;
  double edge = 0.0;  // mean over episodes of the share of valid queries
  double path = 0.0;  // share of fully valid episodes

  double edge_accuracy() const { return edge; }
  double path_accuracy() const { return path; }
};

struct Metrics {
  std::string predictor;
  std::vector<GraphMetrics> graphs;
  std::vector<std::uint8_t> episode_valid;  // per evaluated episode
  std::vector<std::uint8_t> query_valid;    // per query
  std::vector<double> loss_curve;           // training only
  double wall_seconds = 0.0;

  // Means over graphs.
  double path_accuracy() const { return mean([](const GraphMetrics& g) { return g.path_accuracy(); }); }
  double edge_accuracy() const { return mean([](const GraphMetrics& g) { return g.edge_accuracy(); }); }

 private:
  template <class F>
  double mean(F f) const {
    if (graphs.empty()) return 0.0;
    double s = 0.0;
    for (const auto& g : graphs) s += f(g);
    return s / double(graphs.size());
  }
};

// ---------------------------------------------------------------------------
// Evaluation

struct EvalConfig {
  std::size_t walk_length = 10;
  std::size_t episodes_per_graph = 10;
  std::uint64_t seed = 1;
  graphs::Environment environment;
};

// For each graph and episode: description of the observed edges in a seeded
// order, one walk on the observed subgraph, first query (current, c), then
// (undefined, c) queries. A query is valid when (implicit current, c,
// prediction) is an edge of the complete graph; an episode is valid when all
// of its queries are. Walks and orders depend only on (seed, graph, episode),
// so every predictor sees identical episodes.
inline Metrics evaluate(baselines::Predictor& predictor, const std::vector<graphs::GraphRecord>& records,
                        const EvalConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  Metrics m;
  m.predictor = predictor.name();
  for (std::size_t gi = 0; gi < records.size(); ++gi) {
    const auto& rec = records[gi];
    const auto& g = rec.graph;
    const auto observed = graphs::observed_subgraph(g, rec.split);
    GraphMetrics gm{g.id, predictor.name()};
    for (std::size_t k = 0; k < cfg.episodes_per_graph; ++k) {
      std::mt19937_64 rng(mix_seed(cfg.seed, gi, k));
      const auto description = graphs::description_triples(g, rec.split, rng);
      const auto walk = graphs::sample_walk(observed, cfg.environment, cfg.walk_length, rng);
      if (walk.empty()) continue;
      predictor.describe(observed, description);
      std::optional<std::size_t> current = walk.front().node;
      bool path_ok = true;
      std::size_t ep_valid = 0;
      for (std::size_t t = 0; t < walk.size(); ++t) {
        const auto& c = g.conditions[walk[t].condition];
        const auto pred = predictor.query(t == 0 ? std::optional<std::string>(g.nodes[walk[t].node]) : std::nullopt, c);
        std::optional<std::size_t> pred_idx;
        if (pred) {
          auto it = std::find(g.nodes.begin(), g.nodes.end(), *pred);
          if (it != g.nodes.end()) pred_idx = static_cast<std::size_t>(it - g.nodes.begin());
        }
        const bool ok = current && pred_idx && g.transition(*current, walk[t].condition) == pred_idx;
        m.query_valid.push_back(ok);
        ++gm.queries;
        gm.valid_queries += ok;
        ep_valid += ok;
        path_ok = path_ok && ok;
        current = pred_idx;
      }
      m.episode_valid.push_back(path_ok);
      ++gm.episodes;
      gm.valid_episodes += path_ok;
      gm.edge += double(ep_valid) / double(walk.size());
    }
    if (gm.episodes) {
      gm.edge /= double(gm.episodes);
      gm.path = double(gm.valid_episodes) / double(gm.episodes);
    }
    m.graphs.push_back(gm);
  }
  m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return m;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  model::ModelConfig model;
  RmsProp optimizer;
  std::size_t batch_size = 128;
  std::size_t max_steps = 10000;  // absolute: a resumed run stops where an uninterrupted one would
  std::uint64_t seed = 1;
  std::size_t walk_length = 10;
  graphs::Environment environment;
  std::size_t threads = 1;
  // Early stopping on a held-back share of the graphs; eval_interval 0 disables it.
  std::size_t eval_interval = 0;
  std::size_t patience = 20;
  double validation_fraction = 0.1;
  std::size_t validation_episodes = 4;
  std::size_t log_interval = 0;
  std::function<void(std::size_t step, double loss)> on_log;
  // Called with the current parameters every checkpoint_interval steps.
  std::size_t checkpoint_interval = 0;
  std::function<void(std::size_t step, const model::ParamStore&)> on_checkpoint;
  // Checked on checkpoint steps; true ends training there.
  std::function<bool(std::size_t step, const model::ParamStore&)> stop_when;
  // Resume: parameters (with optimizer state) and the step they were saved at.
  std::optional<model::ParamStore> initial;
  std::size_t start_step = 0;
};

struct TrainResult {
  model::ParamStore params;
  Metrics metrics;
  std::size_t steps = 0;
  std::optional<double> best_validation;
};

inline std::size_t validation_count(std::size_t graphs, const TrainConfig& cfg) {
  if (cfg.eval_interval == 0 || graphs < 10) return 0;
  return static_cast<std::size_t>(std::lround(cfg.validation_fraction * double(graphs)));
}

// Loss and gradient of one episode, added into `grads`.
inline double episode_gradient(const model::ParamStore& params, const model::ModelConfig& mc,
                               const graphs::Episode& ep, const graphs::SymbolCodebook& cb,
                               std::vector<std::vector<double>>& grads) {
  ad::Tape tape;
  auto bound = model::bind(params, mc, true);
  auto loss = model::episode_loss(tape, ep, bound, mc, cb);
  tape.backward(loss);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!bound.leaves[i].has_grad()) continue;
    auto g = bound.leaves[i].grad();
    for (std::size_t k = 0; k < g.size(); ++k) grads[i][k] += g[k];
  }
  return loss.item();
}

// One training episode per batch slot; graph choice, description order and
// walk are fixed by (seed, step, slot). Gradients are summed in slot order,
// so results do not depend on the thread count.
inline TrainResult train(const TrainConfig& cfg, const graphs::Dataset& data) {
  if (data.records.empty()) throw DataError("train: dataset has no graphs");
  if (cfg.model.num_classes != data.codebook.num_classes())
    throw DataError("train: model has " + std::to_string(cfg.model.num_classes) + " classes, codebook " +
                    std::to_string(data.codebook.num_classes()));
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult res;
  res.params = cfg.initial ? *cfg.initial : model::init_params(cfg.model, mix_seed(cfg.seed, 0xC0FFEE));
  if (cfg.initial) {
    const auto want = model::param_layout(cfg.model);
    bool ok = want.size() == res.params.size();
    for (std::size_t i = 0; ok && i < want.size(); ++i) ok = want[i].name == res.params[i].name && want[i].shape == res.params[i].shape;
    if (!ok) throw DataError("train: initial parameters do not match the model config");
  }
  auto& params = res.params;

  const std::size_t n_val = validation_count(data.records.size(), cfg);
  const std::vector<graphs::GraphRecord> train_set(data.records.begin(), data.records.end() - std::ptrdiff_t(n_val));
  const std::vector<graphs::GraphRecord> val_set(data.records.end() - std::ptrdiff_t(n_val), data.records.end());

  auto fresh = [&] {
    std::vector<std::vector<double>> g(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) g[i].assign(params[i].value.size(), 0.0);
    return g;
  };

  const std::size_t B = cfg.batch_size;
  const std::size_t threads = std::max<std::size_t>(1, std::min(cfg.threads, B));
  std::optional<model::ParamStore> best;
  std::size_t since_best = 0;

  for (std::size_t step = cfg.start_step; step < cfg.max_steps; ++step) {
    std::vector<graphs::Episode> batch;
    batch.reserve(B);
    for (std::size_t b = 0; b < B; ++b) {
      std::mt19937_64 rng(mix_seed(cfg.seed, step + 1, b));
      const auto& rec = train_set[std::uniform_int_distribution<std::size_t>(0, train_set.size() - 1)(rng)];
      batch.push_back(graphs::build_episode(rec.graph, rec.split, cfg.environment, cfg.walk_length, rng));
    }
    std::vector<double> losses(B, 0.0);
    std::vector<std::vector<std::vector<double>>> slot_grads;
    if (threads == 1) {
      slot_grads.push_back(fresh());
      for (std::size_t b = 0; b < B; ++b)
        losses[b] = episode_gradient(params, cfg.model, batch[b], data.codebook, slot_grads[0]);
    } else {
      slot_grads.assign(B, fresh());
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < threads; ++w)
        pool.emplace_back([&, w] {
          for (std::size_t b = w; b < B; b += threads)
            losses[b] = episode_gradient(params, cfg.model, batch[b], data.codebook, slot_grads[b]);
        });
      for (auto& t : pool) t.join();
      for (std::size_t b = 1; b < B; ++b)
        for (std::size_t i = 0; i < params.size(); ++i)
          for (std::size_t k = 0; k < slot_grads[0][i].size(); ++k) slot_grads[0][i][k] += slot_grads[b][i][k];
    }
    double loss = 0.0;
    for (double l : losses) loss += l;
    loss /= double(B);
    if (!std::isfinite(loss))
      throw NumericalError("training diverged at step " + std::to_string(step) + " (loss " + std::to_string(loss) + ")");
    for (std::size_t i = 0; i < params.size(); ++i)
      for (std::size_t k = 0; k < params[i].grad.size(); ++k) params[i].grad[k] = slot_grads[0][i][k] / double(B);
    rmsprop_step(params, cfg.optimizer);
    res.metrics.loss_curve.push_back(loss);
    res.steps = step + 1;
    if (cfg.on_log && cfg.log_interval && (step + 1) % cfg.log_interval == 0) cfg.on_log(step + 1, loss);
    if (cfg.checkpoint_interval && (step + 1) % cfg.checkpoint_interval == 0) {
      if (cfg.on_checkpoint) cfg.on_checkpoint(step + 1, params);
      if (cfg.stop_when && cfg.stop_when(step + 1, params)) break;
    }

    if (n_val && (step + 1) % cfg.eval_interval == 0) {
      baselines::ModelPredictor pred("validation", params, cfg.model, data.codebook);
      EvalConfig ec;
      ec.walk_length = cfg.walk_length;
      ec.episodes_per_graph = cfg.validation_episodes;
      ec.seed = mix_seed(cfg.seed, 0xA11DA7E);
      ec.environment = cfg.environment;
      const double acc = evaluate(pred, val_set, ec).path_accuracy();
      if (!res.best_validation || acc > *res.best_validation) {
        res.best_validation = acc;
        best = params;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        break;
      }
    }
  }
  if (best) params = std::move(*best);
  res.metrics.predictor = cfg.model.use_memory ? "cntm" : "lstm";
  res.metrics.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

// ---------------------------------------------------------------------------
// Baseline-relative statistics

// Linear interpolation between closest ranks: position (n - 1) p of the sorted data.
inline double percentile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw UsageError("percentile of an empty sample");
  const double pos = p * double(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - double(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

struct BoxStats {
  std::string predictor;
  std::vector<double> differences;  // per graph, predictor minus baseline, graph order
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
  double whisker_low = 0, whisker_high = 0;  // furthest points within 1.5 IQR
  std::vector<double> outliers;
};

enum class Measure { path, edge };

inline BoxStats box_stats(std::string predictor, std::vector<double> diffs) {
  BoxStats s;
  s.predictor = std::move(predictor);
  s.differences = diffs;
  std::sort(diffs.begin(), diffs.end());
  s.min = diffs.front();
  s.max = diffs.back();
  s.q1 = percentile_sorted(diffs, 0.25);
  s.median = percentile_sorted(diffs, 0.5);
  s.q3 = percentile_sorted(diffs, 0.75);
  const double iqr = s.q3 - s.q1;
  const double lo = s.q1 - 1.5 * iqr, hi = s.q3 + 1.5 * iqr;
  s.whisker_low = s.max;
  s.whisker_high = s.min;
  for (double d : diffs) {
    if (d < lo || d > hi) {
      s.outliers.push_back(d);
    } else {
      s.whisker_low = std::min(s.whisker_low, d);
      s.whisker_high = std::max(s.whisker_high, d);
    }
  }
  return s;
}

// One BoxStats per predictor (the baseline included), sorted by predictor name.
inline std::vector<BoxStats> compare(const std::vector<Metrics>& runs, const std::string& baseline,
                                     Measure measure = Measure::path) {
  if (runs.size() < 2) throw UsageError("compare: need at least two predictors");
  std::map<std::string, const Metrics*> by_name;
  for (const auto& r : runs)
    if (!by_name.emplace(r.predictor, &r).second) throw UsageError("compare: predictor '" + r.predictor + "' listed twice");
  auto base_it = by_name.find(baseline);
  if (base_it == by_name.end()) {
    std::string names;
    for (const auto& [n, _] : by_name) names += (names.empty() ? "" : ", ") + n;
    throw UsageError("unknown baseline '" + baseline + "'; available: " + names);
  }
  const Metrics& base = *base_it->second;
  if (base.graphs.empty()) throw UsageError("compare: baseline has no graphs");
  auto value = [measure](const GraphMetrics& g) {
    return measure == Measure::path ? g.path_accuracy() : g.edge_accuracy();
  };
  std::vector<BoxStats> out;
  for (const auto& [name, run] : by_name) {
    if (run->graphs.size() != base.graphs.size())
      throw UsageError("compare: '" + name + "' was evaluated on a different graph set");
    std::vector<double> diffs;
    for (std::size_t i = 0; i < base.graphs.size(); ++i) {
      if (run->graphs[i].graph_id != base.graphs[i].graph_id)
        throw UsageError("compare: '" + name + "' was evaluated on a different graph set");
      diffs.push_back(value(run->graphs[i]) - value(base.graphs[i]));
    }
    out.push_back(box_stats(name, std::move(diffs)));
  }
  return out;
}

}  // namespace cntm::harness
