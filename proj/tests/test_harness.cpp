#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "cntm/harness.hpp"
#include "support.hpp"

using namespace cntm;
using namespace cntm::harness;

namespace {

// Knows the complete graph and tracks the true current node.
class Oracle final : public baselines::Predictor {
 public:
  explicit Oracle(const std::vector<graphs::GraphRecord>& recs) : recs_(recs) {}
  std::string name() const override { return "oracle"; }
  void describe(const graphs::ConditionalGraph& observed, std::span<const graphs::Triple>) override {
    for (const auto& r : recs_)
      if (r.graph.id == observed.id) g_ = &r.graph;
  }
  std::optional<std::string> query(const std::optional<std::string>& current, const std::string& condition) override {
    if (current) at_ = g_->node_index(*current);
    at_ = *g_->transition(at_, g_->condition_index(condition));
    return g_->nodes[at_];
  }

 private:
  const std::vector<graphs::GraphRecord>& recs_;
  const graphs::ConditionalGraph* g_ = nullptr;
  std::size_t at_ = 0;
};

// Always names one fixed node.
class Constant final : public baselines::Predictor {
 public:
  Constant(std::string name, std::string node) : name_(std::move(name)), node_(std::move(node)) {}
  std::string name() const override { return name_; }
  void describe(const graphs::ConditionalGraph&, std::span<const graphs::Triple>) override {}
  std::optional<std::string> query(const std::optional<std::string>&, const std::string&) override { return node_; }

 private:
  std::string name_, node_;
};

model::ModelConfig tiny_model(std::size_t classes) {
  model::ModelConfig c;
  c.controller_width = 8;
  c.head_width = 8;
  c.u_width = 6;
  c.memory_rows = 6;
  c.memory_width = 4;
  c.num_classes = classes;
  return c;
}

model::ParamStore single(std::vector<double> value, std::vector<double> grad) {
  model::ParamStore s;
  auto& p = s.add("theta", {value.size()}, true);
  p.value = std::move(value);
  p.grad = std::move(grad);
  return s;
}

std::vector<double> flat(const model::ParamStore& s) {
  std::vector<double> out;
  for (const auto& p : s) out.insert(out.end(), p.value.begin(), p.value.end());
  return out;
}

}  // namespace

TEST(Xavier, BoundVarianceAndDeterminism) {
  const double bound = std::sqrt(6.0 / 200.0);
  EXPECT_DOUBLE_EQ(xavier_bound({100, 100}), bound);
  auto t = xavier_init({100, 100}, 4);
  for (double v : t.values()) ASSERT_LE(std::abs(v), bound);
  EXPECT_EQ(xavier_init({100, 100}, 4).values()[17], t.values()[17]);

  std::mt19937_64 rng(5);
  auto big = xavier_values({1000, 1000}, rng);
  double mean = 0, var = 0;
  for (double v : big) mean += v;
  mean /= double(big.size());
  for (double v : big) var += (v - mean) * (v - mean);
  var /= double(big.size() - 1);
  const double expect = 2.0 / 2000.0;
  EXPECT_LT(std::abs(var - expect) / expect, 0.10);
  EXPECT_THROW(xavier_values({}, rng), DimensionError);
}

TEST(RmsPropStep, ZeroGradientIsFixedPoint) {
  auto s = single({1.5, -2.0}, {0.0, 0.0});
  rmsprop_step(s, RmsProp{});
  EXPECT_EQ(s[0].value, (std::vector<double>{1.5, -2.0}));
}

TEST(RmsPropStep, FirstStepClosedForm) {
  const double lr = 1e-3, rho = 0.9, eps = 1e-8;
  for (double g : {0.5, -3.0, 1e-4}) {
    auto s = single({2.0}, {g});
    rmsprop_step(s, RmsProp{lr, rho, eps, 10.0});
    EXPECT_NEAR(s[0].value[0] - 2.0, -lr * g / (std::sqrt((1 - rho) * g * g) + eps), 1e-15);
    EXPECT_NEAR(s[0].rms[0], (1 - rho) * g * g, 1e-18);
  }
}

TEST(RmsPropStep, TwoStepRecurrence) {
  const double lr = 0.01, rho = 0.9, eps = 1e-8;
  auto s = single({0.0}, {1.0});
  rmsprop_step(s, RmsProp{lr, rho, eps, 10.0});
  s[0].grad = {2.0};
  rmsprop_step(s, RmsProp{lr, rho, eps, 10.0});
  double v = (1 - rho) * 1.0, th = -lr * 1.0 / (std::sqrt(v) + eps);
  v = rho * v + (1 - rho) * 4.0;
  th -= lr * 2.0 / (std::sqrt(v) + eps);
  EXPECT_NEAR(s[0].value[0], th, 1e-14);
}

TEST(RmsPropStep, ClipsElementwise) {
  auto a = single({0.0}, {500.0}), b = single({0.0}, {10.0});
  rmsprop_step(a, RmsProp{});
  rmsprop_step(b, RmsProp{});
  EXPECT_EQ(a[0].value, b[0].value);
  EXPECT_EQ(a[0].rms, b[0].rms);
}

TEST(RmsPropStep, NonFiniteGradientNamesParameter) {
  auto s = single({0.0}, {std::numeric_limits<double>::quiet_NaN()});
  try {
    rmsprop_step(s, RmsProp{});
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("theta"), std::string::npos);
  }
  EXPECT_EQ(s[0].value, std::vector<double>{0.0});
}

TEST(RmsPropStep, FrozenParamsDoNotMove) {
  auto s = single({1.0}, {1.0});
  s[0].trainable = false;
  rmsprop_step(s, RmsProp{});
  EXPECT_EQ(s[0].value, std::vector<double>{1.0});
}

TEST(RmsPropStep, QuadraticBowlDecreasesMonotonically) {
  // f = sum a_i (x_i - c_i)^2
  const std::vector<double> a{1.0, 4.0, 0.25}, c{0.3, -1.2, 2.0};
  auto s = single({5.0, 5.0, -5.0}, {0, 0, 0});
  auto f = [&] {
    double v = 0;
    for (std::size_t i = 0; i < 3; ++i) v += a[i] * (s[0].value[i] - c[i]) * (s[0].value[i] - c[i]);
    return v;
  };
  double prev = f();
  for (int it = 0; it < 2000; ++it) {
    for (std::size_t i = 0; i < 3; ++i) s[0].grad[i] = 2 * a[i] * (s[0].value[i] - c[i]);
    rmsprop_step(s, RmsProp{1e-3, 0.9, 1e-8, 10.0});
    const double now = f();
    ASSERT_LT(now, prev) << "iteration " << it;
    prev = now;
  }
}

TEST(Evaluate, PerfectOracleScoresOne) {
  auto ds = graphs::generate_dataset(10, 30, 3, 1);
  Oracle o(ds.records);
  auto m = evaluate(o, ds.records, EvalConfig{});
  EXPECT_DOUBLE_EQ(m.path_accuracy(), 1.0);
  EXPECT_DOUBLE_EQ(m.edge_accuracy(), 1.0);
  ASSERT_EQ(m.graphs.size(), 30u);
  for (const auto& g : m.graphs) EXPECT_EQ(g.episodes, 10u);
}

TEST(Evaluate, RandomPathAccuracyIsTiny) {
  auto ds = graphs::generate_dataset(10, 100, 4, 1);
  baselines::RandomPredictor r(1);
  auto m = evaluate(r, ds.records, EvalConfig{});
  EXPECT_LT(m.path_accuracy(), 0.05);
  // First query hits 1 in 10; later ones need a lucky implicit current too.
  EXPECT_GT(m.edge_accuracy(), 0.02);
  EXPECT_LT(m.edge_accuracy(), 0.1);
}

TEST(Evaluate, EdgeAtLeastPathAndInUnitInterval) {
  auto ds = graphs::generate_dataset(10, 50, 5, 1);
  baselines::GraphDistancePredictor gd(2);
  baselines::RandomPredictor rnd(2);
  for (baselines::Predictor* p : {static_cast<baselines::Predictor*>(&gd), static_cast<baselines::Predictor*>(&rnd)}) {
    auto m = evaluate(*p, ds.records, EvalConfig{});
    for (const auto& g : m.graphs) {
      EXPECT_LE(g.path_accuracy(), g.edge_accuracy());
      EXPECT_GE(g.path_accuracy(), 0.0);
      EXPECT_LE(g.edge_accuracy(), 1.0);
    }
    EXPECT_LE(m.path_accuracy(), m.edge_accuracy());
    EXPECT_EQ(m.episode_valid.size(), 500u);
  }
}

TEST(Evaluate, RepeatsAtFixedSeed) {
  auto ds = graphs::generate_dataset(10, 20, 6, 1);
  baselines::GraphDistancePredictor a(1), b(1);
  auto ma = evaluate(a, ds.records, EvalConfig{}), mb = evaluate(b, ds.records, EvalConfig{});
  EXPECT_EQ(ma.query_valid, mb.query_valid);
  EXPECT_EQ(ma.episode_valid, mb.episode_valid);
}

TEST(Evaluate, FirstQueryWrongBreaksChain) {
  auto ds = graphs::generate_dataset(10, 10, 7, 1);
  Constant c("const", "n0");
  auto m = evaluate(c, ds.records, EvalConfig{});
  // The generator never emits self loops, and n0 is the start, so the first query always fails.
  EXPECT_EQ(m.path_accuracy(), 0.0);
}

TEST(Train, StepZeroLossMatchesUniformPrediction) {
  auto ds = graphs::generate_dataset(10, 40, 8, 1);
  auto mc = tiny_model(ds.codebook.num_classes());
  auto params = model::init_params(mc, 1);
  for (const char* n : {"softmax.weight", "softmax.bias"}) std::fill(params.at(n).value.begin(), params.at(n).value.end(), 0.0);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    const auto& r = ds.records[std::size_t(i)];
    auto ep = graphs::build_episode(r.graph, r.split, {}, 10, rng);
    ad::Tape tape;
    const double loss = model::episode_loss(tape, ep, model::bind(params, mc, false), mc, ds.codebook).item();
    EXPECT_NEAR(loss, double(ep.answer_steps()) * std::log(11.0), 1e-10);
  }
}

TEST(Train, StepZeroLossNearUniformWithXavierInit) {
  auto ds = graphs::generate_dataset(10, 40, 8, 1);
  TrainConfig tc;
  tc.model = tiny_model(ds.codebook.num_classes());
  tc.batch_size = 32;
  tc.max_steps = 1;
  auto res = train(tc, ds);
  double answers = 0;
  for (std::size_t b = 0; b < tc.batch_size; ++b) {
    std::mt19937_64 rng(mix_seed(tc.seed, 1, b));
    const auto& rec = ds.records[std::uniform_int_distribution<std::size_t>(0, ds.records.size() - 1)(rng)];
    answers += double(graphs::build_episode(rec.graph, rec.split, {}, 10, rng).answer_steps());
  }
  answers /= double(tc.batch_size);
  const double expect = answers * std::log(11.0);
  EXPECT_LT(std::abs(res.metrics.loss_curve.at(0) - expect) / expect, 0.05);
}

TEST(Train, BitReproducibleAndThreadIndependent) {
  auto ds = graphs::generate_dataset(6, 8, 9, 1);
  TrainConfig tc;
  tc.model = tiny_model(ds.codebook.num_classes());
  tc.batch_size = 4;
  tc.max_steps = 15;
  auto a = train(tc, ds), b = train(tc, ds);
  tc.threads = 3;
  auto c = train(tc, ds);
  EXPECT_EQ(flat(a.params), flat(b.params));
  EXPECT_EQ(a.metrics.loss_curve, b.metrics.loss_curve);
  EXPECT_EQ(flat(a.params), flat(c.params));
  tc.seed = 2;
  EXPECT_NE(flat(train(tc, ds).params), flat(a.params));
}

TEST(Train, ClipTenMatchesNoClipWhileGradientsAreSmall) {
  auto ds = graphs::generate_dataset(6, 8, 10, 1);
  TrainConfig tc;
  tc.model = tiny_model(ds.codebook.num_classes());
  tc.batch_size = 4;
  tc.max_steps = 20;
  double biggest = 0;
  tc.on_checkpoint = [&](std::size_t, const model::ParamStore& p) {
    for (const auto& x : p)
      for (double g : x.grad) biggest = std::max(biggest, std::abs(g));
  };
  tc.checkpoint_interval = 1;
  auto clipped = train(tc, ds);
  ASSERT_LT(biggest, 10.0);
  tc.on_checkpoint = nullptr;
  tc.optimizer.clip = std::numeric_limits<double>::infinity();
  auto free = train(tc, ds);
  EXPECT_EQ(flat(clipped.params), flat(free.params));
}

TEST(Train, LossFallsOnASingleGraph) {
  auto ds = graphs::generate_dataset(6, 1, 11, 1);
  TrainConfig tc;
  tc.model = tiny_model(ds.codebook.num_classes());
  tc.batch_size = 4;
  tc.max_steps = 300;
  tc.optimizer.learning_rate = 3e-3;
  auto res = train(tc, ds);
  auto mean = [&](std::size_t from, std::size_t to) {
    double s = 0;
    for (std::size_t i = from; i < to; ++i) s += res.metrics.loss_curve[i];
    return s / double(to - from);
  };
  EXPECT_LT(mean(250, 300), 0.5 * mean(0, 50));
}

TEST(Train, EarlyStoppingAndRejections) {
  auto ds = graphs::generate_dataset(6, 20, 12, 1);
  TrainConfig tc;
  tc.model = tiny_model(ds.codebook.num_classes());
  tc.batch_size = 2;
  tc.max_steps = 100000;
  tc.eval_interval = 1;
  tc.patience = 3;
  auto res = train(tc, ds);
  EXPECT_LT(res.steps, 100000u);
  EXPECT_TRUE(res.best_validation.has_value());
  EXPECT_EQ(validation_count(20, tc), 2u);
  tc.model.num_classes = 5;
  EXPECT_THROW(train(tc, ds), DataError);
  EXPECT_THROW(train(tc, graphs::Dataset{}), DataError);
}

TEST(Percentile, MatchesExactRanks) {
  std::mt19937_64 rng(13);
  auto v = testing_support::uniform(101, rng);
  auto s = box_stats("x", v);
  std::sort(v.begin(), v.end());
  EXPECT_EQ(s.min, v[0]);
  EXPECT_EQ(s.q1, v[25]);
  EXPECT_EQ(s.median, v[50]);
  EXPECT_EQ(s.q3, v[75]);
  EXPECT_EQ(s.max, v[100]);
  EXPECT_DOUBLE_EQ(percentile_sorted({1, 2, 3, 4}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(percentile_sorted({1, 2, 3, 4}, 0.25), 1.75);
  EXPECT_THROW(percentile_sorted({}, 0.5), UsageError);
}

TEST(BoxStatsTest, OutliersAndWhiskers) {
  auto s = box_stats("x", {0, 1, 2, 3, 4, 5, 6, 7, 8, 100});
  EXPECT_EQ(s.outliers, std::vector<double>{100});
  EXPECT_EQ(s.whisker_high, 8);
  EXPECT_EQ(s.whisker_low, 0);
  EXPECT_EQ(s.max, 100);
}

TEST(Compare, SelfBaselineIsZeroAndOrderInvariant) {
  auto ds = graphs::generate_dataset(10, 40, 14, 1);
  Oracle o(ds.records);
  baselines::RandomPredictor r(1);
  baselines::GraphDistancePredictor g(1);
  std::vector<Metrics> runs{evaluate(o, ds.records, {}), evaluate(r, ds.records, {}), evaluate(g, ds.records, {})};
  auto a = compare(runs, "random");
  std::reverse(runs.begin(), runs.end());
  auto b = compare(runs, "random");
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].predictor, b[i].predictor);
    EXPECT_EQ(a[i].differences, b[i].differences);
    EXPECT_EQ(a[i].median, b[i].median);
  }
  for (const auto& s : a)
    if (s.predictor == "random") {
      for (double d : s.differences) EXPECT_EQ(d, 0.0);
      EXPECT_EQ(s.min, 0.0);
      EXPECT_EQ(s.max, 0.0);
    }
  for (const auto& s : a)
    if (s.predictor == "oracle") {
      EXPECT_GT(s.median, 0.9);
    }
}

TEST(Compare, Errors) {
  auto ds = graphs::generate_dataset(10, 5, 15, 1);
  baselines::RandomPredictor r(1);
  baselines::GraphDistancePredictor g(1);
  auto mr = evaluate(r, ds.records, {}), mg = evaluate(g, ds.records, {});
  EXPECT_THROW(compare({mr}, "random"), UsageError);
  try {
    compare({mr, mg}, "nope");
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("graph_distance"), std::string::npos);
  }
  auto short_run = mg;
  short_run.graphs.pop_back();
  EXPECT_THROW(compare({mr, short_run}, "random"), UsageError);
  EXPECT_THROW(compare({mr, mr}, "random"), UsageError);
}
