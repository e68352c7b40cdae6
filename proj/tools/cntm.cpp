// cntm: generate graph datasets, train CNTM / LSTM models, evaluate them
// against the random and graph-distance baselines, and plot comparisons.
//
// Exit codes: 0 ok, 2 usage, 3 numerical failure, 4 data incompatibility,
// 1 anything else.

#include <chrono>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cntm/baselines.hpp"
#include "cntm/checkpoint.hpp"
#include "cntm/graphs.hpp"
#include "cntm/harness.hpp"
#include "cntm/report.hpp"

using namespace cntm;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit { kOk = 0, kOther = 1, kUsage = 2, kNumerical = 3, kData = 4 };

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string file_crc(const std::string& path) {
  return graphs::detail::hex(graphs::detail::crc32_of(report::detail::slurp(path)), 8);
}

// Writes <output>.manifest.json for every output of a command.
struct Manifest {
  std::string command;
  json config = json::object();
  std::vector<std::string> inputs;
  std::uint64_t seed = 0;
  std::string started = utc_now();

  void write(const std::vector<std::string>& outputs) const {
    json in = json::array();
    for (const auto& p : inputs) in.push_back({{"path", p}, {"crc32", file_crc(p)}});
    const auto finished = utc_now();
    for (const auto& out : outputs) {
      json m = {{"command", command},
                {"config", config},
                {"inputs", in},
                {"output", {{"path", out}, {"crc32", file_crc(out)}}},
                {"seed", seed},
                {"tool_version", kVersion},
                {"timestamps", {{"started", started}, {"finished", finished}}}};
      report::detail::write_file(out + ".manifest.json", m.dump(2) + "\n");
    }
  }
};

// key=value lines fill options of `sub` that the command line left unset.
// Blank lines and lines starting with '#' are ignored.
void apply_config_file(CLI::App* sub, const std::string& path) {
  if (path.empty()) return;
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file '" + path + "'");
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto b = line.find_first_not_of(" \t");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(path + ":" + std::to_string(n) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto l = s.find_first_not_of(" \t\r"), r = s.find_last_not_of(" \t\r");
      return l == std::string::npos ? std::string() : s.substr(l, r - l + 1);
    };
    const auto key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    auto* opt = sub->get_option_no_throw("--" + key);
    if (!opt || key == "config") throw UsageError(path + ":" + std::to_string(n) + ": unknown setting '" + key + "'");
    if (opt->count() > 0) continue;
    try {
      opt->add_result(value);
      opt->run_callback();
    } catch (const CLI::Error& err) {
      throw UsageError(path + ":" + std::to_string(n) + ": " + err.what());
    }
  }
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string(flag) + " is required");
}

std::size_t env_threads() {
  const char* v = std::getenv("CNTM_THREADS");
  if (!v || !*v) return std::max(1u, std::thread::hardware_concurrency());
  std::size_t used = 0;
  unsigned long n = 0;
  try {
    n = std::stoul(v, &used);
  } catch (const std::exception&) {
  }
  if (!std::isdigit(static_cast<unsigned char>(v[0])) || used != std::strlen(v) || n == 0)
    throw UsageError(std::string("CNTM_THREADS must be a positive integer, got '") + v + "'");
  return n;
}

// ---------------------------------------------------------------------------
// gen

struct GenOpts {
  std::size_t nodes = 10;
  std::size_t count = 100;
  std::uint64_t seed = 1;
  std::optional<std::uint64_t> codebook_seed;
  double fraction = 0.7;
  std::string import;
  std::string out;
};

int run_gen(const GenOpts& o) {
  require(o.out, "--out");
  Manifest man;
  man.command = "gen";
  man.seed = o.seed;
  const auto cb_seed = o.codebook_seed.value_or(o.seed);
  graphs::Dataset ds;
  if (o.import.empty()) {
    if (o.nodes < 2) throw UsageError("--nodes must be at least 2");
    if (o.count < 1) throw UsageError("--count must be at least 1");
    ds = graphs::generate_dataset(o.nodes, o.count, o.seed, cb_seed, o.fraction);
  } else {
    man.inputs.push_back(o.import);
    const auto gs = graphs::load_graphs(o.import);
    std::vector<std::string> nodes, conds;
    auto add = [](std::vector<std::string>& v, const std::string& s) {
      if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
    };
    for (const auto& g : gs) {
      if (auto bad = graphs::check_invariants(g); !bad.empty()) throw DataError("graph '" + g.id + "': " + bad.front());
      for (const auto& n : g.nodes) add(nodes, n);
      for (const auto& c : g.conditions) add(conds, c);
    }
    ds.codebook = graphs::SymbolCodebook::random(nodes, conds, cb_seed);
    for (std::size_t i = 0; i < gs.size(); ++i)
      ds.records.push_back({gs[i], graphs::split_links(gs[i], o.fraction, mix_seed(o.seed, i))});
  }
  graphs::save_dataset(ds, o.out);
  man.config = {{"nodes", o.nodes},       {"count", ds.records.size()}, {"seed", o.seed},
                {"codebook_seed", cb_seed}, {"fraction", o.fraction},     {"import", o.import}};
  man.write({o.out});
  std::printf("wrote %zu graphs to %s\n", ds.records.size(), o.out.c_str());
  return kOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
  std::string data;
  std::string model = "cntm";
  std::size_t steps = 10000;
  std::uint64_t seed = 1;
  std::string out;
  std::size_t controller = 128, head = 256, u_width = 128, memory_rows = 128, memory_width = 128;
  double lr = 1e-3, clip = 10.0;
  std::size_t batch = 128, walk = 10;
  std::optional<std::size_t> threads;
  std::size_t eval_interval = 0, patience = 20;
  std::size_t log_interval = 10, checkpoint_interval = 500;
};

int run_train(const TrainOpts& o) {
  require(o.data, "--data");
  require(o.out, "--out");
  Manifest man;
  man.command = "train";
  man.seed = o.seed;
  man.inputs.push_back(o.data);
  const auto ds = graphs::load_dataset(o.data);

  harness::TrainConfig tc;
  auto& mc = tc.model;
  mc.controller_width = o.controller;
  mc.head_width = o.head;
  mc.u_width = o.u_width;
  mc.memory_rows = o.memory_rows;
  mc.memory_width = o.memory_width;
  mc.num_classes = ds.codebook.num_classes();
  mc.use_memory = o.model == "cntm";
  tc.optimizer.learning_rate = o.lr;
  tc.optimizer.clip = o.clip;
  tc.batch_size = o.batch;
  tc.max_steps = o.steps;
  tc.seed = o.seed;
  tc.walk_length = o.walk;
  tc.threads = o.threads ? *o.threads : env_threads();
  tc.eval_interval = o.eval_interval;
  tc.patience = o.patience;

  const std::string loss_path = o.out + ".loss.tsv";
  std::string loss_log = "step\tloss\n";
  tc.log_interval = o.log_interval;
  tc.on_log = [&](std::size_t step, double loss) {
    loss_log += std::to_string(step) + "\t" + report::exact(loss) + "\n";
    std::fprintf(stderr, "step %zu loss %.5f\n", step, loss);
  };
  auto save = [&](std::size_t step, const model::ParamStore& params) {
    checkpoint::save({mc, ds.codebook, params, o.seed, step}, o.out);
  };
  tc.checkpoint_interval = o.checkpoint_interval;
  tc.on_checkpoint = save;

  man.config = {{"data", o.data},
                {"model", o.model},
                {"model_config", checkpoint::config_to_json(mc)},
                {"steps", o.steps},
                {"learning_rate", o.lr},
                {"clip", o.clip},
                {"rms_decay", tc.optimizer.decay},
                {"rms_epsilon", tc.optimizer.epsilon},
                {"batch", o.batch},
                {"walk", o.walk},
                {"eval_interval", o.eval_interval},
                {"patience", o.patience},
                {"log_interval", o.log_interval},
                {"checkpoint_interval", o.checkpoint_interval}};
  // Thread count does not change results, so it stays out of the manifest config.

  harness::TrainResult res;
  try {
    res = harness::train(tc, ds);
  } catch (const NumericalError&) {
    report::detail::write_file(loss_path, loss_log);
    throw;
  }
  save(res.steps, res.params);
  report::detail::write_file(loss_path, loss_log);
  man.write({o.out, loss_path});
  std::printf("trained %s for %zu steps in %.1fs, final loss %.5f\n", o.model.c_str(), res.steps,
              res.metrics.wall_seconds, res.metrics.loss_curve.empty() ? 0.0 : res.metrics.loss_curve.back());
  return kOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOpts {
  std::vector<std::string> ckpts;
  std::string data;
  std::size_t walk = 10, episodes = 10;
  std::uint64_t seed = 1;
  std::string out;
};

int run_eval(const EvalOpts& o) {
  require(o.data, "--data");
  require(o.out, "--out");
  Manifest man;
  man.command = "eval";
  man.seed = o.seed;
  man.inputs = o.ckpts;
  man.inputs.push_back(o.data);
  const auto ds = graphs::load_dataset(o.data);
  harness::EvalConfig ec;
  ec.walk_length = o.walk;
  ec.episodes_per_graph = o.episodes;
  ec.seed = o.seed;

  std::vector<harness::Metrics> runs;
  auto seen = [&](const std::string& name) {
    return std::any_of(runs.begin(), runs.end(), [&](const auto& r) { return r.predictor == name; });
  };
  for (const auto& path : o.ckpts) {
    auto ck = checkpoint::load(path);
    if (!(ck.codebook == ds.codebook))
      throw DataError("checkpoint '" + path + "' was trained with a different codebook than '" + o.data + "'");
    if (seen(ck.kind())) throw UsageError("two checkpoints of kind '" + ck.kind() + "'");
    baselines::ModelPredictor mp(ck.kind(), ck.params, ck.config, ck.codebook);
    runs.push_back(harness::evaluate(mp, ds.records, ec));
  }
  baselines::RandomPredictor rnd(mix_seed(o.seed, 0xBA5E, 1));
  baselines::GraphDistancePredictor gd(mix_seed(o.seed, 0xBA5E, 2));
  runs.push_back(harness::evaluate(rnd, ds.records, ec));
  runs.push_back(harness::evaluate(gd, ds.records, ec));

  const std::string summary = o.out + ".summary.tsv";
  report::save_metrics(runs, o.out);
  report::detail::write_file(summary, report::format_summary(runs));
  man.config = {{"ckpt", o.ckpts}, {"data", o.data}, {"walk", o.walk}, {"episodes", o.episodes}, {"seed", o.seed}};
  man.write({o.out, summary});
  std::printf("%s", report::format_summary(runs).c_str());
  return kOk;
}

// ---------------------------------------------------------------------------
// plot

struct PlotOpts {
  std::string metrics;
  std::string baseline;
  std::string measure = "path";
  std::string out;
};

int run_plot(const PlotOpts& o) {
  require(o.metrics, "--metrics");
  require(o.baseline, "--baseline");
  require(o.out, "--out");
  Manifest man;
  man.command = "plot";
  man.inputs.push_back(o.metrics);
  const auto runs = report::load_metrics(o.metrics);
  if (runs.size() < 2) throw UsageError("plot needs a metrics file with at least two predictors");
  const auto stats =
      harness::compare(runs, o.baseline, o.measure == "edge" ? harness::Measure::edge : harness::Measure::path);
  const auto csv = std::filesystem::path(o.out).replace_extension(".csv").string();
  report::detail::write_file(o.out, report::render_box_plot(stats, o.baseline, o.measure));
  report::detail::write_file(csv, report::format_stats_csv(stats));
  man.config = {{"metrics", o.metrics}, {"baseline", o.baseline}, {"measure", o.measure}};
  man.write({o.out, csv});
  std::printf("wrote %s and %s\n", o.out.c_str(), csv.c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  std::string config_path;
  CLI::App app{"Conditional NTM link prediction on conditional transition graphs"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GenOpts gen;
  auto* g = app.add_subcommand("gen", "generate a dataset of random graphs with link splits");
  g->add_option("--config", config_path, "key=value settings file; flags take precedence");
  g->add_option("--nodes", gen.nodes, "nodes per graph")->capture_default_str();
  g->add_option("--count", gen.count, "number of graphs")->capture_default_str();
  g->add_option("--seed", gen.seed)->capture_default_str();
  g->add_option("--codebook-seed", gen.codebook_seed, "defaults to --seed");
  g->add_option("--fraction", gen.fraction, "share of edges observed")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  g->add_option("--import", gen.import, "hand-authored graph file instead of random graphs")->check(CLI::ExistingFile);
  g->add_option("--out", gen.out);

  TrainOpts tr;
  auto* t = app.add_subcommand("train", "train a CNTM or LSTM model");
  t->add_option("--config", config_path, "key=value settings file; flags take precedence");
  t->add_option("--data", tr.data)->check(CLI::ExistingFile);
  t->add_option("--model", tr.model)->capture_default_str()->check(CLI::IsMember({"cntm", "lstm"}));
  t->add_option("--steps", tr.steps)->capture_default_str();
  t->add_option("--seed", tr.seed)->capture_default_str();
  t->add_option("--out", tr.out, "checkpoint path");
  t->add_option("--controller-width", tr.controller)->capture_default_str();
  t->add_option("--head-width", tr.head)->capture_default_str();
  t->add_option("--u-width", tr.u_width)->capture_default_str();
  t->add_option("--memory-rows", tr.memory_rows)->capture_default_str();
  t->add_option("--memory-width", tr.memory_width)->capture_default_str();
  t->add_option("--lr", tr.lr)->capture_default_str();
  t->add_option("--clip", tr.clip)->capture_default_str();
  t->add_option("--batch", tr.batch)->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--walk", tr.walk)->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--threads", tr.threads, "defaults to $CNTM_THREADS, then the core count")->check(CLI::PositiveNumber);
  t->add_option("--eval-interval", tr.eval_interval, "0 disables early stopping")->capture_default_str();
  t->add_option("--patience", tr.patience)->capture_default_str();
  t->add_option("--log-interval", tr.log_interval)->capture_default_str();
  t->add_option("--checkpoint-interval", tr.checkpoint_interval)->capture_default_str();

  EvalOpts ev;
  auto* e = app.add_subcommand("eval", "evaluate checkpoints and the baselines on a dataset");
  e->add_option("--config", config_path, "key=value settings file; flags take precedence");
  e->add_option("--ckpt", ev.ckpts, "checkpoint (repeatable)")->check(CLI::ExistingFile);
  e->add_option("--data", ev.data)->check(CLI::ExistingFile);
  e->add_option("--walk", ev.walk)->capture_default_str()->check(CLI::PositiveNumber);
  e->add_option("--episodes", ev.episodes, "episodes per graph")->capture_default_str()->check(CLI::PositiveNumber);
  e->add_option("--seed", ev.seed)->capture_default_str();
  e->add_option("--out", ev.out, "per-graph metrics table");

  PlotOpts pl;
  auto* p = app.add_subcommand("plot", "baseline-relative box plot (SVG) and statistics (CSV)");
  p->add_option("--config", config_path, "key=value settings file; flags take precedence");
  p->add_option("--metrics", pl.metrics)->check(CLI::ExistingFile);
  p->add_option("--baseline", pl.baseline);
  p->add_option("--measure", pl.measure)->capture_default_str()->check(CLI::IsMember({"path", "edge"}));
  p->add_option("--out", pl.out, "SVG path; the CSV goes beside it");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    for (auto* sub : app.get_subcommands()) apply_config_file(sub, config_path);
    if (*g) return run_gen(gen);
    if (*t) return run_train(tr);
    if (*e) return run_eval(ev);
    if (*p) return run_plot(pl);
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return kUsage;
  } catch (const NumericalError& err) {
    std::cerr << "numerical failure: " << err.what() << "\n";
    return kNumerical;
  } catch (const DataError& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kData;
  } catch (const ParseError& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kData;
  } catch (const SplitError& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kData;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kOther;
  }
  return kOther;
}
