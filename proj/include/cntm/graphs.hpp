#pragma once

// Conditional transition graphs: random generation, observed/held-out link
// splits, environment-driven walks, episode construction and dataset files.

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cntm/codebook.hpp"
#include "cntm/errors.hpp"
#include "cntm/seed.hpp"

namespace cntm::graphs {

struct Edge {
  std::size_t source = 0;
  std::size_t condition = 0;
  std::size_t target = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct ConditionalGraph {
  std::string id;
  std::vector<std::string> nodes;
  std::vector<std::string> conditions;
  std::vector<Edge> edges;  // sorted by (source, condition)
  std::size_t start = 0;
  std::vector<std::size_t> finals;  // sorted

  std::optional<std::size_t> transition(std::size_t node, std::size_t condition) const {
    auto it = std::lower_bound(edges.begin(), edges.end(), std::pair{node, condition},
                               [](const Edge& e, const std::pair<std::size_t, std::size_t>& k) {
                                 return std::pair{e.source, e.condition} < k;
                               });
    if (it == edges.end() || it->source != node || it->condition != condition) return std::nullopt;
    return it->target;
  }

  bool is_final(std::size_t node) const { return std::binary_search(finals.begin(), finals.end(), node); }

  std::vector<std::size_t> out_edges(std::size_t node) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < edges.size(); ++i)
      if (edges[i].source == node) out.push_back(i);
    return out;
  }

  std::size_t condition_index(const std::string& c) const { return index_of(conditions, c, "condition"); }
  std::size_t node_index(const std::string& n) const { return index_of(nodes, n, "node"); }

  void canonicalize() {
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
      return std::pair{a.source, a.condition} < std::pair{b.source, b.condition};
    });
    std::sort(finals.begin(), finals.end());
    finals.erase(std::unique(finals.begin(), finals.end()), finals.end());
  }

  friend bool operator==(const ConditionalGraph&, const ConditionalGraph&) = default;

 private:
  static std::size_t index_of(const std::vector<std::string>& v, const std::string& s, const char* what) {
    auto it = std::find(v.begin(), v.end(), s);
    if (it == v.end()) throw LookupError(std::string("graph: unknown ") + what + " '" + s + "'");
    return static_cast<std::size_t>(it - v.begin());
  }
};

inline std::vector<bool> reachable_from(const ConditionalGraph& g, std::size_t start,
                                        const std::vector<bool>* edge_mask = nullptr) {
  std::vector<std::vector<std::size_t>> adj(g.nodes.size());
  for (std::size_t i = 0; i < g.edges.size(); ++i)
    if (!edge_mask || (*edge_mask)[i]) adj[g.edges[i].source].push_back(g.edges[i].target);
  std::vector<bool> seen(g.nodes.size(), false);
  std::queue<std::size_t> q;
  seen[start] = true;
  q.push(start);
  while (!q.empty()) {
    const auto u = q.front();
    q.pop();
    for (auto v : adj[u])
      if (!seen[v]) {
        seen[v] = true;
        q.push(v);
      }
  }
  return seen;
}

// Empty when `g` satisfies every structural invariant.
inline std::vector<std::string> check_invariants(const ConditionalGraph& g) {
  std::vector<std::string> problems;
  const std::size_t n = g.nodes.size();
  if (n == 0) return {"graph has no nodes"};
  if (g.start >= n) problems.push_back("start node out of range");
  for (auto f : g.finals)
    if (f >= n) problems.push_back("final node out of range");
  std::set<std::pair<std::size_t, std::size_t>> keys;
  std::vector<std::size_t> out_degree(n, 0);
  for (const auto& e : g.edges) {
    if (e.source >= n || e.target >= n || e.condition >= g.conditions.size()) {
      problems.push_back("edge references an unknown symbol");
      continue;
    }
    if (!keys.insert({e.source, e.condition}).second)
      problems.push_back("non-deterministic transition from '" + g.nodes[e.source] + "' under '" +
                         g.conditions[e.condition] + "'");
    ++out_degree[e.source];
  }
  if (!problems.empty()) return problems;
  for (std::size_t v = 0; v < n; ++v)
    if (!g.is_final(v) && out_degree[v] == 0) problems.push_back("non-final node '" + g.nodes[v] + "' has no outgoing edge");
  const auto seen = reachable_from(g, g.start);
  for (std::size_t v = 0; v < n; ++v)
    if (!seen[v]) problems.push_back("node '" + g.nodes[v] + "' unreachable from start");
  return problems;
}

inline std::vector<std::string> numbered(const std::string& prefix, std::size_t count) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

inline constexpr std::size_t kConditionAlphabet = 10;
inline constexpr std::size_t kMaxOutDegree = 4;

// Node 0 is the start; one other node is the single absorbing final.
// Every other node draws an out-degree in [1, min(4, n-1)], distinct
// conditions and uniform targets among the other nodes. Unreachable nodes
// are repaired by redirecting a random reachable edge to them.
inline ConditionalGraph generate_random_graph(std::size_t num_nodes, std::uint64_t seed) {
  if (num_nodes < 2) throw UsageError("generate_random_graph: need at least 2 nodes");
  std::mt19937_64 rng(seed);
  for (;;) {
    ConditionalGraph g;
    g.id = "g" + std::to_string(seed);
    g.nodes = numbered("n", num_nodes);
    g.conditions = numbered("c", kConditionAlphabet);
    g.start = 0;
    g.finals = {std::uniform_int_distribution<std::size_t>(1, num_nodes - 1)(rng)};
    const std::size_t max_deg = std::min(kMaxOutDegree, num_nodes - 1);
    std::vector<std::size_t> cond_order(kConditionAlphabet);
    for (std::size_t v = 0; v < num_nodes; ++v) {
      if (g.is_final(v)) continue;
      const auto deg = std::uniform_int_distribution<std::size_t>(1, max_deg)(rng);
      std::iota(cond_order.begin(), cond_order.end(), 0);
      std::shuffle(cond_order.begin(), cond_order.end(), rng);
      for (std::size_t d = 0; d < deg; ++d) {
        auto t = std::uniform_int_distribution<std::size_t>(0, num_nodes - 2)(rng);
        if (t >= v) ++t;  // skip self
        g.edges.push_back({v, cond_order[d], t});
      }
    }
    g.canonicalize();
    for (int repair = 0; repair < 1000; ++repair) {
      const auto seen = reachable_from(g, g.start);
      std::vector<std::size_t> lost;
      for (std::size_t v = 0; v < num_nodes; ++v)
        if (!seen[v]) lost.push_back(v);
      if (lost.empty()) return g;
      const auto victim = lost[std::uniform_int_distribution<std::size_t>(0, lost.size() - 1)(rng)];
      std::vector<std::size_t> candidates;
      for (std::size_t i = 0; i < g.edges.size(); ++i)
        if (seen[g.edges[i].source]) candidates.push_back(i);
      g.edges[candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)]].target =
          victim;
    }
    // Repair did not converge; draw a fresh graph from the same stream.
  }
}

// ---------------------------------------------------------------------------
// Observed / held-out links

struct LinkSplit {
  std::vector<std::size_t> observed;  // sorted edge indices
  std::vector<std::size_t> held_out;  // sorted edge indices

  friend bool operator==(const LinkSplit&, const LinkSplit&) = default;
};

// Same nodes, conditions, start and finals; only the observed edges.
inline ConditionalGraph observed_subgraph(const ConditionalGraph& g, const LinkSplit& split) {
  ConditionalGraph out = g;
  out.edges.clear();
  for (auto i : split.observed) out.edges.push_back(g.edges[i]);
  return out;
}

inline LinkSplit split_links(const ConditionalGraph& g, double fraction, std::mt19937_64& rng,
                             int max_retries = 1000) {
  const std::size_t total = g.edges.size();
  const auto keep = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(total)));
  std::vector<std::size_t> order(total);
  for (int attempt = 0; attempt < max_retries; ++attempt) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> mask(total, false);
    for (std::size_t i = 0; i < keep; ++i) mask[order[i]] = true;
    const auto seen = reachable_from(g, g.start, &mask);
    if (std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) {
      LinkSplit s;
      for (std::size_t i = 0; i < total; ++i) (mask[i] ? s.observed : s.held_out).push_back(i);
      return s;
    }
  }
  throw SplitError("split_links: no split of graph '" + g.id + "' keeping " + std::to_string(keep) + "/" +
                   std::to_string(total) + " edges preserves reachability after " +
                   std::to_string(max_retries) + " attempts");
}

inline LinkSplit split_links(const ConditionalGraph& g, double fraction, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return split_links(g, fraction, rng);
}

// ---------------------------------------------------------------------------
// Environment and walks

// Samples the condition applied at a node among that node's outgoing
// conditions; uniform unless per-condition weights are configured.
struct Environment {
  std::vector<double> condition_weights;  // indexed by condition; empty = uniform

  std::optional<std::size_t> sample(const ConditionalGraph& g, std::size_t node, std::mt19937_64& rng) const {
    std::vector<std::size_t> conds;
    std::vector<double> weights;
    for (const auto& e : g.edges)
      if (e.source == node) {
        conds.push_back(e.condition);
        weights.push_back(condition_weights.empty() ? 1.0 : condition_weights.at(e.condition));
      }
    if (conds.empty()) return std::nullopt;
    if (condition_weights.empty())
      return conds[std::uniform_int_distribution<std::size_t>(0, conds.size() - 1)(rng)];
    std::discrete_distribution<std::size_t> dist(weights.begin(), weights.end());
    return conds[dist(rng)];
  }
};

struct WalkStep {
  std::size_t node = 0;
  std::size_t condition = 0;
  std::size_t next = 0;
};

// Follows `g` from its start for at most `length` transitions. Stops on
// reaching a final node or a node without outgoing edges.
inline std::vector<WalkStep> sample_walk(const ConditionalGraph& g, const Environment& env, std::size_t length,
                                         std::mt19937_64& rng) {
  if (length == 0) throw UsageError("sample_walk: length must be at least 1");
  std::vector<WalkStep> walk;
  std::size_t at = g.start;
  while (walk.size() < length && !g.is_final(at)) {
    const auto c = env.sample(g, at, rng);
    if (!c) break;
    const auto next = *g.transition(at, *c);
    walk.push_back({at, *c, next});
    at = next;
  }
  return walk;
}

// ---------------------------------------------------------------------------
// Episodes

// One model input; absent slots encode as the all-zero code.
struct Triple {
  std::optional<std::string> node;
  std::optional<std::string> condition;
  std::optional<std::string> target;

  friend bool operator==(const Triple&, const Triple&) = default;
};

struct Episode {
  std::vector<Triple> inputs;
  std::vector<std::optional<std::string>> targets;  // engaged on answer steps
  std::vector<std::uint8_t> mask;                   // 1 on answer steps
  std::size_t description_steps = 0;

  std::size_t size() const { return inputs.size(); }
  std::size_t answer_steps() const { return inputs.size() - description_steps; }
};

// Description: every observed edge as a complete triple, freshly shuffled.
inline std::vector<Triple> description_triples(const ConditionalGraph& g, const LinkSplit& split,
                                               std::mt19937_64& rng) {
  std::vector<Triple> out;
  for (auto i : split.observed) {
    const auto& e = g.edges[i];
    out.push_back({g.nodes[e.source], g.conditions[e.condition], g.nodes[e.target]});
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

// Answer queries for a walk: the first names the current node, the rest only the condition.
inline Episode episode_from_walk(const ConditionalGraph& g, std::vector<Triple> description,
                                 const std::vector<WalkStep>& walk) {
  Episode ep;
  ep.description_steps = description.size();
  ep.inputs = std::move(description);
  ep.targets.assign(ep.inputs.size(), std::nullopt);
  ep.mask.assign(ep.inputs.size(), 0);
  for (std::size_t t = 0; t < walk.size(); ++t) {
    Triple q;
    if (t == 0) q.node = g.nodes[walk[t].node];
    q.condition = g.conditions[walk[t].condition];
    ep.inputs.push_back(q);
    ep.targets.push_back(g.nodes[walk[t].next]);
    ep.mask.push_back(1);
  }
  return ep;
}

// Walks are drawn on the observed subgraph, so held-out links never reach the model.
inline Episode build_episode(const ConditionalGraph& g, const LinkSplit& split, const Environment& env,
                             std::size_t walk_length, std::mt19937_64& rng) {
  auto description = description_triples(g, split, rng);
  const auto observed = observed_subgraph(g, split);
  const auto walk = sample_walk(observed, env, walk_length, rng);
  return episode_from_walk(g, std::move(description), walk);
}

// ---------------------------------------------------------------------------
// Dataset files
//
// Line-oriented text. Header "cntm-dataset 1", then one "graph" record per
// line with space-separated key=value fields, then "end count=<K>".
//   id nodes conditions delta=src:cond:dst;...  start finals observed=i,j,...
//   codebook=sym:hex,...  checksum=<crc32 of everything before " checksum=">

struct GraphRecord {
  ConditionalGraph graph;
  LinkSplit split;

  friend bool operator==(const GraphRecord&, const GraphRecord&) = default;
};

struct Dataset {
  SymbolCodebook codebook;
  std::vector<GraphRecord> records;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline constexpr std::string_view kDatasetHeader = "cntm-dataset 1";

namespace detail {

inline std::uint32_t crc32_of(std::string_view s) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(s.size())));
}

inline std::string hex(std::uint32_t v, int width) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%0*x", width, v);
  return buf;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::size_t pos = 0;
  for (;;) {
    const auto next = s.find(sep, pos);
    out.emplace_back(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

template <class T>
std::string join(const std::vector<T>& v, char sep, auto&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += fmt(v[i]);
  }
  return out;
}

inline bool valid_symbol(std::string_view s) {
  return !s.empty() && s.find_first_of(" \t\r\n,:;=") == std::string_view::npos;
}

inline std::size_t parse_index(const std::string& s, std::size_t line) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw ParseError(line, "expected a non-negative integer, got '" + s + "'");
  return std::stoul(s);
}

inline std::map<std::string, std::string> parse_fields(std::string_view body, std::size_t line) {
  std::map<std::string, std::string> fields;
  for (const auto& tok : split(body, ' ')) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ParseError(line, "field '" + tok + "' lacks '='");
    if (!fields.emplace(tok.substr(0, eq), tok.substr(eq + 1)).second)
      throw ParseError(line, "duplicate field '" + tok.substr(0, eq) + "'");
  }
  return fields;
}

inline const std::string& field(const std::map<std::string, std::string>& f, const std::string& key,
                                std::size_t line) {
  auto it = f.find(key);
  if (it == f.end()) throw ParseError(line, "missing field '" + key + "'");
  return it->second;
}

// Parses the graph-structure fields shared by dataset and import records.
inline ConditionalGraph parse_graph_fields(const std::map<std::string, std::string>& f, std::size_t line) {
  ConditionalGraph g;
  g.id = field(f, "id", line);
  g.nodes = split(field(f, "nodes", line), ',');
  g.conditions = split(field(f, "conditions", line), ',');
  for (const auto* list : {&g.nodes, &g.conditions})
    for (const auto& s : *list)
      if (!valid_symbol(s)) throw ParseError(line, "invalid symbol '" + s + "'");
  auto node_at = [&](const std::string& s) {
    auto it = std::find(g.nodes.begin(), g.nodes.end(), s);
    if (it == g.nodes.end()) throw ParseError(line, "unknown node '" + s + "'");
    return static_cast<std::size_t>(it - g.nodes.begin());
  };
  for (const auto& t : split(field(f, "delta", line), ';')) {
    const auto parts = split(t, ':');
    if (parts.size() != 3) throw ParseError(line, "delta entry '" + t + "' is not src:cond:dst");
    auto c = std::find(g.conditions.begin(), g.conditions.end(), parts[1]);
    if (c == g.conditions.end()) throw ParseError(line, "unknown condition '" + parts[1] + "'");
    g.edges.push_back({node_at(parts[0]), static_cast<std::size_t>(c - g.conditions.begin()), node_at(parts[2])});
  }
  g.start = node_at(field(f, "start", line));
  for (const auto& s : split(field(f, "finals", line), ',')) g.finals.push_back(node_at(s));
  const auto edges_as_given = g.edges;
  g.canonicalize();
  if (g.edges != edges_as_given) throw ParseError(line, "delta entries must be sorted by (source, condition)");
  if (auto problems = check_invariants(g); !problems.empty()) throw ParseError(line, problems.front());
  return g;
}

inline std::string graph_fields(const ConditionalGraph& g) {
  auto same = [](const std::string& s) { return s; };
  std::string out = "id=" + g.id + " nodes=" + join(g.nodes, ',', same) +
                    " conditions=" + join(g.conditions, ',', same) + " delta=" +
                    join(g.edges, ';', [&](const Edge& e) {
                      return g.nodes[e.source] + ":" + g.conditions[e.condition] + ":" + g.nodes[e.target];
                    }) +
                    " start=" + g.nodes[g.start] +
                    " finals=" + join(g.finals, ',', [&](std::size_t i) { return g.nodes[i]; });
  return out;
}

inline std::string codebook_field(const SymbolCodebook& cb) {
  std::string out = "codebook=";
  const std::size_t total = cb.nodes().size() + cb.conditions().size();
  for (std::size_t i = 0; i < total; ++i) {
    if (i) out += ',';
    out += (i < cb.nodes().size() ? "N:" : "C:") + cb.symbol_at(i) + ":" + hex(cb.codes()[i], 8);
  }
  return out;
}

inline SymbolCodebook parse_codebook(const std::string& s, std::size_t line) {
  std::vector<std::string> nodes, conds;
  std::vector<Code> node_codes, cond_codes;
  for (const auto& entry : split(s, ',')) {
    const auto parts = split(entry, ':');
    if (parts.size() != 3 || (parts[0] != "N" && parts[0] != "C") || parts[2].empty() ||
        parts[2].find_first_not_of("0123456789abcdef") != std::string::npos || parts[2].size() > 8)
      throw ParseError(line, "codebook entry '" + entry + "' is not N|C:symbol:hex");
    const auto code = static_cast<Code>(std::stoul(parts[2], nullptr, 16));
    (parts[0] == "N" ? nodes : conds).push_back(parts[1]);
    (parts[0] == "N" ? node_codes : cond_codes).push_back(code);
  }
  node_codes.insert(node_codes.end(), cond_codes.begin(), cond_codes.end());
  try {
    return SymbolCodebook(std::move(nodes), std::move(conds), std::move(node_codes));
  } catch (const DataError& e) {
    throw ParseError(line, e.what());
  }
}

}  // namespace detail

inline std::string format_record(const GraphRecord& r, const SymbolCodebook& cb) {
  auto idx = [](std::size_t i) { return std::to_string(i); };
  std::string body = "graph " + detail::graph_fields(r.graph) + " observed=" + detail::join(r.split.observed, ',', idx) +
                     " " + detail::codebook_field(cb);
  return body + " checksum=" + detail::hex(detail::crc32_of(body), 8);
}

inline std::string format_dataset(const Dataset& ds) {
  std::string out(kDatasetHeader);
  out += '\n';
  for (const auto& r : ds.records) out += format_record(r, ds.codebook) + '\n';
  out += "end count=" + std::to_string(ds.records.size()) + '\n';
  return out;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os << format_dataset(ds);
  if (!os.flush()) throw std::runtime_error("write to '" + path + "' failed");
}

namespace detail {

inline std::vector<std::string> read_lines(std::istream& is) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace detail

// All-or-nothing: throws ParseError naming the first bad line.
inline Dataset parse_dataset(std::istream& is) {
  const auto lines = detail::read_lines(is);
  if (lines.empty() || lines[0] != kDatasetHeader) throw ParseError(1, "missing header '" + std::string(kDatasetHeader) + "'");
  Dataset ds;
  bool have_codebook = false, ended = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t line = i + 1;
    const auto& text = lines[i];
    if (text.empty()) continue;
    if (ended) throw ParseError(line, "content after end record");
    if (text.rfind("end ", 0) == 0) {
      const auto f = detail::parse_fields(std::string_view(text).substr(4), line);
      if (detail::parse_index(detail::field(f, "count", line), line) != ds.records.size())
        throw ParseError(line, "end record count does not match " + std::to_string(ds.records.size()) + " records");
      ended = true;
      continue;
    }
    if (text.rfind("graph ", 0) != 0) throw ParseError(line, "expected 'graph' or 'end' record");
    const auto cpos = text.rfind(" checksum=");
    if (cpos == std::string::npos) throw ParseError(line, "missing checksum");
    if (text.substr(cpos + 10) != detail::hex(detail::crc32_of(std::string_view(text).substr(0, cpos)), 8))
      throw ParseError(line, "checksum mismatch");
    const auto f = detail::parse_fields(std::string_view(text).substr(6, cpos - 6), line);
    GraphRecord rec;
    rec.graph = detail::parse_graph_fields(f, line);
    std::vector<bool> seen(rec.graph.edges.size(), false);
    for (const auto& s : detail::split(detail::field(f, "observed", line), ',')) {
      const auto k = detail::parse_index(s, line);
      if (k >= seen.size() || seen[k]) throw ParseError(line, "observed index " + s + " out of range or repeated");
      seen[k] = true;
    }
    for (std::size_t k = 0; k < seen.size(); ++k) (seen[k] ? rec.split.observed : rec.split.held_out).push_back(k);
    auto cb = detail::parse_codebook(detail::field(f, "codebook", line), line);
    if (!have_codebook) {
      ds.codebook = std::move(cb);
      have_codebook = true;
    } else if (!(cb == ds.codebook)) {
      throw ParseError(line, "codebook differs from earlier records");
    }
    for (const auto* list : {&rec.graph.nodes, &rec.graph.conditions})
      for (const auto& s : *list)
        if (!ds.codebook.contains(s)) throw ParseError(line, "symbol '" + s + "' missing from codebook");
    ds.records.push_back(std::move(rec));
  }
  if (!ended) throw ParseError(lines.size() + 1, "truncated file: no end record");
  return ds;
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  return parse_dataset(is);
}

// Hand-authored graph files: "graph" lines carrying only the structural fields
// (id nodes conditions delta start finals). Other fields are ignored.
inline std::vector<ConditionalGraph> load_graphs(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  const auto lines = detail::read_lines(is);
  std::vector<ConditionalGraph> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& text = lines[i];
    if (text.empty() || text[0] == '#' || text == kDatasetHeader || text.rfind("end ", 0) == 0) continue;
    if (text.rfind("graph ", 0) != 0) throw ParseError(i + 1, "expected a 'graph' record");
    std::string_view body = std::string_view(text).substr(6);
    if (auto c = body.rfind(" checksum="); c != std::string_view::npos) body = body.substr(0, c);
    out.push_back(detail::parse_graph_fields(detail::parse_fields(body, i + 1), i + 1));
  }
  if (out.empty()) throw ParseError(lines.size() + 1, "no graph records");
  return out;
}

// K random graphs of N nodes sharing one codebook, each with a link split
// keeping `fraction` of its edges. Graph i is drawn from mix_seed(seed, i,
// attempt); attempts whose split cannot keep every node reachable are redrawn.
inline Dataset generate_dataset(std::size_t num_nodes, std::size_t count, std::uint64_t seed,
                                std::uint64_t codebook_seed, double fraction = 0.7) {
  if (count == 0) throw UsageError("generate_dataset: need at least one graph");
  Dataset ds;
  ds.codebook = SymbolCodebook::random(numbered("n", num_nodes), numbered("c", kConditionAlphabet), codebook_seed);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      auto g = generate_random_graph(num_nodes, mix_seed(seed, i, attempt));
      g.id = "g" + std::to_string(i);
      try {
        auto split = split_links(g, fraction, mix_seed(seed ^ 0x5b117ULL, i, attempt));
        ds.records.push_back({std::move(g), std::move(split)});
        break;
      } catch (const SplitError&) {
        if (attempt >= 1000) throw;
      }
    }
  }
  return ds;
}

}  // namespace cntm::graphs
