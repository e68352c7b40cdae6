#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cntm/errors.hpp"

namespace cntm::graphs {

inline constexpr std::size_t kCodeBits = 30;
using Code = std::uint32_t;
inline constexpr Code kCodeMask = (Code{1} << kCodeBits) - 1;

// Fixed binary codes for every node and condition symbol of a dataset.
// The all-zero code is reserved for "undefined". Node order defines the
// output class index; class nodes().size() is the undefined class.
class SymbolCodebook {
 public:
  SymbolCodebook() = default;

  SymbolCodebook(std::vector<std::string> nodes, std::vector<std::string> conditions,
                 std::vector<Code> codes)
      : nodes_(std::move(nodes)), conditions_(std::move(conditions)), codes_(std::move(codes)) {
    if (codes_.size() != nodes_.size() + conditions_.size())
      throw DataError("codebook: " + std::to_string(codes_.size()) + " codes for " +
                      std::to_string(nodes_.size() + conditions_.size()) + " symbols");
    std::unordered_set<Code> seen;
    for (std::size_t i = 0; i < codes_.size(); ++i) {
      const auto& sym = symbol_at(i);
      if (codes_[i] == 0 || (codes_[i] & ~kCodeMask) != 0)
        throw DataError("codebook: code for '" + sym + "' is zero or wider than 30 bits");
      if (!seen.insert(codes_[i]).second) throw DataError("codebook: duplicate code for '" + sym + "'");
      if (!index_.emplace(sym, i).second) throw DataError("codebook: duplicate symbol '" + sym + "'");
      by_code_.emplace(codes_[i], i);
    }
  }

  // Distinct, nonzero, uniformly drawn 30-bit codes.
  static SymbolCodebook random(std::vector<std::string> nodes, std::vector<std::string> conditions,
                               std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Code> dist(1, kCodeMask);
    std::unordered_set<Code> used;
    std::vector<Code> codes;
    const std::size_t total = nodes.size() + conditions.size();
    while (codes.size() < total) {
      const Code c = dist(rng);
      if (used.insert(c).second) codes.push_back(c);
    }
    return SymbolCodebook(std::move(nodes), std::move(conditions), std::move(codes));
  }

  const std::vector<std::string>& nodes() const noexcept { return nodes_; }
  const std::vector<std::string>& conditions() const noexcept { return conditions_; }
  const std::vector<Code>& codes() const noexcept { return codes_; }
  std::size_t num_classes() const noexcept { return nodes_.size() + 1; }
  std::size_t undefined_class() const noexcept { return nodes_.size(); }

  bool contains(const std::string& symbol) const { return index_.count(symbol) != 0; }

  Code code(const std::string& symbol) const { return codes_[lookup(symbol)]; }

  std::size_t node_index(const std::string& node) const {
    const auto i = lookup(node);
    if (i >= nodes_.size()) throw LookupError("codebook: '" + node + "' is a condition, not a node");
    return i;
  }

  std::optional<std::string> decode(Code code) const {
    auto it = by_code_.find(code);
    if (it == by_code_.end()) return std::nullopt;
    return symbol_at(it->second);
  }

  const std::string& symbol_at(std::size_t i) const {
    return i < nodes_.size() ? nodes_[i] : conditions_[i - nodes_.size()];
  }

  friend bool operator==(const SymbolCodebook& a, const SymbolCodebook& b) {
    return a.nodes_ == b.nodes_ && a.conditions_ == b.conditions_ && a.codes_ == b.codes_;
  }

 private:
  std::size_t lookup(const std::string& symbol) const {
    auto it = index_.find(symbol);
    if (it == index_.end()) throw LookupError("codebook: unknown symbol '" + symbol + "'");
    return it->second;
  }

  std::vector<std::string> nodes_;
  std::vector<std::string> conditions_;
  std::vector<Code> codes_;
  std::unordered_map<std::string, std::size_t> index_;
  std::unordered_map<Code, std::size_t> by_code_;
};

}  // namespace cntm::graphs
