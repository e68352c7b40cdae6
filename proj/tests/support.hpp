#pragma once

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "cntm/autodiff.hpp"

namespace testing_support {

using cntm::ad::Shape;
using cntm::ad::Tape;
using cntm::ad::Tensor;

inline double rel_err(double a, double b, double floor = 1e-5) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline std::vector<double> uniform(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Builds the scalar output from leaf tensors made of `values`.
using Builder = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

struct GradReport {
  double worst = 0.0;
  std::size_t checked = 0;
};

// Analytic gradient of `f` at `values` against central differences.
inline GradReport check_gradient(const Builder& f, const std::vector<Shape>& shapes,
                                 std::vector<std::vector<double>> values, double step = 1e-5, double floor = 1e-5) {
  auto leaves = [&](bool rg) {
    std::vector<Tensor> ts;
    for (std::size_t i = 0; i < shapes.size(); ++i) ts.emplace_back(shapes[i], values[i], rg);
    return ts;
  };
  Tape tape;
  auto ts = leaves(true);
  auto out = f(tape, ts);
  tape.backward(out);
  GradReport rep;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto analytic = std::vector<double>(ts[i].grad().begin(), ts[i].grad().end());
    for (std::size_t k = 0; k < values[i].size(); ++k) {
      const double keep = values[i][k];
      values[i][k] = keep + step;
      Tape tp;
      const double up = f(tp, leaves(false)).item();
      values[i][k] = keep - step;
      Tape tm;
      const double down = f(tm, leaves(false)).item();
      values[i][k] = keep;
      const double numeric = (up - down) / (2 * step);
      rep.worst = std::max(rep.worst, rel_err(analytic[k], numeric, floor));
      ++rep.checked;
    }
  }
  return rep;
}

inline double sum_of(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x;
  return s;
}

}  // namespace testing_support
