/* Copyright 2026 The DCML Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef DCML_GRADCHECK_HPP_
#define DCML_GRADCHECK_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dcml/encoders.hpp"
#include "dcml/meta_engine.hpp"
#include "dcml/param_set.hpp"
#include "dcml/tensor.hpp"

// Finite-difference verification of analytic gradients.
namespace dcml {

// d f / d x by central differences, entry by entry.
template <typename Scalar, typename F>
Matrix<Scalar> central_difference(F&& f, Matrix<Scalar> x, Scalar h) {
  Matrix<Scalar> out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const Scalar saved = x.data()[i];
    x.data()[i] = saved + h;
    const Scalar plus = f(x);
    x.data()[i] = saved - h;
    const Scalar minus = f(x);
    x.data()[i] = saved;
    out.data()[i] = (plus - minus) / (Scalar(2) * h);
  }
  return out;
}

// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor).
template <typename Scalar>
Scalar max_relative_error(const Matrix<Scalar>& analytic,
                          const Matrix<Scalar>& numeric, Scalar floor) {
  Scalar worst = 0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const Scalar a = analytic.data()[i];
    const Scalar n = numeric.data()[i];
    const Scalar den = std::max({std::abs(a), std::abs(n), floor});
    worst = std::max(worst, std::abs(a - n) / den);
  }
  return worst;
}

inline constexpr double kFiniteDifferenceStep = 1e-5;
inline constexpr double kRelativeErrorFloor = 1e-4;
inline constexpr double kPrimitiveTolerance = 1e-4;
inline constexpr double kMetaTolerance = 1e-3;
inline constexpr double kOrderAgreementTolerance = 1e-3;

// Central differences over every entry of a ParamSet.
ParamSet finite_difference_gradient(
    const std::function<double(const ParamSet&)>& f, const ParamSet& at,
    double h = kFiniteDifferenceStep);

double max_relative_error(const ParamSet& analytic, const ParamSet& numeric,
                          double floor = kRelativeErrorFloor);

// ||a - b||_inf / ||b||_inf.
double relative_difference(const ParamSet& a, const ParamSet& b);

// Value of sum_i L_query_i(theta_i*) + lambda L_align(theta) computed without
// recording a differentiable outer graph. Used as the finite-difference
// target for meta_gradient.
double meta_objective_value(const ParamSet& theta, std::span<const Task> tasks,
                            const AlignBatches& align, const ModelSpec& spec,
                            const MetaConfig& cfg);

// 2-dimensional inputs, one tanh hidden layer of width 2, embed 2, domain
// embeddings of width 1 over 2 domains: 42 parameters.
ModelSpec tiny_model_spec();

enum class GradcheckScale { kTiny, kSmall };

struct GradcheckEntry {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  // Most checks require value < tolerance; a few sanity checks require the
  // opposite (second-order terms must be visible).
  bool require_above = false;

  bool passed() const {
    return std::isfinite(value) &&
           (require_above ? value > tolerance : value < tolerance);
  }
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double seconds = 0.0;

  bool passed() const;
  std::string table() const;
};

GradcheckReport run_gradcheck(GradcheckScale scale, std::uint64_t seed = 1234);

}  // namespace dcml

#endif  // DCML_GRADCHECK_HPP_
