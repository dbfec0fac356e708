// Copyright 2026 The latentdp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Unlearning updates for replaced training records: the first-order
// gradient-difference step, the second-order (Newton / influence) step,
// the inverse-Hessian solver and the retraining oracle.

#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "latentdp/error.hpp"
#include "latentdp/models.hpp"

namespace latentdp {

// Row i of `replacements` is the new version of row i of `originals`.
struct UnlearnRequest {
  SampleSet originals;
  SampleSet replacements;
  double unlearning_rate = 0.0;  // first-order step size

  Eigen::Index size() const { return originals.size(); }
};

enum class SolverMethod { kDirectCholesky, kConjugateGradient };

inline const char* to_string(SolverMethod m) {
  return m == SolverMethod::kDirectCholesky ? "direct_cholesky" : "conjugate_gradient";
}

struct SolverConfig {
  SolverMethod method = SolverMethod::kDirectCholesky;
  double tolerance = 1e-10;  // on |H v - rhs| / max(1, |rhs|)
  int max_iterations = 1000;
  double damping = 1e-6;

  void validate() const {
    detail::require(tolerance > 0.0, "SolverConfig: tolerance must be > 0");
    detail::require(max_iterations >= 1, "SolverConfig: max_iterations must be >= 1");
    detail::require(damping >= 0.0, "SolverConfig: damping must be >= 0");
  }

  friend bool operator==(const SolverConfig&, const SolverConfig&) = default;
};

// Picks Cholesky for small systems and CG above `dense_threshold`.
inline SolverConfig default_solver_for(Eigen::Index parameter_count, Eigen::Index dense_threshold = 512) {
  SolverConfig config;
  config.method = parameter_count <= dense_threshold ? SolverMethod::kDirectCholesky
                                                     : SolverMethod::kConjugateGradient;
  return config;
}

struct SolveResult {
  Eigen::VectorXd solution;
  double residual_norm = 0.0;
  int iterations = 0;
};

namespace detail {

inline void check_request(const Model& model, const UnlearnRequest& request) {
  if (request.originals.size() != request.replacements.size()) {
    throw DimensionMismatch("unlearn: originals and replacements differ in length (" +
                          std::to_string(request.originals.size()) + " vs " +
                          std::to_string(request.replacements.size()) + ")");
  }
  for (const SampleSet* s : {&request.originals, &request.replacements}) {
    if (s->empty()) continue;
    check_input(model, s->inputs.cols());
    check_target(model, s->targets.cols());
  }
}

// Sum of per-example gradients, accumulated in a fixed pairwise order so
// the result does not depend on how the work is scheduled.
inline Eigen::VectorXd gradient_sum(const Model& model, const SampleSet& data, Eigen::Index begin,
                                    Eigen::Index end) {
  if (end - begin == 0) return Eigen::VectorXd::Zero(model.parameters.size());
  if (end - begin == 1) {
    const Eigen::VectorXd x = data.inputs.row(begin).transpose();
    const Eigen::VectorXd y = data.targets.row(begin).transpose();
    return loss_grad(model, x, y);
  }
  const Eigen::Index mid = begin + (end - begin) / 2;
  return gradient_sum(model, data, begin, mid) + gradient_sum(model, data, mid, end);
}

}  // namespace detail

// sum_{replacements} grad L(x~, w*) - sum_{originals} grad L(x, w*).
inline GradientVector gradient_difference(const Model& model, const UnlearnRequest& request) {
  detail::check_request(model, request);
  return detail::gradient_sum(model, request.replacements, 0, request.replacements.size()) -
         detail::gradient_sum(model, request.originals, 0, request.originals.size());
}

// w* - eta * gradient_difference. The input model is not modified.
inline Model first_order_update(const Model& model, const UnlearnRequest& request) {
  detail::require(request.unlearning_rate > 0.0 && std::isfinite(request.unlearning_rate),
                  "first_order_update: unlearning_rate must be > 0");
  Model updated = model;
  updated.parameters -= request.unlearning_rate * gradient_difference(model, request);
  return updated;
}

// Solves H v = rhs. Cholesky factorizes the materialized operator; CG only
// touches it through matrix-vector products.
inline SolveResult hvp_solve(const HessianOperator& hessian, const Eigen::VectorXd& rhs,
                             const SolverConfig& solver) {
  solver.validate();
  if (rhs.size() != hessian.dim()) throw DimensionMismatch("hvp_solve: rhs dimension mismatch");
  SolveResult result;
  if (solver.method == SolverMethod::kDirectCholesky) {
    const Eigen::MatrixXd h = hessian.to_dense();
    const Eigen::LLT<Eigen::MatrixXd> llt(h);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("hvp_solve: Cholesky failed, Hessian is not positive definite "
                           "(increase damping)");
    }
    result.solution = llt.solve(rhs);
    result.residual_norm = (h * result.solution - rhs).norm();
    result.iterations = 1;
    if (!(result.residual_norm <= solver.tolerance * std::max(1.0, rhs.norm()))) {
      throw NotConverged("hvp_solve: Cholesky residual above tolerance", result.residual_norm);
    }
    return result;
  }

  Eigen::VectorXd x = Eigen::VectorXd::Zero(rhs.size());
  Eigen::VectorXd r = rhs;
  Eigen::VectorXd d = r;
  double rr = r.squaredNorm();
  const double target = solver.tolerance * std::max(1.0, rhs.norm());
  int it = 0;
  while (std::sqrt(rr) > target && it < solver.max_iterations) {
    const Eigen::VectorXd hd = hessian.apply(d);
    const double curvature = d.dot(hd);
    if (!(curvature > 0.0)) {
      throw NumericalError("hvp_solve: non-positive curvature in CG (increase damping)");
    }
    const double step = rr / curvature;
    x += step * d;
    r -= step * hd;
    const double rr_next = r.squaredNorm();
    d = r + (rr_next / rr) * d;
    rr = rr_next;
    ++it;
    // Refresh the recursive residual periodically to limit drift.
    if (it % 50 == 0) {
      r = rhs - hessian.apply(x);
      rr = r.squaredNorm();
    }
  }
  result.solution = std::move(x);
  result.residual_norm = (hessian.apply(result.solution) - rhs).norm();
  result.iterations = it;
  if (result.residual_norm > target) {
    throw NotConverged("hvp_solve: CG did not converge in " + std::to_string(it) +
                           " iterations (residual " + std::to_string(result.residual_norm) + ")",
                       result.residual_norm);
  }
  return result;
}

// w* - H^{-1} gradient_difference, with H the Hessian of the full training
// objective at w*. `training_set` is the data the updated model should fit,
// i.e. the training set with the replacements applied; for quadratic losses
// this makes the step land exactly on the retrained optimum.
inline Model second_order_update(const Model& model, const UnlearnRequest& request,
                                 const SolverConfig& solver, const SampleSet& training_set) {
  const GradientVector diff = gradient_difference(model, request);
  Model updated = model;
  if (diff.isZero(0.0)) return updated;
  HessianOptions options;
  if (solver.method == SolverMethod::kConjugateGradient) options.dense_threshold = 0;
  const HessianOperator h = hessian(model, training_set, solver.damping, options);
  updated.parameters -= hvp_solve(h, diff, solver).solution;
  return updated;
}

// Trains `spec` from scratch on the post-replacement data.
inline Model retrain_oracle(const Model& spec, const SampleSet& data_after, const TrainOptions& options = {}) {
  return train(spec, data_after, options).model;
}

// Applies a request to a training set: every row equal to originals[i] is
// replaced by replacements[i]. Rows are matched exactly.
inline SampleSet apply_replacements(const SampleSet& data, const UnlearnRequest& request) {
  SampleSet out = data;
  for (Eigen::Index i = 0; i < request.size(); ++i) {
    bool found = false;
    for (Eigen::Index r = 0; r < out.size(); ++r) {
      if (out.inputs.row(r) == request.originals.inputs.row(i) &&
          out.targets.row(r) == request.originals.targets.row(i)) {
        out.inputs.row(r) = request.replacements.inputs.row(i);
        out.targets.row(r) = request.replacements.targets.row(i);
        found = true;
        break;
      }
    }
    if (!found) throw InvalidArgument("apply_replacements: original record " + std::to_string(i) + " not in data");
  }
  return out;
}

}  // namespace latentdp
