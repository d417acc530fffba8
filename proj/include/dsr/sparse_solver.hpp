#pragma once

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <type_traits>
#include <stdexcept>
#include <vector>

#include "dsr/feature_map.hpp"
#include "dsr/parallel.hpp"
#include "dsr/types.hpp"

namespace dsr {

inline constexpr double kDefaultBeta = 0.4;

struct SolverOptions {
  double tol_kkt = 1e-8;
  int max_iters = 1000;
};

/// min_w 1/2 ||target - dictionary * w||^2 + beta ||w||_1, dictionary atoms as columns.
template <typename Scalar>
struct LassoProblem {
  Matrix<Scalar> dictionary;
  Vector<Scalar> target;
  Scalar beta = Scalar(kDefaultBeta);

  Index atoms() const { return dictionary.cols(); }

  void validate() const {
    if (dictionary.cols() < 1) throw std::invalid_argument("lasso dictionary has no atoms");
    if (dictionary.rows() != target.size()) {
      throw std::invalid_argument("lasso target length does not match dictionary rows");
    }
    if (!dictionary.allFinite() || !target.allFinite()) {
      throw std::invalid_argument("lasso problem contains non-finite values");
    }
    if (!(beta >= Scalar(0))) throw std::invalid_argument("lasso beta must be nonnegative");
  }
};

template <typename Scalar>
struct SparseCode {
  Vector<Scalar> coefficients;
  std::vector<Index> active_set;
  Scalar residual = 0;  // ||target - dictionary * w||^2
  Scalar objective = 0;
  int iterations = 0;
  bool converged = false;
};

/// One sparse code per probe block; the dense view is the M x N matrix W.
template <typename Scalar>
struct CodeMatrix {
  std::vector<SparseCode<Scalar>> columns;

  Index rows() const { return columns.empty() ? 0 : columns.front().coefficients.size(); }
  Index cols() const { return static_cast<Index>(columns.size()); }

  bool all_converged() const {
    return std::all_of(columns.begin(), columns.end(), [](const auto& c) { return c.converged; });
  }

  Matrix<Scalar> dense() const {
    Matrix<Scalar> w(rows(), cols());
    for (Index n = 0; n < cols(); ++n) w.col(n) = columns[static_cast<size_t>(n)].coefficients;
    return w;
  }

  Scalar mean_active() const {
    if (columns.empty()) return 0;
    Scalar total = 0;
    for (const auto& c : columns) total += static_cast<Scalar>(c.active_set.size());
    return total / static_cast<Scalar>(columns.size());
  }
};

namespace detail {

template <typename Scalar>
void check_code_length(const LassoProblem<Scalar>& problem, const Vector<Scalar>& w) {
  if (w.size() != problem.atoms()) {
    throw std::invalid_argument("coefficient vector length does not match dictionary atoms");
  }
}

template <typename Scalar>
std::vector<Index> nonzero_indices(const Vector<Scalar>& w) {
  std::vector<Index> idx;
  for (Index i = 0; i < w.size(); ++i) {
    if (w(i) != Scalar(0)) idx.push_back(i);
  }
  return idx;
}

template <typename Scalar>
Scalar sign(Scalar v) {
  return static_cast<Scalar>((Scalar(0) < v) - (v < Scalar(0)));
}

template <typename Scalar>
Scalar soft_threshold(Scalar v, Scalar t) {
  return sign(v) * std::max(std::abs(v) - t, Scalar(0));
}

template <typename Scalar>
Scalar kkt_violation(const Vector<Scalar>& grad, const Vector<Scalar>& w, Scalar beta) {
  Scalar worst = 0;
  for (Index i = 0; i < w.size(); ++i) {
    const Scalar v = w(i) != Scalar(0) ? std::abs(grad(i) + beta * sign(w(i)))
                                       : std::max(std::abs(grad(i)) - beta, Scalar(0));
    worst = std::max(worst, v);
  }
  return worst;
}

/// Index of the first atom bitwise equal to the (nonzero) target, or -1.
template <typename Scalar, typename Target>
Index exact_atom(const Matrix<Scalar>& dictionary, const Target& target) {
  if (target.isZero(0)) return -1;
  for (Index j = 0; j < dictionary.cols(); ++j) {
    if ((dictionary.col(j).array() == target.array()).all()) return j;
  }
  return -1;
}

template <typename Scalar>
struct ActiveStep {
  Vector<Scalar> point;      // minimizer of the sign-restricted quadratic
  Vector<Scalar> direction;  // set instead when that quadratic is unbounded below
};

/// Minimizes 1/2 w'Gw - rhs'w for the active Gram block G. When G is
/// singular (dependent or duplicate atoms) the minimum-norm minimizer is
/// used; if rhs has a component in the null space the quadratic is
/// unbounded and that component is returned as a descent direction.
template <typename Scalar>
ActiveStep<Scalar> solve_active(const Matrix<Scalar>& gram_aa, const Vector<Scalar>& rhs) {
  ActiveStep<Scalar> step;
  // Cholesky when every pivot is comfortably nonzero; otherwise decide the
  // rank with a complete orthogonal decomposition.
  Eigen::LLT<Matrix<Scalar>> llt(gram_aa);
  if (llt.info() == Eigen::Success) {
    const auto pivots = llt.matrixLLT().diagonal().array().square();
    if (pivots.minCoeff() > Scalar(1e-10) * pivots.maxCoeff()) {
      step.point = llt.solve(rhs);
      step.point += llt.solve(rhs - gram_aa * step.point);
      if (!step.point.allFinite()) throw NumericError("non-finite coefficients in active-set solve");
      return step;
    }
  }
  Eigen::CompleteOrthogonalDecomposition<Matrix<Scalar>> cod;
  cod.setThreshold(Scalar(1e-12));
  cod.compute(gram_aa);
  if (cod.rank() == gram_aa.rows()) {
    Eigen::LDLT<Matrix<Scalar>> ldlt(gram_aa);
    step.point = ldlt.solve(rhs);
    step.point += ldlt.solve(rhs - gram_aa * step.point);
  } else {
    step.point = cod.solve(rhs);
    step.point += cod.solve(rhs - gram_aa * step.point);
    Vector<Scalar> null_part = rhs - gram_aa * step.point;
    const Scalar scale = std::max(Scalar(1), rhs.norm());
    if (null_part.norm() > Scalar(1e-9) * scale) step.direction = std::move(null_part);
  }
  if (!step.point.allFinite()) throw NumericError("non-finite coefficients in active-set solve");
  return step;
}

/// Feature-sign search on the Gram form 1/2 w'Gw - c'w + beta|w|_1 where
/// G = Y'Y and c = Y'x. Lowest index wins ties when picking the entering atom.
template <typename Scalar>
SparseCode<Scalar> feature_sign_gram(const Matrix<Scalar>& gram, Eigen::Ref<const Vector<Scalar>> corr,
                                     Scalar beta, const SolverOptions& opts) {
  const Index m = gram.rows();
  const Scalar enter_tol = Scalar(0.1 * opts.tol_kkt);
  Vector<Scalar> w = Vector<Scalar>::Zero(m);
  Vector<Scalar> theta = Vector<Scalar>::Zero(m);  // sign(w), kept in step with w
  Vector<Scalar> g(m);
  std::vector<Index> active;
  SparseCode<Scalar> code;

  int iters = 0;
  bool stalled = false;
  while (iters < opts.max_iters && !stalled) {
    g.noalias() = -corr;
    for (Index k : active) g.noalias() += gram.col(k) * w(k);
    Index enter = -1;
    Scalar best = beta + enter_tol;
    for (Index i = 0; i < m; ++i) {
      if (w(i) == Scalar(0) && std::abs(g(i)) > best) {
        best = std::abs(g(i));
        enter = i;
      }
    }
    if (enter < 0) break;

    theta(enter) = g(enter) > 0 ? Scalar(-1) : Scalar(1);
    active.insert(std::lower_bound(active.begin(), active.end(), enter), enter);

    while (iters < opts.max_iters) {
      ++iters;
      const Index k = static_cast<Index>(active.size());
      Matrix<Scalar> gram_aa(k, k);
      Vector<Scalar> rhs(k), cur(k), th(k);
      for (Index a = 0; a < k; ++a) {
        const Index ia = active[static_cast<size_t>(a)];
        for (Index b = 0; b < k; ++b) gram_aa(a, b) = gram(ia, active[static_cast<size_t>(b)]);
        rhs(a) = corr(ia) - beta * theta(ia);
        cur(a) = w(ia);
        th(a) = theta(ia);
      }
      ActiveStep<Scalar> solved = solve_active(gram_aa, rhs);
      if (solved.direction.size() > 0) {
        // Unbounded along the null direction inside the current orthant:
        // follow it until the first coefficient reaches zero, then drop it.
        const Vector<Scalar>& v = solved.direction;
        Scalar reach = std::numeric_limits<Scalar>::infinity();
        Index hit = -1;
        for (Index a = 0; a < k; ++a) {
          if (th(a) * v(a) < Scalar(0)) {
            const Scalar s = std::abs(cur(a)) / std::abs(v(a));
            if (s < reach) {
              reach = s;
              hit = a;
            }
          }
        }
        if (hit < 0 || reach == Scalar(0)) {
          stalled = true;
          break;
        }
        std::vector<Index> kept;
        for (Index a = 0; a < k; ++a) {
          const Index ia = active[static_cast<size_t>(a)];
          w(ia) = a == hit ? Scalar(0) : cur(a) + reach * v(a);
          theta(ia) = sign(w(ia));
          if (w(ia) != Scalar(0)) kept.push_back(ia);
        }
        active.swap(kept);
        continue;
      }
      const Vector<Scalar>& target = solved.point;

      bool consistent = true;
      for (Index a = 0; a < k; ++a) consistent = consistent && sign(target(a)) == th(a);
      if (consistent) {
        for (Index a = 0; a < k; ++a) w(active[static_cast<size_t>(a)]) = target(a);
        break;
      }

      // Discrete line search over the segment cur -> target: the end point
      // and every point where a nonzero coefficient crosses zero.
      const Vector<Scalar> step = target - cur;
      Vector<Scalar> corr_a(k);
      for (Index a = 0; a < k; ++a) corr_a(a) = corr(active[static_cast<size_t>(a)]);
      const Scalar lin = step.dot(gram_aa * cur - corr_a);
      const Scalar quad = Scalar(0.5) * step.dot(gram_aa * step);
      auto f = [&](Scalar t) { return lin * t + quad * t * t + beta * (cur + t * step).template lpNorm<1>(); };

      std::vector<Scalar> candidates{Scalar(1)};
      for (Index a = 0; a < k; ++a) {
        if (cur(a) != Scalar(0) && sign(target(a)) != sign(cur(a))) {
          candidates.push_back(cur(a) / (cur(a) - target(a)));
        }
      }
      std::sort(candidates.begin(), candidates.end());
      Scalar best_t = 0, best_f = f(Scalar(0));
      for (Scalar t : candidates) {
        if (!(t > Scalar(0)) || t > Scalar(1)) continue;
        const Scalar ft = f(t);
        if (ft < best_f) {
          best_f = ft;
          best_t = t;
        }
      }
      if (best_t == Scalar(0)) {
        stalled = true;
        break;
      }

      Vector<Scalar> next = cur + best_t * step;
      for (Index a = 0; a < k; ++a) {
        if (cur(a) != Scalar(0) && sign(target(a)) != sign(cur(a)) &&
            cur(a) / (cur(a) - target(a)) == best_t) {
          next(a) = 0;
        }
        if (best_t == Scalar(1) && target(a) == Scalar(0)) next(a) = 0;
      }
      std::vector<Index> kept;
      for (Index a = 0; a < k; ++a) {
        const Index ia = active[static_cast<size_t>(a)];
        w(ia) = next(a);
        theta(ia) = sign(next(a));
        if (next(a) != Scalar(0)) kept.push_back(ia);
      }
      active.swap(kept);
    }
  }
  for (Index i = 0; i < m; ++i) {
    if (w(i) != Scalar(0) && std::find(active.begin(), active.end(), i) == active.end()) w(i) = 0;
  }
  if (!w.allFinite()) throw NumericError("feature-sign search produced non-finite coefficients");
  code.coefficients = std::move(w);
  code.active_set = nonzero_indices(code.coefficients);
  code.iterations = iters;
  return code;
}

}  // namespace detail

/// 1/2 ||x - Y w||^2 + beta ||w||_1.
template <typename Scalar>
Scalar objective(const LassoProblem<Scalar>& problem, const std::type_identity_t<Vector<Scalar>>& w) {
  detail::check_code_length(problem, w);
  return Scalar(0.5) * (problem.target - problem.dictionary * w).squaredNorm() +
         problem.beta * w.template lpNorm<1>();
}

/// Largest violation of the lasso optimality conditions at w.
template <typename Scalar>
Scalar kkt_residual(const LassoProblem<Scalar>& problem, const std::type_identity_t<Vector<Scalar>>& w) {
  detail::check_code_length(problem, w);
  const Vector<Scalar> grad = problem.dictionary.transpose() * (problem.dictionary * w - problem.target);
  return detail::kkt_violation(grad, w, problem.beta);
}

namespace detail {

template <typename Scalar>
void finish_code(const LassoProblem<Scalar>& problem, SparseCode<Scalar>& code, const SolverOptions& opts) {
  code.residual = (problem.target - problem.dictionary * code.coefficients).squaredNorm();
  code.objective = objective(problem, code.coefficients);
  code.converged = kkt_residual(problem, code.coefficients) <= Scalar(opts.tol_kkt);
}

template <typename Scalar>
SparseCode<Scalar> unit_code(Index atoms, Index j) {
  SparseCode<Scalar> code;
  code.coefficients = Vector<Scalar>::Zero(atoms);
  code.coefficients(j) = 1;
  code.active_set = {j};
  return code;
}

}  // namespace detail

/// Active-set lasso solver. On non-convergence within opts.max_iters the
/// best iterate is returned with converged == false.
template <typename Scalar>
SparseCode<Scalar> feature_sign_search(const LassoProblem<Scalar>& problem,
                                       const SolverOptions& opts = {}) {
  problem.validate();
  SparseCode<Scalar> code;
  // Unpenalized and the target is itself an atom: e_j reconstructs it exactly.
  const Index same = problem.beta == Scalar(0) ? detail::exact_atom(problem.dictionary, problem.target) : -1;
  if (same >= 0) {
    code = detail::unit_code<Scalar>(problem.atoms(), same);
  } else {
    const Matrix<Scalar> gram = problem.dictionary.transpose() * problem.dictionary;
    const Vector<Scalar> corr = problem.dictionary.transpose() * problem.target;
    code = detail::feature_sign_gram<Scalar>(gram, corr, problem.beta, opts);
  }
  detail::finish_code(problem, code, opts);
  return code;
}

/// Cyclic coordinate descent with soft-thresholding, run until one sweep
/// lowers the objective by less than tol. Test oracle only.
template <typename Scalar>
SparseCode<Scalar> coordinate_descent_oracle(const LassoProblem<Scalar>& problem, Scalar tol,
                                             long max_sweeps = 2'000'000) {
  problem.validate();
  const Matrix<Scalar>& y = problem.dictionary;
  const Index m = y.cols();
  const Vector<Scalar> sq = y.colwise().squaredNorm().transpose();
  Vector<Scalar> w = Vector<Scalar>::Zero(m);
  Vector<Scalar> residual = problem.target;
  auto obj = [&] { return Scalar(0.5) * residual.squaredNorm() + problem.beta * w.template lpNorm<1>(); };

  SparseCode<Scalar> code;
  Scalar prev = obj();
  long sweep = 0;
  while (sweep < max_sweeps) {
    ++sweep;
    for (Index j = 0; j < m; ++j) {
      if (sq(j) == Scalar(0)) continue;
      const Scalar rho = y.col(j).dot(residual) + sq(j) * w(j);
      const Scalar next = detail::soft_threshold(rho, problem.beta) / sq(j);
      if (next != w(j)) {
        residual -= (next - w(j)) * y.col(j);
        w(j) = next;
      }
    }
    const Scalar cur = obj();
    if (prev - cur < tol) {
      code.converged = true;
      break;
    }
    prev = cur;
  }
  code.coefficients = std::move(w);
  code.active_set = detail::nonzero_indices(code.coefficients);
  code.iterations = static_cast<int>(std::min<long>(sweep, std::numeric_limits<int>::max()));
  code.objective = objective(problem, code.coefficients);
  return code;
}

/// Gallery atoms with their Gram matrix, computed once and shared by every
/// probe block coded against them.
template <typename Scalar>
struct Dictionary {
  Matrix<Scalar> atoms;
  Matrix<Scalar> gram;

  Dictionary() = default;
  explicit Dictionary(Matrix<Scalar> y) : atoms(std::move(y)), gram(atoms.transpose() * atoms) {
    if (atoms.cols() == 0) throw std::invalid_argument("gallery has no blocks");
    if (!atoms.allFinite()) throw std::invalid_argument("gallery blocks contain non-finite values");
  }

  Index channels() const { return atoms.rows(); }
  Index size() const { return atoms.cols(); }
};

/// Sparse-codes every column of `probe` against the dictionary. Columns are
/// independent problems, so the result does not depend on `workers`.
template <typename Scalar>
CodeMatrix<Scalar> solve_batch(const Dictionary<Scalar>& dict, const Matrix<Scalar>& probe, Scalar beta,
                               const SolverOptions& opts = {}, int workers = 1) {
  if (dict.size() == 0) throw std::invalid_argument("gallery has no blocks");
  if (dict.channels() != probe.rows()) throw std::invalid_argument("probe and gallery channel counts differ");
  if (!(beta >= Scalar(0))) throw std::invalid_argument("lasso beta must be nonnegative");
  const Matrix<Scalar>& y = dict.atoms;

  const Matrix<Scalar> corr = y.transpose() * probe;
  CodeMatrix<Scalar> codes;
  codes.columns.resize(static_cast<size_t>(probe.cols()));
  parallel_for(probe.cols(), workers, [&](Index n) {
    const auto x = probe.col(n);
    const Index same = beta == Scalar(0) ? detail::exact_atom(y, x) : -1;
    SparseCode<Scalar> code = same >= 0 ? detail::unit_code<Scalar>(y.cols(), same)
                                        : detail::feature_sign_gram<Scalar>(dict.gram, corr.col(n), beta, opts);
    // Residual and gradient through the active atoms only.
    const std::vector<Index> act = detail::nonzero_indices(code.coefficients);
    Vector<Scalar> r = x;
    Vector<Scalar> grad = -corr.col(n);
    for (Index j : act) {
      r.noalias() -= y.col(j) * code.coefficients(j);
      grad.noalias() += dict.gram.col(j) * code.coefficients(j);
    }
    code.residual = r.squaredNorm();
    code.objective = Scalar(0.5) * code.residual + beta * code.coefficients.template lpNorm<1>();
    code.converged = detail::kkt_violation(grad, code.coefficients, beta) <= Scalar(opts.tol_kkt);
    codes.columns[static_cast<size_t>(n)] = std::move(code);
  });
  return codes;
}

template <typename Scalar>
CodeMatrix<Scalar> solve_batch(const BlockSet<Scalar>& gallery, const BlockSet<Scalar>& probe,
                               Scalar beta, const SolverOptions& opts = {}, int workers = 1) {
  if (gallery.empty()) throw std::invalid_argument("gallery has no blocks");
  if (gallery.channels() != probe.channels()) {
    throw std::invalid_argument("probe and gallery channel counts differ");
  }
  return solve_batch(Dictionary<Scalar>(gallery.matrix()), probe.matrix(), beta, opts, workers);
}

}  // namespace dsr
