#include "kldr/pseudotrue.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "kldr/linalg.hpp"

namespace kldr::pseudotrue {

using linalg::inv_sqrt_psd;
using linalg::sqrt_psd;
using linalg::symmetrize;

MatrixXd omega_matrix(const AutocorrSeq& acs, double a, double eta) {
  require(std::abs(a) <= 1.0 + 1e-12 && eta >= -1e-12 && eta <= 1.0 + 1e-12,
          errc::invalid_argument, "omega_matrix arguments outside [-1,1] x [0,1]");
  const int n = acs.n();
  if (eta >= 1.0) return MatrixXd::Zero(n, n);
  const double denom = 1.0 - a * a * eta * eta;  // >= 1 - eta^2 > 0 here
  MatrixXd lag_sum = MatrixXd::Zero(n, n);
  double w = a;  // a^tau eta^{tau-1}, starting at tau = 1
  for (int l = 1; l <= acs.max_lag(); ++l) {
    if (std::abs(w) < 1e-17) break;
    lag_sum += w * acs.c(l);
    w *= a * eta;
  }
  MatrixXd omega = (2.0 * (1.0 - eta) * (1.0 - a * a * eta) / denom) * lag_sum;
  omega.diagonal().array() -= a * a * (1.0 - eta) * (1.0 - eta) / denom;
  return symmetrize(omega);
}

namespace {

struct Candidate {
  double value = 0.0;
  double a = 0.0;
  double eta = 0.0;
};

struct GradientEval {
  double value = 0.0;
  double grad_a = 0.0;
  double grad_eta = 0.0;
  double gap = 0.0;
};

// Value and first derivatives of lambda_max(Omega(a, eta)). The derivative of a
// simple extremal eigenvalue is u' (dOmega) u with u the unit eigenvector.
GradientEval objective_gradient(const AutocorrSeq& acs, double a, double eta) {
  const int n = acs.n();
  const double denom = 1.0 - a * a * eta * eta;
  const double f = a * a * (1.0 - eta) * (1.0 - eta) / denom;
  const double c = 2.0 * (1.0 - eta) * (1.0 - a * a * eta) / denom;
  const double f_a = 2.0 * a * (1.0 - eta) * (1.0 - eta) / (denom * denom);
  const double f_eta =
      -2.0 * a * a * (1.0 - eta) * (1.0 - a * a * eta) / (denom * denom);
  const double c_a = -4.0 * a * eta * (1.0 - eta) * (1.0 - eta) / (denom * denom);
  const double c_eta = (-2.0 * (1.0 + a * a - 2.0 * a * a * eta) * denom +
                        4.0 * a * a * eta * (1.0 - eta) * (1.0 - a * a * eta)) /
                       (denom * denom);

  MatrixXd s = MatrixXd::Zero(n, n);
  MatrixXd s_a = MatrixXd::Zero(n, n);
  MatrixXd s_eta = MatrixXd::Zero(n, n);
  double a_pow = 1.0;    // a^{tau-1}
  double eta_pow = 1.0;  // eta^{tau-1}
  double eta_low = 0.0;  // eta^{tau-2}, zero-weighted at tau = 1
  for (int tau = 1; tau <= acs.max_lag(); ++tau) {
    const double w = a * a_pow * eta_pow;
    const double w_a = tau * a_pow * eta_pow;
    const double w_eta = (tau - 1) * a * a_pow * eta_low;
    if (std::abs(w) < 1e-18 && std::abs(w_a) < 1e-18 && std::abs(w_eta) < 1e-18) break;
    const MatrixXd& cl = acs.c(tau);
    s += w * cl;
    s_a += w_a * cl;
    s_eta += w_eta * cl;
    eta_low = eta_pow;
    a_pow *= a;
    eta_pow *= eta;
  }

  MatrixXd omega = c * s;
  omega.diagonal().array() -= f;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(omega));
  const VectorXd u = es.eigenvectors().col(n - 1);

  GradientEval out;
  out.value = es.eigenvalues()(n - 1);
  out.gap = n > 1 ? out.value - es.eigenvalues()(n - 2)
                  : std::numeric_limits<double>::infinity();
  const double usu = u.dot(s * u);
  out.grad_a = -f_a + c_a * usu + c * u.dot(s_a * u);
  out.grad_eta = -f_eta + c_eta * usu + c * u.dot(s_eta * u);
  return out;
}

// Refines a near-optimal point to machine precision with Newton steps on the
// analytic gradient, treating eta = 0 as an active bound when its multiplier
// points outward. Returns the input unchanged if the refinement cannot improve.
Candidate newton_polish(const AutocorrSeq& acs, Candidate start) {
  const double a_cap = 1.0 - 1e-12;
  const double eta_cap = 1.0 - 1e-10;
  if (start.eta >= eta_cap) return start;
  double a = std::clamp(start.a, -a_cap, a_cap);
  double eta = std::clamp(start.eta, 0.0, eta_cap);
  const double h = 1e-6;

  auto grad_at = [&](double pa, double pe) {
    return objective_gradient(acs, std::clamp(pa, -a_cap, a_cap),
                              std::clamp(pe, 0.0, eta_cap));
  };

  for (int iter = 0; iter < 80; ++iter) {
    GradientEval g = grad_at(a, eta);
    if (g.gap < 1e-9) break;
    const bool eta_active = eta <= 1e-12 && g.grad_eta <= 0.0;
    double step_a = 0.0;
    double step_eta = 0.0;
    if (eta_active) {
      if (std::abs(g.grad_a) < 1e-13) break;
      const double haa =
          (grad_at(a + h, eta).grad_a - grad_at(a - h, eta).grad_a) / (2.0 * h);
      if (!(std::abs(haa) > 1e-12)) break;
      step_a = -g.grad_a / haa;
    } else {
      if (std::abs(g.grad_a) < 1e-13 && std::abs(g.grad_eta) < 1e-13) break;
      GradientEval gap_ = grad_at(a + h, eta);
      GradientEval gam = grad_at(a - h, eta);
      GradientEval gep = grad_at(a, eta + h);
      GradientEval gem = grad_at(a, std::max(eta - h, 0.0));
      const double eh = eta + h - std::max(eta - h, 0.0);
      Eigen::Matrix2d hess;
      hess << (gap_.grad_a - gam.grad_a) / (2.0 * h), (gep.grad_a - gem.grad_a) / eh,
          (gap_.grad_eta - gam.grad_eta) / (2.0 * h), (gep.grad_eta - gem.grad_eta) / eh;
      Eigen::Vector2d rhs(-g.grad_a, -g.grad_eta);
      Eigen::Vector2d step = hess.fullPivLu().solve(rhs);
      if (!step.allFinite()) break;
      step_a = step(0);
      step_eta = step(1);
    }
    const double scale = std::max(std::abs(step_a), std::abs(step_eta));
    if (scale > 0.02) {
      step_a *= 0.02 / scale;
      step_eta *= 0.02 / scale;
    }
    double next_a = std::clamp(a + step_a, -a_cap, a_cap);
    double next_eta = std::clamp(eta + step_eta, 0.0, eta_cap);
    if (next_a == a && next_eta == eta) break;
    a = next_a;
    eta = next_eta;
    if (std::abs(step_a) < 1e-15 && std::abs(step_eta) < 1e-15) break;
  }

  Candidate out{objective_gradient(acs, a, eta).value, a, eta};
  return out.value >= start.value - 1e-12 ? out : start;
}

// Ordering used both to pick refinement starts and to break ties among
// refined optima: larger value first, then smaller eta, then smaller |a|.
bool better(const Candidate& lhs, const Candidate& rhs) {
  if (lhs.value != rhs.value) return lhs.value > rhs.value;
  if (lhs.eta != rhs.eta) return lhs.eta < rhs.eta;
  if (std::abs(lhs.a) != std::abs(rhs.a)) return std::abs(lhs.a) < std::abs(rhs.a);
  return lhs.a < rhs.a;
}

}  // namespace

OmegaObjective omega_objective(const AutocovSeq& acv, int grid_a_count, int grid_eta_count,
                               double box_tol) {
  require(grid_a_count >= 3 && grid_eta_count >= 2, errc::invalid_argument,
          "objective grid is too coarse");
  require(box_tol > 0.0, errc::invalid_argument, "box tolerance must be positive");
  AutocorrSeq acs = procspec::autocorr(acv);

  Eigen::SelfAdjointEigenSolver<MatrixXd> es;
  auto lambda_max = [&](double a, double eta) {
    es.compute(omega_matrix(acs, a, eta), Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
  };

  OmegaObjective out;
  out.grid_a = VectorXd::LinSpaced(grid_a_count, -1.0, 1.0);
  out.grid_eta = VectorXd::LinSpaced(grid_eta_count, 0.0, 1.0);
  out.values.resize(grid_a_count, grid_eta_count);
  for (int i = 0; i < grid_a_count; ++i)
    for (int j = 0; j < grid_eta_count; ++j)
      out.values(i, j) = lambda_max(out.grid_a(i), out.grid_eta(j));

  std::vector<Candidate> cells;
  cells.reserve(static_cast<size_t>(grid_a_count) * grid_eta_count);
  for (int i = 0; i < grid_a_count; ++i)
    for (int j = 0; j < grid_eta_count; ++j)
      cells.push_back({out.values(i, j), out.grid_a(i), out.grid_eta(j)});
  std::sort(cells.begin(), cells.end(), better);

  auto polish = [&](Candidate c) {
    double step = std::max(out.grid_a(1) - out.grid_a(0), out.grid_eta(1) - out.grid_eta(0));
    int budget = 100000;
    while (step > box_tol && budget > 0) {
      Candidate best = c;
      const double moves[4][2] = {{c.a - step, c.eta}, {c.a + step, c.eta},
                                  {c.a, c.eta - step}, {c.a, c.eta + step}};
      for (const auto& mv : moves) {
        double a = std::clamp(mv[0], -1.0, 1.0);
        double eta = std::clamp(mv[1], 0.0, 1.0);
        if (a == c.a && eta == c.eta) continue;
        double v = lambda_max(a, eta);
        --budget;
        if (v > best.value) best = {v, a, eta};
      }
      if (best.value > c.value)
        c = best;
      else
        step *= 0.5;
    }
    return c;
  };

  const int starts = std::min<int>(5, static_cast<int>(cells.size()));
  std::vector<Candidate> refined;
  refined.reserve(static_cast<size_t>(starts));
  for (int k = 0; k < starts; ++k)
    refined.push_back(newton_polish(acs, polish(cells[static_cast<size_t>(k)])));

  double top = refined.front().value;
  for (const auto& c : refined) top = std::max(top, c.value);
  auto tie_less = [](const Candidate& x, const Candidate& y) {
    if (x.eta != y.eta) return x.eta < y.eta;
    if (std::abs(x.a) != std::abs(y.a)) return std::abs(x.a) < std::abs(y.a);
    return x.a < y.a;
  };
  Candidate chosen = refined.front();
  bool have = false;
  for (const auto& c : refined)
    if (c.value >= top - 1e-9 && (!have || tie_less(c, chosen))) {
      chosen = c;
      have = true;
    }
  out.argmax = {chosen.a, chosen.eta, chosen.value};
  return out;
}

OneStatePseudoTrue solve_one_state_general(const AutocovSeq& acv, int grid_a_count,
                                           int grid_eta_count) {
  OmegaObjective surface = omega_objective(acv, grid_a_count, grid_eta_count);
  AutocorrSeq acs = procspec::autocorr(acv);
  const double a = surface.argmax.a;
  const double eta = surface.argmax.eta;
  auto [lam, u] = linalg::top_eig_sym(omega_matrix(acs, a, eta));

  OneStatePseudoTrue sol;
  sol.a = a;
  sol.eta = eta;
  sol.lambda_max = surface.argmax.value;
  sol.u = u;
  sol.p = inv_sqrt_psd(acv.gammas.front()) * u;
  sol.q = sqrt_psd(acv.gammas.front()) * u;
  require(std::abs(a) <= 1.0 - 1e-8 || eta >= 1.0 - 1e-12, errc::numerical_failure,
          "one-state optimum at the persistence boundary with eta < 1");
  return sol;
}

OneStatePseudoTrue solve_one_state_exp_erg(const AutocovSeq& acv) {
  AutocorrSeq acs = procspec::autocorr(acv);
  auto report = procspec::check_exponential_ergodicity(acs);
  require(report.is_exp_ergodic, errc::not_exponentially_ergodic,
          "the process fails the exponential-ergodicity test; use the general solver");

  auto pairs = linalg::eig_by_magnitude(acs.c(1));
  const auto& top = pairs.front();
  OneStatePseudoTrue sol;
  sol.a = top.value;
  sol.eta = 0.0;
  sol.lambda_max = top.value * top.value;
  sol.u = top.vector;
  sol.p = inv_sqrt_psd(acv.gammas.front()) * sol.u;
  sol.q = sqrt_psd(acv.gammas.front()) * sol.u;
  for (size_t k = 1; k < pairs.size(); ++k) {
    bool same_magnitude =
        std::abs(std::abs(pairs[k].value) - std::abs(sol.a)) <= 1e-10 * std::max(1.0, std::abs(sol.a));
    if (same_magnitude && pairs[k].value * sol.a < 0.0) sol.a_sign_ambiguous = true;
  }
  return sol;
}

MioDStateModel solve_mio_d_state(const AutocovSeq& acv, int d) {
  require(d >= 1 && d <= acv.n(), errc::invalid_d,
          "d must lie between 1 and the observable dimension");
  require(acv.max_lag() >= 1, errc::invalid_argument,
          "need at least the lag-one autocovariance");
  double asym = linalg::asymmetry(acv.gammas[1]);
  if (asym >= 1e-8) {
    std::ostringstream msg;
    msg << "lag-one autocovariance must be symmetric; relative asymmetry is "
        << std::scientific << asym;
    fail(errc::asymmetric_gamma1, msg.str());
  }

  AutocorrSeq acs = procspec::autocorr(acv);
  auto pairs = linalg::eig_by_magnitude(acs.c(1));
  MatrixXd g0_sqrt = sqrt_psd(acv.gammas.front());
  MatrixXd g0_inv_sqrt = inv_sqrt_psd(acv.gammas.front());

  MioDStateModel out;
  out.components.reserve(static_cast<size_t>(d));
  for (int i = 0; i < d; ++i) {
    const auto& pair = pairs[static_cast<size_t>(i)];
    MioDStateModel::Component comp;
    comp.a = pair.value;
    comp.u = pair.vector;
    comp.p = g0_inv_sqrt * pair.vector;
    comp.q = g0_sqrt * pair.vector;
    out.components.push_back(std::move(comp));
  }
  return out;
}

StateSpaceModel to_state_space(const OneStatePseudoTrue& sol, const MatrixXd& gamma0) {
  const int n = static_cast<int>(gamma0.rows());
  require(gamma0.cols() == n && sol.u.size() == n, errc::invalid_argument,
          "solution and variance dimensions do not match");
  const double a = sol.a;
  const double eta = sol.eta;
  const double lam = sol.lambda_max;
  require(lam < 1.0, errc::invalid_solution, "objective value must be below one");

  MatrixXd g0_sqrt = sqrt_psd(gamma0);
  double load_sq = (1.0 - eta) * (1.0 - lam);
  require(load_sq >= -1e-12, errc::invalid_solution, "negative squared loading scale");
  double load = std::sqrt(std::max(load_sq, 0.0));

  MatrixXd A(1, 1);
  A << a;
  MatrixXd Q(1, 1);
  Q << 1.0 - a * a * eta;
  MatrixXd B = (load * (g0_sqrt * sol.u)).transpose();
  MatrixXd R = symmetrize(
      g0_sqrt *
      (MatrixXd::Identity(n, n) - (1.0 - eta + eta * lam) * sol.u * sol.u.transpose()) *
      g0_sqrt);

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(R);
  require(es.eigenvalues().minCoeff() >= -1e-10, errc::invalid_solution,
          "reconstructed observation covariance has a negative eigenvalue");
  MatrixXd R_psd = es.eigenvectors() *
                   es.eigenvalues().cwiseMax(0.0).asDiagonal() *
                   es.eigenvectors().transpose();
  return StateSpaceModel::make(std::move(A), std::move(B), std::move(Q),
                               symmetrize(R_psd));
}

namespace {

ReactionReport reaction_impl(const std::vector<double>& retained_a, const AutocovSeq& acv,
                             int lags) {
  require(lags >= 1, errc::invalid_argument, "lag count must be >= 1");
  auto decomp = procspec::decompose_persistence(acv);
  ReactionReport report;
  report.rows.reserve(decomp.components.size() * static_cast<size_t>(lags));
  for (size_t i = 0; i < decomp.components.size(); ++i) {
    const auto& comp = decomp.components[i];
    for (int l = 1; l <= lags; ++l) {
      ReactionRow row;
      row.component = static_cast<int>(i) + 1;
      row.lag = l;
      row.true_autocorr = comp.p.dot(acv.gamma(l) * comp.p);
      row.subjective_autocorr =
          i < retained_a.size() ? std::pow(std::abs(retained_a[i]), l) : 0.0;
      report.rows.push_back(row);
    }
  }
  return report;
}

}  // namespace

ReactionReport reaction_report(const OneStatePseudoTrue& sol, const AutocovSeq& acv,
                               int lags) {
  return reaction_impl({sol.a}, acv, lags);
}

ReactionReport reaction_report(const MioDStateModel& sol, const AutocovSeq& acv, int lags) {
  std::vector<double> retained;
  retained.reserve(sol.components.size());
  for (const auto& comp : sol.components) retained.push_back(comp.a);
  return reaction_impl(retained, acv, lags);
}

}  // namespace kldr::pseudotrue
