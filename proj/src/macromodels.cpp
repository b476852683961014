#include "kldr/macromodels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <sstream>

#include "kldr/linalg.hpp"
#include "kldr/pseudotrue.hpp"

namespace kldr::macromodels {

namespace {

using linalg::lyapunov;
using linalg::spectral_radius;
using linalg::symmetrize;
using procspec::AutocovSeq;
using procspec::LatentVarProcess;
using ssm::OneStatePseudoTrue;

constexpr double kStabilityMargin = 1e-9;
// Equilibrium observable variances may be singular by construction; the
// solvers rank-reduce before any inversion, so conditioning caps are waived.
constexpr double kInfiniteCap = std::numeric_limits<double>::infinity();

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// Closed-form one-state solution from the first two autocovariances, valid
// under exponential ergodicity: a is the eigenvalue of C_1 largest in
// magnitude, eta = 0, and (p, q) come from the matching unit eigenvector.
// Rank-deficient Gamma_0 is handled by solving in the positive-variance
// coordinates and lifting back, which leaves the forecast map unchanged.
OneStatePseudoTrue one_state_from_c1(const MatrixXd& gamma0, const MatrixXd& gamma1) {
  const MatrixXd g0 = symmetrize(gamma0);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(g0);
  require(es.info() == Eigen::Success, errc::numerical_failure,
          "eigen decomposition of the state variance failed");
  const VectorXd lam = es.eigenvalues();
  const double lam_max = lam.maxCoeff();
  require(lam_max > 0.0, errc::singular_gamma0, "state variance is zero");
  std::vector<int> keep;
  for (int i = 0; i < lam.size(); ++i)
    if (lam(i) > 1e-12 * lam_max) keep.push_back(i);
  const int r = static_cast<int>(keep.size());
  MatrixXd v(g0.rows(), r);
  VectorXd half(r);
  for (int i = 0; i < r; ++i) {
    v.col(i) = es.eigenvectors().col(keep[i]);
    half(i) = std::sqrt(lam(keep[i]));
  }
  const MatrixXd g1r = v.transpose() * symmetrize(gamma1) * v;
  MatrixXd c1 = g1r;
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) c1(i, j) /= half(i) * half(j);
  const auto pairs = linalg::eig_by_magnitude(symmetrize(c1));
  const double a = pairs.front().value;
  const VectorXd ur = pairs.front().vector;

  OneStatePseudoTrue sol;
  sol.a = a;
  sol.eta = 0.0;
  sol.lambda_max = a * a;
  sol.u = v * ur;
  sol.p = v * (ur.array() / half.array()).matrix();
  sol.q = v * (ur.array() * half.array()).matrix();
  sol.a_sign_ambiguous =
      pairs.size() > 1 && std::abs(std::abs(pairs[1].value) - std::abs(a)) < 1e-10 &&
      pairs[1].value * a < 0.0;
  return sol;
}

// Flip (u, p, q) jointly so that coordinate `idx` of q (or of p) is positive.
void orient_solution(OneStatePseudoTrue& sol, int idx, bool on_q) {
  const VectorXd& ref = on_q ? sol.q : sol.p;
  if (idx < ref.size() && ref(idx) < 0.0) {
    sol.u = -sol.u;
    sol.p = -sol.p;
    sol.q = -sol.q;
  }
}

struct FixedPointRun {
  VectorXd x;
  double residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  std::vector<double> residual_path;
};

FixedPointRun damped_fixed_point(const VectorXd& start,
                                 const std::function<VectorXd(const VectorXd&)>& map,
                                 double damping, double tol, int max_iter) {
  FixedPointRun run;
  run.x = start;
  for (int it = 0; it < max_iter; ++it) {
    const VectorXd next = map(run.x);
    const double res = (next - run.x).cwiseAbs().maxCoeff();
    if (run.residual_path.size() < 64 || it % 100 == 0) run.residual_path.push_back(res);
    run.residual = res;
    run.iterations = it + 1;
    if (res < tol) {
      run.converged = true;
      return run;
    }
    run.x = (1.0 - damping) * run.x + damping * next;
  }
  return run;
}

VectorXd nelder_mead(const std::function<double(const VectorXd&)>& f, const VectorXd& x0,
                     double scale, int max_iter, double ftol) {
  const int n = static_cast<int>(x0.size());
  std::vector<VectorXd> pts(n + 1, x0);
  std::vector<double> vals(n + 1);
  for (int i = 0; i < n; ++i) pts[i + 1](i) += scale * std::max(1.0, std::abs(x0(i)));
  for (int i = 0; i <= n; ++i) vals[i] = f(pts[i]);
  for (int it = 0; it < max_iter; ++it) {
    std::vector<int> order(n + 1);
    for (int i = 0; i <= n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) { return vals[a] < vals[b]; });
    std::vector<VectorXd> spts(n + 1);
    std::vector<double> svals(n + 1);
    for (int i = 0; i <= n; ++i) {
      spts[i] = pts[order[i]];
      svals[i] = vals[order[i]];
    }
    pts = spts;
    vals = svals;
    if (vals[n] - vals[0] < ftol && vals[0] < 1e-18) break;
    VectorXd centroid = VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) centroid += pts[i];
    centroid /= n;
    const VectorXd xr = centroid + (centroid - pts[n]);
    const double fr = f(xr);
    if (fr < vals[0]) {
      const VectorXd xe = centroid + 2.0 * (centroid - pts[n]);
      const double fe = f(xe);
      if (fe < fr) {
        pts[n] = xe;
        vals[n] = fe;
      } else {
        pts[n] = xr;
        vals[n] = fr;
      }
    } else if (fr < vals[n - 1]) {
      pts[n] = xr;
      vals[n] = fr;
    } else {
      const VectorXd xc = centroid + 0.5 * (pts[n] - centroid);
      const double fc = f(xc);
      if (fc < vals[n]) {
        pts[n] = xc;
        vals[n] = fc;
      } else {
        for (int i = 1; i <= n; ++i) {
          pts[i] = pts[0] + 0.5 * (pts[i] - pts[0]);
          vals[i] = f(pts[i]);
        }
      }
    }
  }
  int best = 0;
  for (int i = 1; i <= n; ++i)
    if (vals[i] < vals[best]) best = i;
  return pts[best];
}

// Levenberg-Marquardt polish of a residual vector with forward-difference
// Jacobians; returns the improved point.
VectorXd polish_root(const std::function<VectorXd(const VectorXd&)>& resid, VectorXd x,
                     int max_iter = 80) {
  const int n = static_cast<int>(x.size());
  VectorXd r = resid(x);
  for (int it = 0; it < max_iter; ++it) {
    if (r.cwiseAbs().maxCoeff() < 1e-14) break;
    MatrixXd jac(r.size(), n);
    for (int j = 0; j < n; ++j) {
      const double h = 1e-7 * std::max(1.0, std::abs(x(j)));
      VectorXd xp = x;
      xp(j) += h;
      jac.col(j) = (resid(xp) - r) / h;
    }
    const MatrixXd jtj = jac.transpose() * jac + 1e-13 * MatrixXd::Identity(n, n);
    const VectorXd step = jtj.ldlt().solve(-jac.transpose() * r);
    bool accepted = false;
    for (double t : {1.0, 0.5, 0.25, 0.125, 0.0625}) {
      const VectorXd xn = x + t * step;
      const VectorXd rn = resid(xn);
      if (rn.norm() < r.norm()) {
        x = xn;
        r = rn;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  return x;
}

// Residual-minimizing fallback for a fixed-point map: deterministic
// multi-start Nelder-Mead followed by a least-squares polish. Candidates are
// deduplicated and filtered through `accept`; the smallest-residual survivor
// wins. Throws NoConvergence when none reaches `tol`.
VectorXd fallback_solve(const std::vector<VectorXd>& starts,
                        const std::function<VectorXd(const VectorXd&)>& map,
                        const std::function<bool(const VectorXd&)>& accept, double tol,
                        const std::vector<double>& residual_path, bool& multiple,
                        int nm_iter = 4000) {
  const auto safe_resid = [&](const VectorXd& x) -> VectorXd {
    try {
      return map(x) - x;
    } catch (const Error&) {
      return VectorXd::Constant(x.size(), 1e3 * (1.0 + x.norm()));
    }
  };
  const auto objective = [&](const VectorXd& x) { return safe_resid(x).squaredNorm(); };

  std::vector<VectorXd> candidates;
  for (const VectorXd& s : starts) {
    VectorXd x = nelder_mead(objective, s, 0.1, nm_iter, 1e-16);
    x = polish_root(safe_resid, x);
    if (safe_resid(x).cwiseAbs().maxCoeff() < tol && accept(x)) candidates.push_back(x);
  }
  std::vector<VectorXd> distinct;
  for (const VectorXd& c : candidates) {
    bool dup = false;
    for (const VectorXd& d : distinct)
      if ((c - d).cwiseAbs().maxCoeff() < 1e-6 * (1.0 + d.cwiseAbs().maxCoeff())) dup = true;
    if (!dup) distinct.push_back(c);
  }
  if (distinct.empty()) {
    std::ostringstream oss;
    oss << "fixed point did not converge; residual path tail:";
    const size_t n = residual_path.size();
    for (size_t i = n > 6 ? n - 6 : 0; i < n; ++i) oss << " " << fmt(residual_path[i]);
    fail(errc::no_convergence, oss.str());
  }
  multiple = distinct.size() > 1;
  VectorXd best = distinct.front();
  double best_res = safe_resid(best).cwiseAbs().maxCoeff();
  for (const VectorXd& c : distinct) {
    const double res = safe_resid(c).cwiseAbs().maxCoeff();
    if (res < best_res) {
      best = c;
      best_res = res;
    }
  }
  return best;
}

// Confirms a closed-form fixed-point solution against the general one-state
// problem on the full autocovariance sequence of the equilibrium process:
// the noise parameter must optimize to zero and the persistence must agree.
// Also records a warning when the process misses exponential ergodicity.
// Autocovariance sequence of the observable process with no conditioning cap:
// rank reduction immediately follows, so a singular variance is acceptable.
AutocovSeq autocov_for_verification(const LatentVarProcess& proc) {
  const double rate = procspec::geometric_tail_rate(spectral_radius(proc.F));
  const int lags = procspec::default_lag_count(rate, 8);
  MatrixXd flv = procspec::lyapunov_solve(proc.F, proc.Sigma);
  std::vector<MatrixXd> gammas;
  gammas.reserve(static_cast<size_t>(lags) + 1);
  gammas.push_back(symmetrize(proc.H.transpose() * flv * proc.H));
  for (int l = 1; l <= lags; ++l) {
    flv = (proc.F * flv).eval();
    gammas.push_back(proc.H.transpose() * flv * proc.H);
  }
  return AutocovSeq::make(std::move(gammas), rate, proc, kInfiniteCap);
}

void verify_one_state(const LatentVarProcess& proc, const OneStatePseudoTrue& sol,
                      std::vector<std::string>& warnings, const char* label) {
  const AutocovSeq acv = autocov_for_verification(proc);
  const auto reduced = procspec::rank_reduce(acv);
  const auto report = procspec::check_exponential_ergodicity(procspec::autocorr(reduced.first));
  if (!report.is_exp_ergodic) {
    std::ostringstream oss;
    oss << label << ": equilibrium process is not exponentially ergodic (first violation lag "
        << (report.first_violation_lag ? *report.first_violation_lag : -1)
        << "); closed-form solution cross-checked against the general solver";
    warnings.push_back(oss.str());
  }
  const OneStatePseudoTrue general = pseudotrue::solve_one_state_general(reduced.first);
  require(general.eta <= 1e-6, errc::verification_failed,
          std::string(label) + ": general one-state solution has eta = " + fmt(general.eta) +
              ", the zero-noise conjecture fails at this fixed point");
  require(std::abs(std::abs(general.a) - std::abs(sol.a)) <= 1e-6, errc::verification_failed,
          std::string(label) + ": general one-state persistence " + fmt(general.a) +
              " disagrees with the closed form " + fmt(sol.a));
}

MatrixXd range_projector(const MatrixXd& g0, double rel_tol = 1e-10) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(g0));
  const double lam_max = es.eigenvalues().cwiseAbs().maxCoeff();
  MatrixXd p = MatrixXd::Zero(g0.rows(), g0.cols());
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()(i) > rel_tol * lam_max)
      p += es.eigenvectors().col(i) * es.eigenvectors().col(i).transpose();
  return p;
}

MatrixXd clamp_psd(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(m));
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).asDiagonal() *
         es.eigenvectors().transpose();
}

// Nearest internally consistent stationary pair (Gamma_0, Gamma_1) by
// alternating projections between the PSD cone of the stacked two-period
// second-moment matrix and its block-Toeplitz structure.
std::pair<MatrixXd, MatrixXd> repair_pair(MatrixXd g0, MatrixXd g1, double tol = 1e-12,
                                          int max_iter = 200000) {
  const int n = static_cast<int>(g0.rows());
  for (int it = 0; it < max_iter; ++it) {
    MatrixXd stacked(2 * n, 2 * n);
    stacked.topLeftCorner(n, n) = g0;
    stacked.topRightCorner(n, n) = g1;
    stacked.bottomLeftCorner(n, n) = g1.transpose();
    stacked.bottomRightCorner(n, n) = g0;
    stacked = clamp_psd(stacked);
    const MatrixXd b0 =
        symmetrize(0.5 * (stacked.topLeftCorner(n, n) + stacked.bottomRightCorner(n, n)));
    const MatrixXd b1 =
        0.5 * (stacked.topRightCorner(n, n) + stacked.bottomLeftCorner(n, n).transpose());
    const double drift = std::max((b0 - g0).cwiseAbs().maxCoeff(),
                                  (b1 - g1).cwiseAbs().maxCoeff());
    g0 = b0;
    g1 = b1;
    if (drift < tol) break;
  }
  return {g0, g1};
}

}  // namespace

Mode mode_from_string(const std::string& name) {
  if (name == "cree" || name == "cree_d1") return Mode::cree_d1;
  if (name == "re" || name == "rational") return Mode::rational;
  fail(errc::config_error, "unknown mode '" + name + "' (expected cree or re)");
}

const char* mode_name(Mode mode) {
  return mode == Mode::cree_d1 ? "cree_d1" : "rational";
}

// ---------------------------------------------------------------------------
// Laws of motion, impulse responses, simulation
// ---------------------------------------------------------------------------

LinearStateLaw LinearStateLaw::make(MatrixXd transition, MatrixXd observation,
                                    MatrixXd innovation_cov,
                                    std::vector<std::string> variables) {
  require(transition.rows() == transition.cols() && transition.rows() > 0,
          errc::invalid_argument, "transition matrix must be square");
  require(observation.cols() == transition.rows(), errc::invalid_argument,
          "observation columns must match the state dimension");
  require(innovation_cov.rows() == transition.rows() &&
              innovation_cov.cols() == transition.rows(),
          errc::invalid_argument, "innovation covariance must match the state dimension");
  const double scale = innovation_cov.cwiseAbs().maxCoeff();
  require(scale == 0.0 ||
              (innovation_cov - innovation_cov.transpose()).cwiseAbs().maxCoeff() <=
                  1e-9 * scale,
          errc::invalid_argument, "innovation covariance must be symmetric");
  require(variables.size() == static_cast<size_t>(observation.rows()),
          errc::invalid_argument, "one variable name per observation row is required");
  LinearStateLaw law;
  law.transition = std::move(transition);
  law.observation = std::move(observation);
  law.innovation_cov = symmetrize(innovation_cov);
  law.variables = std::move(variables);
  return law;
}

MatrixXd impulse_response(const LinearStateLaw& law, const VectorXd& shock, int horizon) {
  require(shock.size() == law.state_dim(), errc::invalid_argument,
          "shock vector must match the state dimension");
  require(horizon >= 1, errc::invalid_argument, "horizon must be positive");
  const double rho = spectral_radius(law.transition);
  require(rho < 1.0, errc::unstable_law,
          "transition spectral radius " + fmt(rho) + " is not below one");
  MatrixXd out(horizon, law.obs_dim());
  VectorXd f = shock;
  for (int t = 0; t < horizon; ++t) {
    out.row(t) = (law.observation * f).transpose();
    f = law.transition * f;
  }
  return out;
}

MatrixXd simulate(const LinearStateLaw& law, int periods, std::uint64_t seed) {
  require(periods >= 1, errc::invalid_argument, "period count must be positive");
  const double rho = spectral_radius(law.transition);
  require(rho < 1.0, errc::unstable_law,
          "transition spectral radius " + fmt(rho) + " is not below one");
  const MatrixXd loading = linalg::sqrt_psd(law.innovation_cov, 0.0);
  const int m = law.state_dim();
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd out(periods, law.obs_dim());
  VectorXd state = VectorXd::Zero(m);
  VectorXd draw(m);
  for (int t = 0; t < periods; ++t) {
    for (int i = 0; i < m; ++i) draw(i) = normal(gen);
    state = law.transition * state + loading * draw;
    out.row(t) = (law.observation * state).transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// New-Keynesian economy
// ---------------------------------------------------------------------------

NkCalibration NkCalibration::make(double beta, double sigma, double delta, double kappa,
                                  const Matrix3d& shock_gamma0,
                                  const Matrix3d& shock_gamma1) {
  require(beta > 0.0 && beta < 1.0, errc::config_error, "beta must lie in (0, 1)");
  require(sigma > 0.0, errc::config_error, "sigma must be positive");
  require(delta > 0.0 && delta < 1.0, errc::config_error, "delta must lie in (0, 1)");
  require(kappa > 0.0, errc::config_error, "kappa must be positive");
  const double scale = shock_gamma0.cwiseAbs().maxCoeff();
  require(scale > 0.0, errc::config_error, "shock variance must be nonzero");
  require((shock_gamma0 - shock_gamma0.transpose()).cwiseAbs().maxCoeff() <= 1e-8 * scale,
          errc::config_error, "shock variance matrix must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix3d> es(shock_gamma0);
  require(es.eigenvalues().minCoeff() >= -1e-9 * scale, errc::config_error,
          "shock variance matrix must be positive semidefinite");
  NkCalibration cal;
  cal.beta = beta;
  cal.sigma = sigma;
  cal.delta = delta;
  cal.kappa = kappa;
  cal.shock_gamma0 = symmetrize(shock_gamma0);
  cal.shock_gamma1 = shock_gamma1;
  return cal;
}

NkCalibration NkCalibration::baseline() {
  Matrix3d g0, g1;
  g0 << 10.9, 16.4, 0.200,
        16.4, 32.1, -0.0827,
        0.200, -0.0827, 0.0994;
  g1 << 10.4, 16.2, 0.155,
        15.0, 30.7, -0.146,
        0.302, 0.129, 0.0920;
  return make(0.99, 1.0, 0.75, 0.172, g0, g1);
}

namespace {

struct NkMoments {
  Matrix3d gamma0, gamma1, transition, innovation;
  double repair_drift = 0.0;
  bool repaired = false;
};

// VAR(1) completion of the moment pair. Inconsistent pairs (negative implied
// innovation variance or a non-convergent completion) are first replaced by
// the nearest internally consistent stationary pair.
NkMoments nk_complete_shocks(const NkCalibration& cal) {
  NkMoments m;
  m.gamma0 = symmetrize(cal.shock_gamma0);
  m.gamma1 = cal.shock_gamma1;
  const double scale = m.gamma0.cwiseAbs().maxCoeff();
  const auto completion_ok = [&](const Matrix3d& g0, const Matrix3d& g1, Matrix3d& f,
                                 Matrix3d& sig) {
    f = g1 * linalg::pinv(g0);
    sig = symmetrize(g0 - f * g0 * f.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix3d> es(sig);
    return spectral_radius(f) < 1.0 - kStabilityMargin &&
           es.eigenvalues().minCoeff() >= -1e-9 * scale;
  };
  Matrix3d f, sig;
  if (!completion_ok(m.gamma0, m.gamma1, f, sig)) {
    const auto repaired = repair_pair(m.gamma0, m.gamma1);
    m.repair_drift = std::max((repaired.first - m.gamma0).cwiseAbs().maxCoeff(),
                              (repaired.second - m.gamma1).cwiseAbs().maxCoeff());
    m.gamma0 = repaired.first;
    m.gamma1 = repaired.second;
    m.repaired = true;
    f = m.gamma1 * linalg::pinv(m.gamma0);
    const double rho = spectral_radius(f);
    if (rho >= 1.0 - 1e-10) {
      m.gamma1 *= (1.0 - 1e-9) / rho;
      f = m.gamma1 * linalg::pinv(m.gamma0);
    }
    sig = symmetrize(m.gamma0 - f * m.gamma0 * f.transpose());
  }
  m.transition = f;
  m.innovation = clamp_psd(sig);
  return m;
}

Matrix3d nk_m_of(const Eigen::Matrix<double, 2, 3>& loadings) {
  Matrix3d m;
  m.topRows<2>() = loadings;
  m.row(2) << 1.0, 0.0, 0.0;
  return m;
}

// Equilibrium map: given candidate loadings of (x, pi) on the shocks, fit the
// one-state model to the implied f = (x, pi, i) process and read the loadings
// it induces through the demand and pricing blocks.
Eigen::Matrix<double, 2, 3> nk_implied_loadings(const Eigen::Matrix<double, 2, 3>& loadings,
                                                const NkCalibration& cal,
                                                const NkMoments& mom,
                                                const Matrix3d& projector,
                                                OneStatePseudoTrue* sol_out) {
  const Matrix3d m = nk_m_of(loadings);
  const Matrix3d g0f = symmetrize(m * mom.gamma0 * m.transpose());
  const Matrix3d g1f = m * mom.gamma1 * m.transpose();
  const OneStatePseudoTrue sol = one_state_from_c1(g0f, g1f);
  const double a = sol.a;
  const VectorXd& p = sol.p;
  const VectorXd& q = sol.q;
  const double gx = a * (q(0) - cal.sigma * q(1));
  const double gpi = a * cal.beta * q(1);
  const double d = 1.0 - p(0) * gx - p(1) * (gpi + cal.kappa * gx);
  require(std::abs(d) > 1e-10, errc::numerical_failure,
          "degenerate equilibrium denominator in the loading map");
  Eigen::Matrix<double, 2, 3> next;
  next(0, 0) = (gx * p(2) - cal.sigma * (1.0 - gpi * p(1))) / d;
  next(0, 1) = cal.sigma * (1.0 - gpi * p(1)) / d;
  next(0, 2) = gx * p(1) / d;
  next(1, 0) = ((gpi + cal.kappa * gx) * p(2) - cal.sigma * (cal.kappa + gpi * p(0))) / d;
  next(1, 1) = cal.sigma * (cal.kappa + gpi * p(0)) / d;
  next(1, 2) = (1.0 - gx * p(0)) / d;
  next = (next * projector).eval();
  if (sol_out != nullptr) *sol_out = sol;
  return next;
}

Eigen::Matrix<double, 2, 3> nk_rational_loadings(const NkCalibration& cal,
                                                 const NkMoments& mom, double* residual) {
  const Matrix3d eye = Matrix3d::Identity();
  const Matrix3d gb =
      cal.beta * mom.transition * (eye - cal.beta * mom.transition).inverse();
  const Matrix3d gbd = cal.beta * cal.delta * mom.transition *
                       (eye - cal.beta * cal.delta * mom.transition).inverse();
  const Vector3d e1(1.0, 0.0, 0.0), e2(0.0, 1.0, 0.0), e3(0.0, 0.0, 1.0);
  Eigen::Matrix<double, 6, 6> a = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, 1> b = Eigen::Matrix<double, 6, 1>::Zero();
  a.topLeftCorner<3, 3>() = eye - (1.0 - cal.beta) / cal.beta * gb.transpose();
  a.topRightCorner<3, 3>() = cal.sigma / cal.beta * gb.transpose();
  b.head<3>() = -cal.sigma * (e1 - e2) - cal.sigma * gb.transpose() * (e1 - e2);
  a.bottomLeftCorner<3, 3>() = -cal.kappa * (eye + gbd.transpose());
  a.bottomRightCorner<3, 3>() = eye - (1.0 - cal.delta) / cal.delta * gbd.transpose();
  b.tail<3>() = e3 + gbd.transpose() * e3;
  const Eigen::Matrix<double, 6, 1> sol = a.fullPivLu().solve(b);
  if (residual != nullptr) *residual = (a * sol - b).cwiseAbs().maxCoeff();
  Eigen::Matrix<double, 2, 3> loadings;
  loadings.row(0) = sol.head<3>().transpose();
  loadings.row(1) = sol.tail<3>().transpose();
  return loadings;
}

}  // namespace

NkEquilibrium solve_nk(const NkCalibration& cal, Mode mode) {
  NkEquilibrium eq;
  eq.mode = mode;
  const NkMoments mom = nk_complete_shocks(cal);
  eq.shock_gamma0 = mom.gamma0;
  eq.shock_gamma1 = mom.gamma1;
  eq.shock_transition = mom.transition;
  eq.shock_innovation = mom.innovation;
  eq.repair_drift = mom.repair_drift;
  if (mom.repaired)
    eq.warnings.push_back(
        "shock moments were adjusted to the nearest internally consistent stationary pair "
        "(largest change " +
        fmt(mom.repair_drift) + ")");

  double re_residual = 0.0;
  const Eigen::Matrix<double, 2, 3> re = nk_rational_loadings(cal, mom, &re_residual);

  if (mode == Mode::rational) {
    eq.loadings = re;
    eq.residual = re_residual;
    eq.iterations = 1;
    const Matrix3d m = nk_m_of(eq.loadings);
    eq.f_gamma0 = symmetrize(m * mom.gamma0 * m.transpose());
    eq.f_gamma1 = m * mom.gamma1 * m.transpose();
    return eq;
  }

  const Matrix3d projector = range_projector(mom.gamma0);
  if (linalg::psd_rank(mom.gamma0, 1e-10) < 3)
    eq.warnings.push_back(
        "shock variance is singular; loadings are identified only on its range and are "
        "reported in canonical form");
  const auto pack = [](const Eigen::Matrix<double, 2, 3>& l) {
    VectorXd v(6);
    v << l(0, 0), l(0, 1), l(0, 2), l(1, 0), l(1, 1), l(1, 2);
    return v;
  };
  const auto unpack = [](const VectorXd& v) {
    Eigen::Matrix<double, 2, 3> l;
    l << v(0), v(1), v(2), v(3), v(4), v(5);
    return l;
  };
  const auto map = [&](const VectorXd& v) -> VectorXd {
    return pack(nk_implied_loadings(unpack(v), cal, mom, projector, nullptr));
  };

  const VectorXd start = pack((re * projector).eval());
  FixedPointRun run;
  bool map_failed = false;
  try {
    run = damped_fixed_point(start, map, 0.5, 1e-10, 10000);
  } catch (const Error&) {
    map_failed = true;
  }
  VectorXd solution;
  if (!map_failed && run.converged) {
    solution = run.x;
    eq.residual = run.residual;
    eq.iterations = run.iterations;
  } else {
    eq.used_fallback = true;
    eq.warnings.push_back(
        "damped iteration on the loading map did not settle; switched to residual "
        "minimization");
    const int shock_rank = linalg::psd_rank(mom.gamma0, 1e-10);
    const auto accept = [&](const VectorXd& v) {
      const Matrix3d m = nk_m_of(unpack(v));
      const Matrix3d g0f = symmetrize(m * mom.gamma0 * m.transpose());
      return linalg::psd_rank(g0f, 1e-10) >= std::min(3, shock_rank);
    };
    std::vector<VectorXd> starts{start};
    if (!map_failed) starts.push_back(run.x);
    starts.push_back(1.05 * start);
    starts.push_back(0.95 * start);
    starts.push_back(start + VectorXd::Constant(6, 0.1));
    starts.push_back(start - VectorXd::Constant(6, 0.1));
    bool multiple = false;
    solution = fallback_solve(starts, map, accept, 1e-8,
                              map_failed ? std::vector<double>{} : run.residual_path,
                              multiple);
    if (multiple)
      eq.warnings.push_back(
          "multiple self-consistent loading solutions found; reporting the smallest-residual "
          "one");
    eq.residual = (map(solution) - solution).cwiseAbs().maxCoeff();
    eq.iterations = map_failed ? 0 : run.iterations;
  }

  eq.loadings = unpack(solution);
  OneStatePseudoTrue sol;
  nk_implied_loadings(eq.loadings, cal, mom, projector, &sol);
  orient_solution(sol, 0, true);
  eq.solution = sol;
  eq.gamma_x = sol.a * (sol.q(0) - cal.sigma * sol.q(1));
  eq.gamma_pi = sol.a * cal.beta * sol.q(1);
  const Matrix3d m = nk_m_of(eq.loadings);
  eq.f_gamma0 = symmetrize(m * mom.gamma0 * m.transpose());
  eq.f_gamma1 = m * mom.gamma1 * m.transpose();

  const LatentVarProcess proc =
      LatentVarProcess::make(mom.transition, m.transpose(), mom.innovation, kInfiniteCap);
  verify_one_state(proc, sol, eq.warnings, "nk");
  return eq;
}

LinearStateLaw NkEquilibrium::law() const {
  const bool with_z = solution.p.size() == 3;
  MatrixXd obs(with_z ? 6 : 5, 3);
  obs.row(0) = loadings.row(0);
  obs.row(1) = loadings.row(1);
  obs.row(2) << 1.0, 0.0, 0.0;
  obs.row(3) << 0.0, 1.0, 0.0;
  obs.row(4) << 0.0, 0.0, 1.0;
  std::vector<std::string> names{"x_hat", "pi_hat", "i_hat", "r_n", "mu"};
  if (with_z) {
    const Matrix3d m = nk_m_of(loadings);
    const VectorXd z = solution.p / solution.p.cwiseAbs().sum();
    obs.row(5) = (m.transpose() * z).transpose();
    names.push_back("z_hat");
  }
  return LinearStateLaw::make(shock_transition, obs, shock_innovation, names);
}

ForwardGuidanceResult nk_forward_guidance(const NkEquilibrium& eq, const NkCalibration& cal,
                                          int horizon) {
  require(horizon >= 0, errc::invalid_argument, "horizon must be nonnegative");
  require(eq.solution.p.size() == 3, errc::invalid_argument,
          "forward guidance requires a one-state equilibrium solution");
  const double a = eq.solution.a;
  const VectorXd& p = eq.solution.p;
  const VectorXd& q = eq.solution.q;
  const Matrix3d& g0 = eq.f_gamma0;
  const Vector3d e_i(0.0, 0.0, 1.0);
  const int n = 3 + horizon;

  // Subjective covariance of the conditioning vector (f_t, i_{t+1..t+T});
  // beyond lag zero the one-state model implies Cov(f_t, f_{t+tau}) = a^tau q q'.
  MatrixXd s = MatrixXd::Zero(n, n);
  s.topLeftCorner<3, 3>() = g0;
  const Vector3d g0p = g0 * p;
  const double qi = q(2);
  const double pg0e = p.dot(g0 * e_i);
  for (int tau = 1; tau <= horizon; ++tau) {
    const Vector3d col = std::pow(a, tau) * qi * g0p;
    s.block<3, 1>(0, 2 + tau) = col;
    s.block<1, 3>(2 + tau, 0) = col.transpose();
    for (int tau2 = 1; tau2 <= horizon; ++tau2) {
      s(2 + tau, 2 + tau2) = tau == tau2 ? g0(2, 2)
                                         : std::pow(a, std::abs(tau - tau2)) * qi * pg0e;
    }
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(s);
  const double lam_min = es.eigenvalues().minCoeff();
  const double lam_max = es.eigenvalues().maxCoeff();
  require(lam_min > 0.0 && lam_max / lam_min < 1e14, errc::singular_omega_cov,
          "conditioning covariance is numerically singular (condition number " +
              fmt(lam_min > 0.0 ? lam_max / lam_min : std::numeric_limits<double>::infinity()) +
              ")");

  // Discounted sums sum_s bw^s Cov(f_{t+s}, omega) under the one-state model.
  const auto weighted = [&](double bw) {
    MatrixXd w = MatrixXd::Zero(3, n);
    w.leftCols<3>() = (a * bw / (1.0 - a * bw)) * q * g0p.transpose();
    for (int tau = 1; tau <= horizon; ++tau) {
      double acc = 0.0;
      for (int s2 = 1; s2 < tau; ++s2) acc += std::pow(bw, s2) * std::pow(a, tau - s2);
      w.col(2 + tau) = acc * qi * g0p + std::pow(bw, tau) * (g0 * e_i) +
                       (a * std::pow(bw, tau + 1) / (1.0 - a * bw)) * pg0e * q;
    }
    return w;
  };

  const double gx = eq.gamma_x;
  const double gpi = eq.gamma_pi;
  Vector3d vx, vpi;
  vx << 1.0 - cal.beta * gx * p(0), -(cal.sigma + cal.beta * gx * p(1)),
      -cal.beta * gx * p(2);
  vx /= cal.beta;
  vpi << -cal.delta * gpi * p(0), 1.0 - cal.delta * gpi * p(1), -cal.delta * gpi * p(2);
  vpi /= cal.delta;

  const Eigen::LDLT<MatrixXd> ldlt(s);
  const VectorXd psi_x = ldlt.solve(weighted(cal.beta).transpose() * vx);
  const VectorXd psi_pi = ldlt.solve(weighted(cal.beta * cal.delta).transpose() * vpi);

  Matrix2d a2;
  a2 << 1.0 - psi_x(0), -psi_x(1), -(cal.kappa + psi_pi(0)), 1.0 - psi_pi(1);
  MatrixXd rhs = MatrixXd::Zero(2, n);
  rhs(0, 0) = -cal.sigma + psi_x(2);
  rhs(0, 1) = cal.sigma;
  rhs(1, 0) = psi_pi(2);
  rhs(1, 2) = 1.0;
  for (int tau = 1; tau <= horizon; ++tau) {
    rhs(0, 2 + tau) = psi_x(2 + tau);
    rhs(1, 2 + tau) = psi_pi(2 + tau);
  }
  const MatrixXd nu = a2.fullPivLu().solve(rhs);

  ForwardGuidanceResult out;
  out.horizon = horizon;
  out.nu_x = nu.row(0).transpose();
  out.nu_pi = nu.row(1).transpose();
  out.psi_x = psi_x;
  out.psi_pi = psi_pi;
  VectorXd path = VectorXd::Zero(n);
  path(0) = -1.0;
  for (int tau = 1; tau <= horizon; ++tau) path(2 + tau) = -1.0;
  out.x_response = out.nu_x.dot(path);
  out.pi_response = out.nu_pi.dot(path);
  return out;
}

std::pair<double, double> fg_response(const ForwardGuidanceResult& fg, const VectorXd& path) {
  require(path.size() == fg.nu_x.size(), errc::invalid_argument,
          "conditioning path must have size 3 + horizon");
  return {fg.nu_x.dot(path), fg.nu_pi.dot(path)};
}

VectorXd fg_subjective_policy_path(const NkEquilibrium& eq, double i, double r_n, double mu,
                                   int horizon) {
  require(eq.solution.p.size() == 3, errc::invalid_argument,
          "subjective paths require a one-state equilibrium solution");
  const Vector3d shocks(i, r_n, mu);
  const Vector3d f = nk_m_of(eq.loadings) * shocks;
  const double pf = eq.solution.p.dot(f);
  VectorXd path(horizon);
  for (int tau = 1; tau <= horizon; ++tau)
    path(tau - 1) = std::pow(eq.solution.a, tau) * eq.solution.q(2) * pf;
  return path;
}

// ---------------------------------------------------------------------------
// Real business cycle economy
// ---------------------------------------------------------------------------

RbcCalibration RbcCalibration::make(double beta, double sigma, double varphi, double delta,
                                    double alpha, double rho, double sigma_eps) {
  require(beta > 0.0 && beta < 1.0, errc::config_error, "beta must lie in (0, 1)");
  require(sigma > 0.0, errc::config_error, "sigma must be positive");
  require(varphi > 0.0, errc::config_error, "varphi must be positive");
  require(delta > 0.0 && delta < 1.0, errc::config_error, "delta must lie in (0, 1)");
  require(alpha > 0.0 && alpha < 1.0, errc::config_error, "alpha must lie in (0, 1)");
  require(std::abs(rho) < 1.0, errc::config_error, "rho must lie in (-1, 1)");
  require(sigma_eps >= 0.0, errc::config_error, "sigma_eps must be nonnegative");
  RbcCalibration cal;
  cal.beta = beta;
  cal.sigma = sigma;
  cal.varphi = varphi;
  cal.delta = delta;
  cal.alpha = alpha;
  cal.rho = rho;
  cal.sigma_eps = sigma_eps;
  require(rbc_steady_state(cal).c_over_o > 0.0, errc::config_error,
          "implied consumption share is not positive");
  return cal;
}

RbcCalibration RbcCalibration::baseline() {
  return make(0.99, 1.0, 1.0, 0.012, 0.3, 0.95, 1.0);
}

RbcSteadyState rbc_steady_state(const RbcCalibration& cal) {
  RbcSteadyState ss;
  ss.r = 1.0 / cal.beta - 1.0 + cal.delta;
  ss.k_over_o = cal.alpha / ss.r;
  ss.i_over_o = cal.delta * ss.k_over_o;
  ss.c_over_o = 1.0 - ss.i_over_o;
  ss.c_over_k = ss.c_over_o / ss.k_over_o;
  ss.chi = (1.0 - cal.beta) /
           ((1.0 - cal.alpha) * ss.r / (cal.alpha * cal.sigma * cal.varphi) + ss.c_over_k);
  ss.zeta = (1.0 - cal.alpha) * (1.0 + cal.varphi) * ss.r / (cal.alpha * cal.varphi);
  return ss;
}

namespace {

struct RbcStatics {
  Eigen::Matrix<double, 8, 2> t;  // rows (k, a, o, w, r, n, i, c) on f = (k, a)
  Matrix2d f;
};

// Within-period block: given the consumption policy row, labor supply and
// demand pin hours, then output, wages, rental rates and investment follow.
RbcStatics rbc_statics_from_c(const RbcCalibration& cal, const RbcSteadyState& ss,
                              const Eigen::RowVector2d& c_row) {
  const Eigen::RowVector2d tech(cal.alpha, 1.0);
  const Eigen::RowVector2d n_row = (tech - c_row / cal.sigma) / (cal.varphi + cal.alpha);
  const Eigen::RowVector2d o_row = tech + (1.0 - cal.alpha) * n_row;
  const Eigen::RowVector2d w_row = tech - cal.alpha * n_row;
  const Eigen::RowVector2d r_row =
      Eigen::RowVector2d(-(1.0 - cal.alpha) * ss.r, ss.r) + (1.0 - cal.alpha) * ss.r * n_row;
  const double o_i = 1.0 / ss.i_over_o;
  const double c_i = ss.c_over_o / ss.i_over_o;
  const Eigen::RowVector2d i_row = o_i * o_row - c_i * c_row;
  RbcStatics st;
  st.t.row(0) << 1.0, 0.0;
  st.t.row(1) << 0.0, 1.0;
  st.t.row(2) = o_row;
  st.t.row(3) = w_row;
  st.t.row(4) = r_row;
  st.t.row(5) = n_row;
  st.t.row(6) = i_row;
  st.t.row(7) = c_row;
  st.f << 1.0 - cal.delta + cal.delta * i_row(0), cal.delta * i_row(1), 0.0, cal.rho;
  return st;
}

// Consumption row solved jointly with hours from the consumption function,
// given the forward-term coefficients gamma on (k, a).
Eigen::RowVector2d rbc_c_row_from_gamma(const RbcCalibration& cal, const RbcSteadyState& ss,
                                        const Vector2d& gamma) {
  Matrix2d a;
  a << cal.varphi + cal.alpha, 1.0 / cal.sigma,
      ss.chi * ss.zeta * cal.alpha - ss.chi * (1.0 - cal.alpha) * ss.r, 1.0;
  Vector2d bk, ba;
  bk << cal.alpha,
      ss.chi / cal.beta + gamma(0) - ss.chi * (1.0 - cal.alpha) * ss.r +
          ss.chi * ss.zeta * cal.alpha;
  ba << 1.0, gamma(1) + ss.chi * ss.r + ss.chi * ss.zeta;
  const Vector2d sk = a.fullPivLu().solve(bk);
  const Vector2d sa = a.fullPivLu().solve(ba);
  return Eigen::RowVector2d(sk(1), sa(1));
}

Eigen::RowVector2d rbc_forward_row(const RbcCalibration& cal, const RbcSteadyState& ss,
                                   const RbcStatics& st) {
  return (ss.chi - cal.beta * cal.sigma) * st.t.row(4) + ss.chi * ss.zeta * st.t.row(3);
}

Vector2d rbc_euler_residual(const RbcCalibration& cal, const RbcSteadyState& ss,
                            const Eigen::RowVector2d& c_row) {
  const RbcStatics st = rbc_statics_from_c(cal, ss, c_row);
  const Eigen::RowVector2d res =
      (st.t.row(7) - cal.sigma * cal.beta * st.t.row(4)) * st.f - st.t.row(7);
  return res.transpose();
}

// Unique stable consumption policy from the one-step optimality condition,
// by deterministic multi-start Newton with a stability filter.
Eigen::RowVector2d rbc_rational_c_row(const RbcCalibration& cal, const RbcSteadyState& ss,
                                      std::vector<std::string>& warnings) {
  const auto resid = [&](const VectorXd& x) -> VectorXd {
    return rbc_euler_residual(cal, ss, Eigen::RowVector2d(x(0), x(1)));
  };
  std::vector<VectorXd> roots;
  for (double ck = -0.5; ck <= 1.51; ck += 0.25) {
    for (double ca = -0.5; ca <= 1.51; ca += 0.25) {
      VectorXd x(2);
      x << ck, ca;
      x = polish_root(resid, x, 200);
      if (resid(x).cwiseAbs().maxCoeff() > 1e-11) continue;
      bool dup = false;
      for (const VectorXd& r : roots)
        if ((x - r).cwiseAbs().maxCoeff() < 1e-7) dup = true;
      if (!dup) roots.push_back(x);
    }
  }
  std::vector<VectorXd> stable;
  for (const VectorXd& r : roots) {
    const RbcStatics st = rbc_statics_from_c(cal, ss, Eigen::RowVector2d(r(0), r(1)));
    if (spectral_radius(st.f) < 1.0 - kStabilityMargin) stable.push_back(r);
  }
  require(!stable.empty(), errc::no_convergence,
          "no stable consumption policy satisfies the optimality condition");
  if (stable.size() > 1)
    warnings.push_back("multiple stable consumption policies found; reporting the first");
  return Eigen::RowVector2d(stable.front()(0), stable.front()(1));
}

Matrix2d rbc_innovation(const RbcCalibration& cal) {
  Matrix2d s = Matrix2d::Zero();
  s(1, 1) = cal.sigma_eps * cal.sigma_eps;
  return s;
}

void rbc_fill_record(RbcEquilibrium& eq, const RbcStatics& st) {
  eq.t_map = st.t;
  eq.psi_k = st.t(6, 0);
  eq.psi_a = st.t(6, 1);
}

}  // namespace

RbcEquilibrium solve_rbc(const RbcCalibration& cal, Mode mode) {
  RbcEquilibrium eq;
  eq.mode = mode;
  eq.steady = rbc_steady_state(cal);
  const RbcSteadyState& ss = eq.steady;
  const Matrix2d innov = rbc_innovation(cal);

  const Eigen::RowVector2d c_re = rbc_rational_c_row(cal, ss, eq.warnings);
  const RbcStatics st_re = rbc_statics_from_c(cal, ss, c_re);
  const Eigen::RowVector2d gamma_re =
      rbc_forward_row(cal, ss, st_re) * cal.beta * st_re.f *
      (Matrix2d::Identity() - cal.beta * st_re.f).inverse();

  if (mode == Mode::rational) {
    rbc_fill_record(eq, st_re);
    eq.transition = st_re.f;
    eq.innovation_cov = innov;
    eq.gamma_k = gamma_re(0);
    eq.gamma_a = gamma_re(1);
    eq.residual = rbc_euler_residual(cal, ss, c_re).cwiseAbs().maxCoeff();
    eq.iterations = 1;
    return eq;
  }

  OneStatePseudoTrue inner_sol;
  const auto map = [&](const VectorXd& g) -> VectorXd {
    const Eigen::RowVector2d c_row = rbc_c_row_from_gamma(cal, ss, Vector2d(g(0), g(1)));
    const RbcStatics st = rbc_statics_from_c(cal, ss, c_row);
    const double rho_f = spectral_radius(st.f);
    require(rho_f < 1.0 - 1e-12, errc::numerical_failure,
            "candidate law of motion is not convergent");
    const Matrix2d g0 = lyapunov(st.f, innov);
    const Matrix2d g1 = st.f * g0;
    inner_sol = one_state_from_c1(g0, g1);
    const double coef = inner_sol.a * cal.beta / (1.0 - inner_sol.a * cal.beta) *
                        rbc_forward_row(cal, ss, st).dot(inner_sol.q);
    return coef * inner_sol.p;
  };

  const VectorXd start = gamma_re.transpose();
  FixedPointRun run;
  bool map_failed = false;
  try {
    run = damped_fixed_point(start, map, 0.5, 1e-12, 10000);
  } catch (const Error&) {
    map_failed = true;
  }
  VectorXd solution;
  if (!map_failed && run.converged) {
    solution = run.x;
    eq.residual = run.residual;
    eq.iterations = run.iterations;
  } else {
    eq.used_fallback = true;
    eq.warnings.push_back(
        "damped iteration on the forward-term coefficients did not settle; switched to "
        "residual minimization");
    std::vector<VectorXd> starts{start, 1.1 * start, 0.9 * start,
                                 start + VectorXd::Constant(2, 0.1),
                                 start - VectorXd::Constant(2, 0.1)};
    bool multiple = false;
    solution = fallback_solve(starts, map, [](const VectorXd&) { return true; }, 1e-8,
                              map_failed ? std::vector<double>{} : run.residual_path,
                              multiple);
    if (multiple)
      eq.warnings.push_back(
          "multiple self-consistent forward-term solutions found; reporting the "
          "smallest-residual one");
    eq.residual = (map(solution) - solution).cwiseAbs().maxCoeff();
    eq.iterations = map_failed ? 0 : run.iterations;
  }

  map(solution);
  eq.gamma_k = solution(0);
  eq.gamma_a = solution(1);
  const Eigen::RowVector2d c_row =
      rbc_c_row_from_gamma(cal, ss, Vector2d(solution(0), solution(1)));
  const RbcStatics st = rbc_statics_from_c(cal, ss, c_row);
  rbc_fill_record(eq, st);
  eq.transition = st.f;
  eq.innovation_cov = innov;

  OneStatePseudoTrue sol = inner_sol;
  orient_solution(sol, 0, false);
  eq.pseudo_true = sol;
  const double s1 = sol.p.cwiseAbs().sum();
  eq.z_weights = sol.p / s1;
  // The perceived index z has unit-sum weights, so the coefficient multiplying
  // z in the consumption rule rescales the forward-term coefficient by s1.
  eq.z_loading_c = s1 * sol.a * cal.beta / (1.0 - sol.a * cal.beta) *
                   rbc_forward_row(cal, ss, st).dot(sol.q);

  const LatentVarProcess proc =
      LatentVarProcess::make(st.f, Matrix2d::Identity(), innov, kInfiniteCap);
  verify_one_state(proc, sol, eq.warnings, "rbc");
  return eq;
}

RbcEquilibrium solve_rbc_recovered(const RbcCalibration& cal) {
  RbcEquilibrium eq;
  eq.mode = Mode::rational;
  eq.steady = rbc_steady_state(cal);
  const RbcSteadyState& ss = eq.steady;

  // Forward sums evaluated under exact recovery of the candidate law itself:
  // both state coordinates are observable, so the two-state subjective model
  // that matches the process is the process.
  const auto map = [&](const VectorXd& g) -> VectorXd {
    const Eigen::RowVector2d c_row = rbc_c_row_from_gamma(cal, ss, Vector2d(g(0), g(1)));
    const RbcStatics st = rbc_statics_from_c(cal, ss, c_row);
    require(spectral_radius(cal.beta * st.f) < 1.0 - kStabilityMargin,
            errc::numerical_failure, "discounted transition is not convergent");
    const Eigen::RowVector2d gamma = rbc_forward_row(cal, ss, st) * cal.beta * st.f *
                                     (Matrix2d::Identity() - cal.beta * st.f).inverse();
    return gamma.transpose();
  };

  std::vector<VectorXd> starts;
  for (double gk = 0.0; gk <= 1.01; gk += 0.25)
    for (double ga = 0.0; ga <= 1.01; ga += 0.25) {
      VectorXd s(2);
      s << gk, ga;
      starts.push_back(s);
    }
  bool multiple = false;
  std::vector<VectorXd> stable_roots;
  const auto resid = [&](const VectorXd& x) -> VectorXd {
    try {
      return map(x) - x;
    } catch (const Error&) {
      return VectorXd::Constant(2, 1e3 * (1.0 + x.norm()));
    }
  };
  for (const VectorXd& s : starts) {
    const VectorXd x = polish_root(resid, s, 200);
    if (resid(x).cwiseAbs().maxCoeff() > 1e-10) continue;
    const Eigen::RowVector2d c_row = rbc_c_row_from_gamma(cal, ss, Vector2d(x(0), x(1)));
    const RbcStatics st = rbc_statics_from_c(cal, ss, c_row);
    if (spectral_radius(st.f) >= 1.0 - kStabilityMargin) continue;
    bool dup = false;
    for (const VectorXd& r : stable_roots)
      if ((x - r).cwiseAbs().maxCoeff() < 1e-7) dup = true;
    if (!dup) stable_roots.push_back(x);
  }
  require(!stable_roots.empty(), errc::no_convergence,
          "no stable fixed point of the recovery closure");
  multiple = stable_roots.size() > 1;
  if (multiple)
    eq.warnings.push_back("multiple stable recovery fixed points found; reporting the first");
  const VectorXd solution = stable_roots.front();

  eq.gamma_k = solution(0);
  eq.gamma_a = solution(1);
  const Eigen::RowVector2d c_row =
      rbc_c_row_from_gamma(cal, ss, Vector2d(solution(0), solution(1)));
  const RbcStatics st = rbc_statics_from_c(cal, ss, c_row);
  rbc_fill_record(eq, st);
  eq.transition = st.f;
  eq.innovation_cov = rbc_innovation(cal);
  eq.residual = resid(solution).cwiseAbs().maxCoeff();
  eq.iterations = 1;
  return eq;
}

LinearStateLaw RbcEquilibrium::law() const {
  const bool with_z = pseudo_true.p.size() == 2;
  MatrixXd obs(with_z ? 9 : 8, 2);
  obs.topRows<8>() = t_map;
  std::vector<std::string> names{"k_hat", "a_hat", "o_hat", "w_hat",
                                 "r_hat", "n_hat", "i_hat", "c_hat"};
  if (with_z) {
    obs.row(8) = z_weights.transpose();
    names.push_back("z_hat");
  }
  return LinearStateLaw::make(transition, obs, innovation_cov, names);
}

// ---------------------------------------------------------------------------
// Labor search-and-matching economy
// ---------------------------------------------------------------------------

DmpCalibration DmpCalibration::make(double beta, double s, double p, double alpha,
                                    double delta, double rho_a, double rho_s, double b,
                                    double corr_as, double sd_ratio) {
  require(beta > 0.0 && beta < 1.0, errc::config_error, "beta must lie in (0, 1)");
  require(s > 0.0 && s < 1.0, errc::config_error, "separation rate must lie in (0, 1)");
  require(p > 0.0 && p < 1.0, errc::config_error, "job-finding rate must lie in (0, 1)");
  require(s + p < 1.0, errc::config_error, "separation plus job finding must stay below one");
  require(alpha > 0.0 && alpha < 1.0, errc::config_error, "alpha must lie in (0, 1)");
  require(delta > 0.0 && delta < 1.0, errc::config_error, "delta must lie in (0, 1)");
  require(std::abs(rho_a) < 1.0, errc::config_error, "rho_a must lie in (-1, 1)");
  require(std::abs(rho_s) < 1.0, errc::config_error, "rho_s must lie in (-1, 1)");
  require(b >= 0.0 && b < 1.0, errc::config_error, "b must lie in [0, 1)");
  require(corr_as > -1.0 && corr_as < 1.0, errc::config_error,
          "shock correlation must lie in (-1, 1)");
  require(sd_ratio > 0.0, errc::config_error, "sd_ratio must be positive");
  DmpCalibration cal;
  cal.beta = beta;
  cal.s = s;
  cal.p = p;
  cal.alpha = alpha;
  cal.delta = delta;
  cal.rho_a = rho_a;
  cal.rho_s = rho_s;
  cal.b = b;
  cal.corr_as = corr_as;
  cal.sd_ratio = sd_ratio;
  require(dmp_steady_state(cal).w < 1.0, errc::config_error,
          "implied steady-state wage is not below productivity");
  return cal;
}

DmpCalibration DmpCalibration::baseline() {
  return make(0.99, 0.035, 0.4, 0.72, 0.72, 0.96, 0.90, 0.4, -0.4, 10.0);
}

DmpSteadyState dmp_steady_state(const DmpCalibration& cal) {
  const double beta = cal.beta, s = cal.s, p = cal.p;
  DmpSteadyState ss;
  ss.w = (cal.delta * (1.0 - beta * (1.0 - s - p)) +
          (1.0 - cal.delta) * (1.0 - beta * (1.0 - s)) * cal.b) /
         (1.0 - beta * (1.0 - s - cal.delta * p));
  ss.j = (1.0 - ss.w) / (1.0 - beta * (1.0 - s));
  ss.u = s / (s + p);
  ss.zeta = beta * s * (1.0 - ss.w) / (1.0 - beta * (1.0 - s));
  ss.chi = beta * (1.0 - cal.delta) * (ss.w - cal.b) / (1.0 - beta * (1.0 - s - p));
  ss.theta = 1.0;
  ss.mu = p;
  ss.k = beta * ss.mu * ss.j;
  return ss;
}

namespace {

// Stationary covariance of (a, s) from the correlation and the ratio of
// standard deviations, with the technology deviation normalized to unit
// variance, plus the innovation covariance its AR(1) laws imply.
struct DmpShocks {
  Matrix2d gamma0, innovation;
};

DmpShocks dmp_shocks(const DmpCalibration& cal) {
  DmpShocks sh;
  const double sd_s = 1.0 / cal.sd_ratio;
  sh.gamma0 << 1.0, cal.corr_as * sd_s, cal.corr_as * sd_s, sd_s * sd_s;
  const Matrix2d rho = Vector2d(cal.rho_a, cal.rho_s).asDiagonal();
  sh.innovation = symmetrize(sh.gamma0 - rho * sh.gamma0 * rho);
  Eigen::SelfAdjointEigenSolver<Matrix2d> es(sh.innovation);
  require(es.eigenvalues().minCoeff() >= -1e-12, errc::config_error,
          "shock persistences are inconsistent with the requested stationary covariance");
  sh.innovation = clamp_psd(sh.innovation);
  return sh;
}

Matrix3d dmp_transition(const DmpCalibration& cal, const Vector3d& psi_theta) {
  const double pa = (1.0 - cal.alpha) * cal.p;
  Matrix3d f;
  f << 1.0 - cal.s - cal.p - pa * psi_theta(0), -pa * psi_theta(1), cal.p - pa * psi_theta(2),
      0.0, cal.rho_a, 0.0,
      0.0, 0.0, cal.rho_s;
  return f;
}

Matrix3d dmp_state_innovation(const Matrix2d& shock_innovation) {
  Matrix3d s3 = Matrix3d::Zero();
  s3.block<2, 2>(1, 1) = shock_innovation;
  return s3;
}

// Observable rows (a, s, theta, v, u, p, q, w) on f = (u, a, s): vacancies
// follow from the tightness definition, the matching rates from its
// elasticity, and the wage deviation from the wage-payment loadings.
Eigen::Matrix<double, 8, 3> dmp_t_map(const DmpCalibration& cal, const DmpSteadyState& ss,
                                      const Eigen::Matrix<double, 6, 1>& psi) {
  Eigen::Matrix<double, 8, 3> t = Eigen::Matrix<double, 8, 3>::Zero();
  const Eigen::RowVector3d theta = psi.head<3>().transpose();
  t.row(0) << 0.0, 1.0, 0.0;
  t.row(1) << 0.0, 0.0, 1.0;
  t.row(2) = theta;
  t.row(3) = theta + Eigen::RowVector3d(1.0, 0.0, 0.0);
  t.row(4) << 1.0, 0.0, 0.0;
  t.row(5) = (1.0 - cal.alpha) * theta;
  t.row(6) = -cal.alpha * theta;
  t.row(7) = psi.tail<3>().transpose() / ss.w;
  return t;
}

// Tightness and wage-payment loadings on f = (u, a, s) given the one-state
// forecasts (a, p, q): the free-entry and surplus-splitting conditions are
// linear in the six loadings once the discounted forward sums are expressed
// through the one-state model, so they reduce to one 6x6 solve.
Eigen::Matrix<double, 6, 1> dmp_psi_solve(const DmpCalibration& cal, const DmpSteadyState& ss,
                                          double a, const Vector3d& p, const Vector3d& q) {
  const double aj = cal.alpha * ss.j;
  const double d1 = 1.0 - a * cal.beta * (1.0 - cal.s);
  const double d2 = 1.0 - a * cal.beta * (1.0 - cal.s - cal.p);
  require(std::abs(d1) > 1e-12 && std::abs(d2) > 1e-12, errc::numerical_failure,
          "degenerate discounting in the tightness-wage system");
  const Vector3d k1 = a * p / d1;
  const Vector3d k2 = a * cal.beta * cal.delta * (1.0 - cal.s) * p / d1;
  const Vector3d k3 = a * cal.beta * (1.0 - cal.s - cal.p) * p / d2;
  const double px = cal.p * ss.chi * (1.0 - cal.alpha);
  const double e1_const = (1.0 - cal.b) * q(1) - ss.zeta * q(2);

  Eigen::Matrix<double, 6, 6> m = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, 1> r = Eigen::Matrix<double, 6, 1>::Zero();
  for (int i = 0; i < 3; ++i) {
    m(i, i) = 1.0;
    for (int j = 0; j < 3; ++j) m(i, 3 + j) = k1(i) / aj * q(j);
    r(i) = k1(i) / aj * e1_const;
  }
  const Vector3d const_w(0.0, cal.delta * (1.0 - cal.b), cal.s * ss.chi - cal.delta * ss.zeta);
  for (int i = 0; i < 3; ++i) {
    const int row = 3 + i;
    m(row, row) += 1.0;
    m(row, i) += -px;
    for (int j = 0; j < 3; ++j) {
      m(row, 3 + j) += k2(i) * q(j);
      m(row, j) += -k3(i) * px * q(j);
      m(row, 3 + j) += k3(i) * (1.0 - cal.delta) * q(j);
    }
    r(row) = const_w(i) + k2(i) * e1_const + k3(i) * cal.s * ss.chi * q(2);
  }
  return m.fullPivLu().solve(r);
}

// Rational loadings: tightness and wages depend on the shocks alone, and the
// four coefficients solve the same two conditions with the true AR(1)
// forecasts in place of the one-state ones.
Eigen::Matrix<double, 4, 1> dmp_rational_gammas(const DmpCalibration& cal,
                                                const DmpSteadyState& ss, double* residual) {
  const double aj = cal.alpha * ss.j;
  const double beta = cal.beta, s = cal.s, p = cal.p;
  const double da = 1.0 - beta * cal.rho_a * (1.0 - s);
  const double ds = 1.0 - beta * cal.rho_s * (1.0 - s);
  const double da2 = 1.0 - beta * cal.rho_a * (1.0 - s - p);
  const double ds2 = 1.0 - beta * cal.rho_s * (1.0 - s - p);
  Eigen::Matrix<double, 4, 4> m = Eigen::Matrix<double, 4, 4>::Zero();
  Eigen::Matrix<double, 4, 1> r = Eigen::Matrix<double, 4, 1>::Zero();
  m.row(0) << 1.0, 0.0, cal.rho_a / (da * aj), 0.0;
  r(0) = cal.rho_a * (1.0 - cal.b) / (da * aj);
  m.row(1) << 0.0, 1.0, 0.0, cal.rho_s / (ds * aj);
  r(1) = -cal.rho_s * ss.zeta / (ds * aj);
  const double px = p * ss.chi * (1.0 - cal.alpha);
  const double c1 = beta * cal.delta * cal.rho_a * (1.0 - s) / da;
  const double c2 = beta * cal.rho_a * (1.0 - s - p) / da2;
  m.row(2) << -px * (1.0 + c2), 0.0, 1.0 + c1 + c2 * (1.0 - cal.delta), 0.0;
  r(2) = cal.delta * (1.0 - cal.b) + c1 * (1.0 - cal.b);
  const double c3 = beta * cal.delta * cal.rho_s * (1.0 - s) / ds;
  const double c4 = beta * cal.rho_s * (1.0 - s - p) / ds2;
  m.row(3) << 0.0, -px * (1.0 + c4), 0.0, 1.0 + c3 + c4 * (1.0 - cal.delta);
  r(3) = s * ss.chi - cal.delta * ss.zeta - c3 * ss.zeta + c4 * s * ss.chi;
  const Eigen::Matrix<double, 4, 1> sol = m.fullPivLu().solve(r);
  if (residual != nullptr) *residual = (m * sol - r).cwiseAbs().maxCoeff();
  return sol;
}

}  // namespace

DmpEquilibrium solve_dmp(const DmpCalibration& cal, Mode mode) {
  DmpEquilibrium eq;
  eq.mode = mode;
  eq.steady = dmp_steady_state(cal);
  const DmpSteadyState& ss = eq.steady;
  const DmpShocks shocks = dmp_shocks(cal);
  eq.shock_gamma0 = shocks.gamma0;
  eq.shock_innovation = shocks.innovation;
  const Matrix3d innov = dmp_state_innovation(shocks.innovation);

  double re_residual = 0.0;
  const Eigen::Matrix<double, 4, 1> re = dmp_rational_gammas(cal, ss, &re_residual);

  if (mode == Mode::rational) {
    eq.psi << 0.0, re(0), re(1), 0.0, re(2), re(3);
    eq.t_map = dmp_t_map(cal, ss, eq.psi);
    eq.transition = dmp_transition(cal, Vector3d(0.0, re(0), re(1)));
    eq.residual = re_residual;
    eq.iterations = 1;
    return eq;
  }

  OneStatePseudoTrue inner_sol;
  Eigen::Matrix<double, 6, 1> inner_psi = Eigen::Matrix<double, 6, 1>::Zero();
  const auto map = [&](const VectorXd& t) -> VectorXd {
    const Matrix3d f = dmp_transition(cal, Vector3d(t(0), t(1), t(2)));
    const double rho_f = spectral_radius(f);
    require(rho_f < 1.0 - 1e-12, errc::numerical_failure,
            "candidate law of motion is not convergent");
    const Matrix3d g0 = lyapunov(f, innov);
    const Matrix3d g1 = f * g0;
    inner_sol = one_state_from_c1(g0, g1);
    inner_psi = dmp_psi_solve(cal, ss, inner_sol.a, inner_sol.p, inner_sol.q);
    return inner_psi.head<3>();
  };

  VectorXd start(3);
  start << 0.0, re(0), re(1);
  FixedPointRun run;
  bool map_failed = false;
  try {
    run = damped_fixed_point(start, map, 0.5, 1e-12, 10000);
  } catch (const Error&) {
    map_failed = true;
  }
  VectorXd solution;
  if (!map_failed && run.converged) {
    solution = run.x;
    eq.residual = run.residual;
    eq.iterations = run.iterations;
  } else {
    eq.used_fallback = true;
    eq.warnings.push_back(
        "damped iteration on the tightness loadings did not settle; switched to residual "
        "minimization");
    std::vector<VectorXd> starts{start, 1.1 * start, 0.9 * start,
                                 start + VectorXd::Constant(3, 0.05),
                                 start - VectorXd::Constant(3, 0.05)};
    bool multiple = false;
    solution = fallback_solve(starts, map, [](const VectorXd&) { return true; }, 1e-8,
                              map_failed ? std::vector<double>{} : run.residual_path,
                              multiple);
    if (multiple)
      eq.warnings.push_back(
          "multiple self-consistent tightness solutions found; reporting the "
          "smallest-residual one");
    eq.residual = (map(solution) - solution).cwiseAbs().maxCoeff();
    eq.iterations = map_failed ? 0 : run.iterations;
  }

  map(solution);
  eq.psi = inner_psi;
  eq.psi.head<3>() = solution.head<3>();
  eq.t_map = dmp_t_map(cal, ss, eq.psi);
  eq.transition = dmp_transition(cal, Vector3d(solution(0), solution(1), solution(2)));

  OneStatePseudoTrue sol = inner_sol;
  // Sign convention: the tightness loading on the attention index is positive.
  const double theta_on_u = Vector3d(eq.psi.head<3>()).dot(sol.q);
  if (theta_on_u < 0.0) {
    sol.u = -sol.u;
    sol.p = -sol.p;
    sol.q = -sol.q;
  }
  eq.pseudo_true = sol;
  const double s1 = sol.p.cwiseAbs().sum();
  eq.z_weights = sol.p / s1;
  eq.z_loading_theta = s1 * Vector3d(eq.psi.head<3>()).dot(sol.q);
  eq.z_loading_p = (1.0 - cal.alpha) * eq.z_loading_theta;

  const LatentVarProcess proc =
      LatentVarProcess::make(eq.transition, Matrix3d::Identity(), innov, kInfiniteCap);
  verify_one_state(proc, sol, eq.warnings, "dmp");
  return eq;
}

LinearStateLaw DmpEquilibrium::law() const {
  const bool with_z = pseudo_true.p.size() == 3;
  MatrixXd obs(with_z ? 9 : 8, 3);
  obs.topRows<8>() = t_map;
  std::vector<std::string> names{"a_hat", "s_hat", "theta_hat", "v_hat",
                                 "u_hat", "p_hat", "q_hat", "w_hat"};
  if (with_z) {
    obs.row(8) = z_weights.transpose();
    names.push_back("z_hat");
  }
  return LinearStateLaw::make(transition, obs, dmp_state_innovation(shock_innovation), names);
}

// ---------------------------------------------------------------------------
// Feedback-economy loading transform
// ---------------------------------------------------------------------------

MatrixXd ge_pe_transform(const MatrixXd& h, const VectorXd& b, const VectorXd& c,
                         const VectorXd& g, double beta, const VectorXd& alphas, int d) {
  const int m = static_cast<int>(h.rows());
  const int n = static_cast<int>(h.cols());
  require(m > 0 && n > 0, errc::invalid_argument, "loading matrix must be nonempty");
  require(b.size() == n && c.size() == n && g.size() == n, errc::invalid_argument,
          "b, c and g must match the number of observables");
  require(alphas.size() == m, errc::invalid_argument,
          "one persistence per factor is required");
  require(d >= 0 && d <= m, errc::invalid_argument,
          "retained dimension must lie between 0 and the factor count");
  require(beta > 0.0 && beta < 1.0, errc::invalid_argument, "beta must lie in (0, 1)");
  require(beta * alphas.cwiseAbs().maxCoeff() < 1.0, errc::invalid_argument,
          "beta times the largest factor persistence must stay below one");
  for (int k = 0; k + 1 < m; ++k)
    require(std::abs(alphas(k)) >= std::abs(alphas(k + 1)) - 1e-12, errc::invalid_argument,
            "factor persistences must be sorted by decreasing magnitude");
  const Eigen::JacobiSVD<MatrixXd> svd(h);
  const double sv_min = svd.singularValues().minCoeff();
  const double sv_max = svd.singularValues().maxCoeff();
  require(sv_min > 1e-12 * sv_max, errc::rank_deficient_h,
          "factor loading matrix must have full row rank");

  const MatrixXd h_pinv = linalg::pinv(h);
  VectorXd u = b;
  for (int k = 0; k < d; ++k) {
    const double w = alphas(k) * beta / (1.0 - alphas(k) * beta);
    u += w * h_pinv.col(k) * h.row(k).dot(c);
  }
  return h * (MatrixXd::Identity(n, n) - u * g.transpose());
}

}  // namespace kldr::macromodels
