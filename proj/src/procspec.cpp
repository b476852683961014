#include "kldr/procspec.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "kldr/linalg.hpp"

namespace kldr::procspec {

using namespace kldr::linalg;

LatentVarProcess LatentVarProcess::make(MatrixXd F, MatrixXd H, MatrixXd Sigma,
                                        double cond_cap) {
  require(F.rows() == F.cols(), errc::invalid_argument, "F must be square");
  require(Sigma.rows() == Sigma.cols() && Sigma.rows() == F.rows(), errc::invalid_argument,
          "Sigma must be m x m");
  require(H.rows() == F.rows(), errc::invalid_argument, "H must have m rows");
  require(spectral_radius(F) < 1.0 - 1e-10, errc::non_convergent,
          "latent transition must be a convergent matrix");
  require(asymmetry(Sigma) < 1e-12 || Sigma.norm() == 0.0, errc::invalid_argument,
          "Sigma must be symmetric within 1e-12");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(Sigma));
  require(es.eigenvalues().minCoeff() >= -1e-12, errc::invalid_argument,
          "Sigma must be PSD (eigenvalues >= -1e-12)");
  LatentVarProcess proc{std::move(F), std::move(H), symmetrize(Sigma)};
  if (std::isfinite(cond_cap)) {
    MatrixXd V = lyapunov_solve(proc.F, proc.Sigma);
    MatrixXd gamma0 = proc.H.transpose() * V * proc.H;
    require(sym_cond(gamma0) < cond_cap, errc::singular_gamma0,
            "implied Gamma_0 is singular beyond the conditioning cap");
  }
  return proc;
}

MatrixXd AutocovSeq::gamma(int l) const {
  int a = std::abs(l);
  if (a > max_lag()) return MatrixXd::Zero(n(), n());
  if (l >= 0) return gammas[static_cast<size_t>(a)];
  return gammas[static_cast<size_t>(a)].transpose();
}

AutocovSeq AutocovSeq::make(std::vector<MatrixXd> gammas, double tail_rate,
                            std::optional<LatentVarProcess> source, double cond_cap) {
  require(!gammas.empty(), errc::invalid_argument, "need at least Gamma_0");
  const auto n = gammas.front().rows();
  for (const auto& g : gammas) {
    require(g.rows() == n && g.cols() == n, errc::invalid_argument,
            "all autocovariance matrices must share one shape");
    require(g.allFinite(), errc::invalid_argument, "autocovariance matrices must be finite");
  }
  require(tail_rate >= 0.0 && tail_rate < 1.0, errc::invalid_argument,
          "tail_rate must lie in [0,1)");
  require(asymmetry(gammas.front()) < 1e-10 || gammas.front().norm() == 0.0,
          errc::invalid_argument, "Gamma_0 must be symmetric");
  gammas.front() = symmetrize(gammas.front());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(gammas.front());
  require(es.eigenvalues().minCoeff() >= -1e-10 * std::max(1.0, es.eigenvalues().maxCoeff()),
          errc::invalid_argument, "Gamma_0 must be PSD");
  if (std::isfinite(cond_cap))
    require(sym_cond(gammas.front()) < cond_cap, errc::singular_gamma0,
            "Gamma_0 is singular beyond the conditioning cap");
  return AutocovSeq{std::move(gammas), tail_rate, std::move(source)};
}

const MatrixXd& AutocorrSeq::c(int l) const {
  require(l >= 1 && l <= max_lag(), errc::invalid_argument, "autocorrelation lag out of range");
  return cs[static_cast<size_t>(l - 1)];
}

MatrixXd lyapunov_solve(const MatrixXd& F, const MatrixXd& Sigma) {
  return kldr::linalg::lyapunov(F, Sigma);
}

int default_lag_count(double tail_rate, int min_lag, int max_lag) {
  if (tail_rate <= 0.0) return min_lag;
  double L = std::log(1e-12) / std::log(tail_rate);
  int lags = static_cast<int>(std::ceil(L));
  return std::clamp(lags, min_lag, max_lag);
}

double geometric_tail_rate(double spectral_radius) {
  return std::min(spectral_radius + 0.01 * (1.0 - spectral_radius), 1.0 - 1e-12);
}

namespace {

double tail_rate_for(const LatentVarProcess& proc) {
  return geometric_tail_rate(spectral_radius(proc.F));
}

}  // namespace

AutocovSeq autocov_from_var(const LatentVarProcess& proc, int L) {
  require(L >= 1, errc::invalid_argument, "lag count must be >= 1");
  MatrixXd V = lyapunov_solve(proc.F, proc.Sigma);
  std::vector<MatrixXd> gammas;
  gammas.reserve(static_cast<size_t>(L) + 1);
  MatrixXd FlV = V;  // F^l V
  gammas.push_back(symmetrize(proc.H.transpose() * FlV * proc.H));
  for (int l = 1; l <= L; ++l) {
    FlV = proc.F * FlV;
    gammas.push_back(proc.H.transpose() * FlV * proc.H);
  }
  require(sym_cond(gammas.front()) < 1e12, errc::singular_gamma0,
          "Gamma_0 is singular beyond the conditioning cap");
  return AutocovSeq{std::move(gammas), tail_rate_for(proc), proc};
}

AutocovSeq autocov_from_var(const LatentVarProcess& proc) {
  return autocov_from_var(proc, default_lag_count(tail_rate_for(proc), 8));
}

AutocorrSeq autocorr(const AutocovSeq& acv) {
  require(sym_cond(acv.gammas.front()) < 1e12, errc::singular_gamma0,
          "Gamma_0 is singular; rank-reduce first");
  MatrixXd g0_inv_sqrt = inv_sqrt_psd(acv.gammas.front());
  AutocorrSeq acs;
  acs.cs.reserve(static_cast<size_t>(acv.max_lag()));
  for (int l = 1; l <= acv.max_lag(); ++l) {
    MatrixXd c = 0.5 * g0_inv_sqrt * (acv.gamma(l) + acv.gamma(l).transpose()) * g0_inv_sqrt;
    acs.cs.push_back(symmetrize(c));
  }
  if (!acs.cs.empty()) acs.rho_c1 = spectral_radius(acs.cs.front());
  require(acs.cs.empty() || acs.rho_c1 < 1.0, errc::numerical_failure,
          "rho(C_1) must be strictly below one for a stationary nondeterministic process");
  return acs;
}

ErgodicityReport check_exponential_ergodicity(const AutocorrSeq& acs, double tol) {
  ErgodicityReport report;
  report.rho_c1 = acs.rho_c1;
  report.is_exp_ergodic = true;
  double bound = 1.0;
  for (int l = 1; l <= acs.max_lag(); ++l) {
    bound *= acs.rho_c1;
    double margin = bound - spectral_radius(acs.c(l));
    report.margins.push_back(margin);
    if (margin < -tol && report.is_exp_ergodic) {
      report.is_exp_ergodic = false;
      report.first_violation_lag = l;
    }
  }
  return report;
}

AutocovSeq transform_process(const AutocovSeq& acv, const MatrixXd& T) {
  require(T.cols() == acv.n(), errc::invalid_argument, "T must have n columns");
  std::vector<MatrixXd> gammas;
  gammas.reserve(acv.gammas.size());
  for (const auto& g : acv.gammas) gammas.push_back(T * g * T.transpose());
  gammas.front() = symmetrize(gammas.front());
  require(sym_cond(gammas.front()) < 1e12, errc::rank_deficient,
          "transformed Gamma_0 is singular; rank-reduce first");
  return AutocovSeq{std::move(gammas), acv.tail_rate, std::nullopt};
}

std::pair<AutocovSeq, MatrixXd> rank_reduce(const AutocovSeq& acv, double rel_tol) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(acv.gammas.front()));
  require(es.info() == Eigen::Success, errc::numerical_failure, "eigen solver failed");
  double top = es.eigenvalues().maxCoeff();
  double cutoff = rel_tol * std::max(top, 0.0);
  std::vector<int> keep;
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()(i) > cutoff) keep.push_back(i);
  require(!keep.empty(), errc::invalid_argument, "Gamma_0 has no positive eigenvalues");
  const int r = static_cast<int>(keep.size());
  MatrixXd T(acv.n(), r);
  // Keep the dominant directions first so reduced coordinates are ordered by
  // explained variance.
  for (int j = 0; j < r; ++j)
    T.col(j) = sign_normalize(es.eigenvectors().col(keep[static_cast<size_t>(r - 1 - j)]));
  if (r == acv.n()) {
    return {acv, MatrixXd::Identity(acv.n(), acv.n())};
  }
  std::vector<MatrixXd> gammas;
  gammas.reserve(acv.gammas.size());
  for (const auto& g : acv.gammas) gammas.push_back(T.transpose() * g * T);
  gammas.front() = symmetrize(gammas.front());
  return {AutocovSeq{std::move(gammas), acv.tail_rate, std::nullopt}, T};
}

PersistenceDecomposition decompose_persistence(const AutocovSeq& acv) {
  require(acv.max_lag() >= 1, errc::invalid_argument, "need Gamma_1 for the decomposition");
  AutocorrSeq acs = autocorr(acv);
  MatrixXd g0_sqrt = sqrt_psd(acv.gammas.front());
  MatrixXd g0_inv_sqrt = inv_sqrt_psd(acv.gammas.front());
  PersistenceDecomposition out;
  for (const auto& pair : eig_by_magnitude(acs.c(1))) {
    PersistenceComponent comp;
    comp.rho = pair.value;
    comp.u = pair.vector;
    comp.p = g0_inv_sqrt * pair.vector;
    comp.q = g0_sqrt * pair.vector;
    out.components.push_back(std::move(comp));
  }
  return out;
}

}  // namespace kldr::procspec
