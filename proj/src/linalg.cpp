#include "kldr/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>

namespace kldr::linalg {

double spectral_radius(const MatrixXd& m) {
  require(m.rows() == m.cols(), errc::invalid_argument, "spectral_radius needs a square matrix");
  if (m.rows() == 0) return 0.0;
  Eigen::EigenSolver<MatrixXd> es(m, /*computeEigenvectors=*/false);
  require(es.info() == Eigen::Success, errc::numerical_failure, "eigen solver failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double asymmetry(const MatrixXd& m) {
  double scale = std::max(m.norm(), 1e-300);
  return (m - m.transpose()).norm() / scale;
}

namespace {

Eigen::SelfAdjointEigenSolver<MatrixXd> sym_eig(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(m));
  require(es.info() == Eigen::Success, errc::numerical_failure, "symmetric eigen solver failed");
  return es;
}

}  // namespace

MatrixXd sqrt_psd(const MatrixXd& m, double floor) {
  auto es = sym_eig(m);
  VectorXd vals = es.eigenvalues().cwiseMax(floor).cwiseSqrt();
  return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
}

MatrixXd inv_sqrt_psd(const MatrixXd& m, double floor) {
  auto es = sym_eig(m);
  VectorXd vals = es.eigenvalues().cwiseMax(floor).cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
}

MatrixXd pinv(const MatrixXd& m, double rel_tol) {
  if (m.size() == 0) return m.transpose();
  Eigen::JacobiSVD<MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  double cutoff = rel_tol * (sv.size() > 0 ? sv(0) : 0.0);
  VectorXd inv_sv = VectorXd::Zero(sv.size());
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff && sv(i) > 0.0) inv_sv(i) = 1.0 / sv(i);
  return svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
}

int psd_rank(const MatrixXd& m, double rel_tol) {
  auto es = sym_eig(m);
  double top = es.eigenvalues().cwiseAbs().maxCoeff();
  if (top <= 0.0) return 0;
  double cutoff = rel_tol * top;
  int r = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()(i) > cutoff) ++r;
  return r;
}

double log_pseudo_det(const MatrixXd& m, double rel_tol) {
  auto es = sym_eig(m);
  double top = es.eigenvalues().cwiseAbs().maxCoeff();
  double cutoff = rel_tol * std::max(top, 0.0);
  double acc = 0.0;
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()(i) > cutoff) acc += std::log(es.eigenvalues()(i));
  return acc;
}

double sym_cond(const MatrixXd& m) {
  auto es = sym_eig(m);
  VectorXd a = es.eigenvalues().cwiseAbs();
  double hi = a.maxCoeff();
  double lo = a.minCoeff();
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

MatrixXd cross_geometric_sum(const MatrixXd& G, const MatrixXd& X, const MatrixXd& Ft) {
  require(G.rows() == G.cols() && Ft.rows() == Ft.cols(), errc::invalid_argument,
          "cross_geometric_sum needs square G and Ft");
  require(X.rows() == G.rows() && X.cols() == Ft.rows(), errc::invalid_argument,
          "cross_geometric_sum shape mismatch");
  double contraction = spectral_radius(G) * spectral_radius(Ft);
  require(contraction < 1.0 - 1e-12, errc::non_convergent,
          "cross_geometric_sum requires rho(G)*rho(Ft) < 1");
  const auto r = G.rows();
  const auto c = Ft.rows();
  // vec(G S Ft) = (Ft' kron G) vec(S) in column-major layout.
  MatrixXd coeff = MatrixXd::Identity(r * c, r * c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < c; ++i)
      coeff.block(j * r, i * r, r, r) -= Ft(i, j) * G;
  Eigen::Map<const VectorXd> xvec(X.data(), X.size());
  VectorXd svec = coeff.partialPivLu().solve(xvec);
  require(svec.allFinite(), errc::numerical_failure, "cross_geometric_sum produced non-finite values");
  return Eigen::Map<const MatrixXd>(svec.data(), r, c);
}

MatrixXd lyapunov(const MatrixXd& F, const MatrixXd& Sigma) {
  require(F.rows() == F.cols(), errc::invalid_argument, "lyapunov needs square F");
  require(Sigma.rows() == F.rows() && Sigma.cols() == F.cols(), errc::invalid_argument,
          "lyapunov shape mismatch");
  require(spectral_radius(F) < 1.0 - 1e-10, errc::non_convergent,
          "lyapunov requires spectral radius of F strictly below one");
  MatrixXd V = symmetrize(cross_geometric_sum(F, Sigma, F.transpose()));
  double residual = (V - F * V * F.transpose() - Sigma).norm();
  double scale = std::max(Sigma.norm(), 1e-300);
  require(residual < 1e-10 * std::max(scale, V.norm()), errc::numerical_failure,
          "lyapunov residual check failed");
  return V;
}

VectorXd sign_normalize(VectorXd v, double rel_tol) {
  double scale = v.norm();
  if (scale <= 0.0) return v;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > rel_tol * scale) {
      if (v(i) < 0.0) v = -v;
      break;
    }
  }
  return v;
}

std::vector<SymEigenPair> eig_by_magnitude(const MatrixXd& m, double tie_tol) {
  auto es = sym_eig(m);
  std::vector<SymEigenPair> pairs;
  pairs.reserve(es.eigenvalues().size());
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    pairs.push_back({es.eigenvalues()(i), sign_normalize(es.eigenvectors().col(i))});
  auto lex_less = [](const VectorXd& a, const VectorXd& b) {
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      if (a(i) < b(i)) return true;
      if (a(i) > b(i)) return false;
    }
    return false;
  };
  std::sort(pairs.begin(), pairs.end(), [&](const SymEigenPair& a, const SymEigenPair& b) {
    double ma = std::abs(a.value), mb = std::abs(b.value);
    if (std::abs(ma - mb) > tie_tol) return ma > mb;
    if ((a.value >= 0.0) != (b.value >= 0.0)) return a.value >= 0.0;
    return lex_less(a.vector, b.vector);
  });
  return pairs;
}

std::pair<double, VectorXd> top_eig_sym(const MatrixXd& m) {
  auto es = sym_eig(m);
  Eigen::Index idx = 0;
  es.eigenvalues().maxCoeff(&idx);
  return {es.eigenvalues()(idx), sign_normalize(es.eigenvectors().col(idx))};
}

}  // namespace kldr::linalg
