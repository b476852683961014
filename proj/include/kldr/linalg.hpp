#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "kldr/errors.hpp"

// Shared dense linear-algebra helpers used across modules. Everything here is
// a pure function; matrices are small (desk scale), so clarity beats clever
// blocking throughout.
namespace kldr::linalg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Largest absolute eigenvalue of a (generally non-symmetric) real matrix.
double spectral_radius(const MatrixXd& m);

inline MatrixXd symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

// Maximum absolute asymmetry |M - M'| relative to the norm of M.
double asymmetry(const MatrixXd& m);

// Symmetric square root of a PSD matrix via eigen-decomposition.
// Eigenvalues below `floor` are clamped to `floor` before taking roots.
MatrixXd sqrt_psd(const MatrixXd& m, double floor = 1e-14);

// Symmetric inverse square root of a positive definite matrix.
MatrixXd inv_sqrt_psd(const MatrixXd& m, double floor = 1e-14);

// Moore-Penrose pseudo-inverse. Singular values below rel_tol * max_sv are
// treated as exactly zero.
MatrixXd pinv(const MatrixXd& m, double rel_tol = 1e-12);

// Rank of a symmetric PSD matrix by relative eigenvalue threshold.
int psd_rank(const MatrixXd& m, double rel_tol = 1e-12);

// Log of the pseudo-determinant (product of eigenvalues above threshold) of a
// symmetric PSD matrix.
double log_pseudo_det(const MatrixXd& m, double rel_tol = 1e-12);

// Condition number (ratio of extreme absolute eigenvalues) of a symmetric
// matrix; +inf when the smallest is zero.
double sym_cond(const MatrixXd& m);

// Solves S = sum_{k>=0} G^k X Ft^k, i.e. the unique solution of
// S = X + G S Ft, via a Kronecker-product linear solve. Requires
// rho(G) * rho(Ft) < 1.
MatrixXd cross_geometric_sum(const MatrixXd& G, const MatrixXd& X, const MatrixXd& Ft);

// Solves the discrete Lyapunov equation V = F V F' + Sigma for stable F.
// Throws NonConvergent when rho(F) >= 1 - 1e-10, NumericalFailure when the
// residual check fails.
MatrixXd lyapunov(const MatrixXd& F, const MatrixXd& Sigma);

// All eigenpairs of a symmetric matrix, sorted by |eigenvalue| descending.
// Ties in magnitude put the positive eigenvalue first, then order by the
// lexicographically smallest sign-normalized eigenvector. Eigenvectors carry
// the first-nonzero-positive sign convention.
struct SymEigenPair {
  double value;
  VectorXd vector;
};
std::vector<SymEigenPair> eig_by_magnitude(const MatrixXd& m, double tie_tol = 1e-10);

// Largest (algebraic) eigenvalue and its unit eigenvector of a symmetric
// matrix, eigenvector sign-normalized.
std::pair<double, VectorXd> top_eig_sym(const MatrixXd& m);

// Flip the vector so its first component larger than tol * ||v|| in magnitude
// is positive.
VectorXd sign_normalize(VectorXd v, double rel_tol = 1e-12);

}  // namespace kldr::linalg
