#pragma once

#include <Eigen/Dense>

#include <limits>
#include <vector>

#include "fdboot/curves.hpp"

namespace fdboot {

// Discretized bivariate kernel K(t_i, t_j) on a grid.
struct KernelMatrix {
  Eigen::MatrixXd values;
  Grid grid;
};

// Leading eigenpairs of the integral operator f -> int K(., s) f(s) ds.
// Eigenfunctions are the columns of `eigenfunctions` (m x count), orthonormal
// in the grid-weighted inner product; each is signed so that its entry of
// largest magnitude is positive.
struct EigenSystem {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenfunctions;
  // f_p = (lambda_1 + ... + lambda_p) / (sum of all eigenvalues), p = 1..count.
  Eigen::VectorXd explained_fraction;
  // Sum of all eigenvalues of the discretized operator (its trace).
  double total_variance = 0.0;
  // lambda_{count+1}, or NaN when the solve did not produce it.
  double next_eigenvalue = std::numeric_limits<double>::quiet_NaN();

  int count() const noexcept { return static_cast<int>(eigenvalues.size()); }
  Curve eigenfunction(int k) const { return eigenfunctions.col(k); }
};

// A kernel held as sum_r c_r x_r(t) x_r(s) with c_r >= 0. Every covariance
// estimator in the library has this form, and it lets eigen_decompose work
// on an r x r Gram matrix when r is smaller than the grid.
struct OuterProductKernel {
  Grid grid;
  Eigen::MatrixXd rows;          // r x m
  Eigen::VectorXd coefficients;  // r

  KernelMatrix dense() const;
};

enum class EigenRoute {
  Automatic,  // Gram when rows < grid size, kernel otherwise
  Kernel,     // m x m symmetric problem W^1/2 K W^1/2
  Gram,       // r x r problem on the weighted rows
};

Curve group_mean(const FunctionalDataset& data, std::size_t i);
Curve pooled_mean(const FunctionalDataset& data);

// Group-wise centred curves X_ij - mean_i.
FunctionalDataset residuals(const FunctionalDataset& data);

// (1/n_i) sum_j e_ij(t) e_ij(s). Throws DegenerateGroup when n_i < 2.
KernelMatrix group_covariance(const FunctionalDataset& data, std::size_t i);
// sum_i (n_i/N) C_i.
KernelMatrix pooled_covariance(const FunctionalDataset& data);
// (n_2/N) C_1 + (n_1/N) C_2, the kernel behind the mean-test projections.
// Note the crossed weights. Throws UnsupportedK unless K == 2.
KernelMatrix mean_test_pooled_kernel(const FunctionalDataset& data);

OuterProductKernel group_covariance_factor(const FunctionalDataset& data, std::size_t i);
OuterProductKernel pooled_covariance_factor(const FunctionalDataset& data);
OuterProductKernel mean_test_kernel_factor(const FunctionalDataset& data);

// Throws InvalidKernel if the matrix is not symmetric to 1e-10 relative.
EigenSystem eigen_decompose(const KernelMatrix& kernel, int count);
EigenSystem eigen_decompose(const OuterProductKernel& kernel, int count,
                            EigenRoute route = EigenRoute::Automatic);

// Indices k (1-based, k <= p) with lambda_k - lambda_{k+1} < 1e-10 lambda_1.
std::vector<int> near_degenerate_pairs(const EigenSystem& system, int p);

// Row j, column k: <X_ij - center, basis_k>. `basis` is m x p.
Eigen::MatrixXd project_scores(const FunctionalDataset& data, std::size_t i, const Curve& center,
                               const Eigen::MatrixXd& basis);
Eigen::MatrixXd project_scores(const FunctionalDataset& data, std::size_t i, const Curve& center,
                               const std::vector<Curve>& basis);

}  // namespace fdboot
