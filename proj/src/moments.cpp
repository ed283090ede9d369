#include "fdboot/moments.hpp"

#include <algorithm>
#include <cmath>

namespace fdboot {

namespace {

constexpr double kSymmetryTolerance = 1e-10;
// Below this fraction of lambda_1 an eigenvector rebuilt from the Gram
// problem loses too many digits; such requests go to the kernel route.
constexpr double kGramReconstructionFloor = 1e-6;
constexpr double kDegenerateGap = 1e-10;

void check_group_index(const FunctionalDataset& data, std::size_t i) {
  if (i >= data.group_count()) {
    throw InvalidParameter("group index " + std::to_string(i) + " out of range (K = " +
                           std::to_string(data.group_count()) + ")");
  }
}

void require_two_curves(const FunctionalDataset& data, std::size_t i) {
  if (data.group_size(i) < 2) {
    throw DegenerateGroup("group " + data.labels()[i] + " has n_i = " +
                          std::to_string(data.group_size(i)) +
                          "; covariance estimation needs n_i >= 2");
  }
}

void require_two_groups(const FunctionalDataset& data) {
  if (data.group_count() != 2) {
    throw UnsupportedK("this operation is defined for K = 2 groups, got K = " +
                       std::to_string(data.group_count()));
  }
}

Eigen::MatrixXd centred(const FunctionalDataset& data, std::size_t i) {
  const Eigen::MatrixXd& x = data.group(i);
  return x.rowwise() - x.colwise().mean();
}

// Sorts eigenpairs of a self-adjoint solve into nonincreasing order and keeps
// the first `count`.
void take_leading(const Eigen::VectorXd& values, const Eigen::MatrixXd& vectors, int count,
                  Eigen::VectorXd& out_values, Eigen::MatrixXd& out_vectors) {
  // SelfAdjointEigenSolver returns ascending eigenvalues.
  const Eigen::Index n = values.size();
  out_values.resize(count);
  out_vectors.resize(vectors.rows(), count);
  for (int k = 0; k < count; ++k) {
    out_values[k] = values[n - 1 - k];
    out_vectors.col(k) = vectors.col(n - 1 - k);
  }
}

double next_after_leading(const Eigen::VectorXd& ascending, int count) {
  const Eigen::Index n = ascending.size();
  return count < n ? ascending[n - 1 - count] : std::numeric_limits<double>::quiet_NaN();
}

void finish(EigenSystem& sys, const Grid& grid) {
  // Map back from the symmetrized problem and fix signs.
  sys.eigenfunctions = grid.sqrt_weights().cwiseInverse().asDiagonal() * sys.eigenfunctions;
  for (int k = 0; k < sys.count(); ++k) {
    Eigen::Index arg = 0;
    sys.eigenfunctions.col(k).cwiseAbs().maxCoeff(&arg);
    if (sys.eigenfunctions(arg, k) < 0.0) sys.eigenfunctions.col(k) *= -1.0;
  }
  sys.explained_fraction.resize(sys.count());
  double running = 0.0;
  for (int k = 0; k < sys.count(); ++k) {
    running += sys.eigenvalues[k];
    sys.explained_fraction[k] =
        sys.total_variance > 0.0 ? std::min(running / sys.total_variance, 1.0) : 1.0;
  }
}

void check_count(int count, Eigen::Index m) {
  if (count < 1 || count > m) {
    throw InvalidParameter("eigen count must be in [1, " + std::to_string(m) + "], got " +
                           std::to_string(count));
  }
}

EigenSystem solve_symmetric(const Eigen::MatrixXd& a, const Grid& grid, int count) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
  if (solver.info() != Eigen::Success) {
    throw InvalidKernel("symmetric eigensolver did not converge");
  }
  EigenSystem sys;
  take_leading(solver.eigenvalues(), solver.eigenvectors(), count, sys.eigenvalues,
               sys.eigenfunctions);
  sys.next_eigenvalue = next_after_leading(solver.eigenvalues(), count);
  sys.total_variance = a.trace();
  finish(sys, grid);
  return sys;
}

// Rows of the weighted factor F with A = F^T F = W^1/2 K W^1/2.
Eigen::MatrixXd weighted_factor(const OuterProductKernel& kernel) {
  if (kernel.rows.cols() != kernel.grid.size() ||
      kernel.coefficients.size() != kernel.rows.rows()) {
    throw DimensionError("outer-product kernel shape does not match its grid");
  }
  if ((kernel.coefficients.array() < 0.0).any()) {
    throw InvalidKernel("outer-product kernel coefficients must be nonnegative");
  }
  return kernel.coefficients.cwiseSqrt().asDiagonal() * kernel.rows *
         kernel.grid.sqrt_weights().asDiagonal();
}

}  // namespace

KernelMatrix OuterProductKernel::dense() const {
  Eigen::MatrixXd k = rows.transpose() * coefficients.asDiagonal() * rows;
  return KernelMatrix{0.5 * (k + k.transpose()), grid};
}

Curve group_mean(const FunctionalDataset& data, std::size_t i) {
  check_group_index(data, i);
  return data.group(i).colwise().mean().transpose();
}

Curve pooled_mean(const FunctionalDataset& data) {
  Curve sum = Curve::Zero(data.grid_size());
  for (const auto& g : data.groups()) sum += g.colwise().sum().transpose();
  return sum / static_cast<double>(data.total_size());
}

FunctionalDataset residuals(const FunctionalDataset& data) {
  std::vector<Eigen::MatrixXd> groups;
  groups.reserve(data.group_count());
  for (std::size_t i = 0; i < data.group_count(); ++i) groups.push_back(centred(data, i));
  return FunctionalDataset(data.grid(), std::move(groups), data.labels());
}

OuterProductKernel group_covariance_factor(const FunctionalDataset& data, std::size_t i) {
  check_group_index(data, i);
  require_two_curves(data, i);
  const Eigen::Index n = data.group_size(i);
  return OuterProductKernel{data.grid(), centred(data, i),
                            Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n))};
}

OuterProductKernel pooled_covariance_factor(const FunctionalDataset& data) {
  for (std::size_t i = 0; i < data.group_count(); ++i) require_two_curves(data, i);
  const Eigen::Index total = data.total_size();
  Eigen::MatrixXd rows(total, data.grid_size());
  Eigen::Index offset = 0;
  for (std::size_t i = 0; i < data.group_count(); ++i) {
    rows.middleRows(offset, data.group_size(i)) = centred(data, i);
    offset += data.group_size(i);
  }
  // (n_i/N)(1/n_i) = 1/N for every residual.
  return OuterProductKernel{data.grid(), std::move(rows),
                            Eigen::VectorXd::Constant(total, 1.0 / static_cast<double>(total))};
}

OuterProductKernel mean_test_kernel_factor(const FunctionalDataset& data) {
  require_two_groups(data);
  require_two_curves(data, 0);
  require_two_curves(data, 1);
  const double n1 = static_cast<double>(data.group_size(0));
  const double n2 = static_cast<double>(data.group_size(1));
  const double total = n1 + n2;
  Eigen::MatrixXd rows(data.total_size(), data.grid_size());
  rows.topRows(data.group_size(0)) = centred(data, 0);
  rows.bottomRows(data.group_size(1)) = centred(data, 1);
  Eigen::VectorXd coeff(data.total_size());
  coeff.head(data.group_size(0)).setConstant(n2 / total / n1);
  coeff.tail(data.group_size(1)).setConstant(n1 / total / n2);
  return OuterProductKernel{data.grid(), std::move(rows), std::move(coeff)};
}

KernelMatrix group_covariance(const FunctionalDataset& data, std::size_t i) {
  return group_covariance_factor(data, i).dense();
}

KernelMatrix pooled_covariance(const FunctionalDataset& data) {
  for (std::size_t i = 0; i < data.group_count(); ++i) require_two_curves(data, i);
  const double total = static_cast<double>(data.total_size());
  Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(data.grid_size(), data.grid_size());
  for (std::size_t i = 0; i < data.group_count(); ++i) {
    const double share = static_cast<double>(data.group_size(i)) / total;
    pooled += share * group_covariance(data, i).values;
  }
  return KernelMatrix{std::move(pooled), data.grid()};
}

KernelMatrix mean_test_pooled_kernel(const FunctionalDataset& data) {
  require_two_groups(data);
  const double n1 = static_cast<double>(data.group_size(0));
  const double n2 = static_cast<double>(data.group_size(1));
  const double total = n1 + n2;
  Eigen::MatrixXd z =
      (n2 / total) * group_covariance(data, 0).values + (n1 / total) * group_covariance(data, 1).values;
  return KernelMatrix{std::move(z), data.grid()};
}

EigenSystem eigen_decompose(const KernelMatrix& kernel, int count) {
  const Eigen::Index m = kernel.grid.size();
  if (kernel.values.rows() != m || kernel.values.cols() != m) {
    throw DimensionError("kernel matrix shape does not match its grid");
  }
  if (!kernel.values.allFinite()) throw InvalidKernel("kernel matrix has non-finite entries");
  check_count(count, m);
  const double scale = kernel.values.cwiseAbs().maxCoeff();
  const double asym = (kernel.values - kernel.values.transpose()).cwiseAbs().maxCoeff();
  if (asym > kSymmetryTolerance * scale) {
    throw InvalidKernel("kernel is not symmetric (max |K - K^T| = " + std::to_string(asym) + ")");
  }
  const auto& sw = kernel.grid.sqrt_weights();
  Eigen::MatrixXd a = sw.asDiagonal() * kernel.values * sw.asDiagonal();
  a = 0.5 * (a + a.transpose()).eval();
  return solve_symmetric(a, kernel.grid, count);
}

EigenSystem eigen_decompose(const OuterProductKernel& kernel, int count, EigenRoute route) {
  const Eigen::Index m = kernel.grid.size();
  check_count(count, m);
  const Eigen::MatrixXd f = weighted_factor(kernel);
  const Eigen::Index r = f.rows();

  if (route == EigenRoute::Automatic) route = r < m ? EigenRoute::Gram : EigenRoute::Kernel;
  if (route == EigenRoute::Gram && count <= r) {
    Eigen::MatrixXd gram = f * f.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
    if (solver.info() != Eigen::Success) {
      throw InvalidKernel("symmetric eigensolver did not converge");
    }
    EigenSystem sys;
    Eigen::MatrixXd v;
    take_leading(solver.eigenvalues(), solver.eigenvectors(), count, sys.eigenvalues, v);
    const double top = sys.eigenvalues[0];
    if (top > 0.0 && sys.eigenvalues[count - 1] > kGramReconstructionFloor * top) {
      sys.eigenfunctions = f.transpose() * v;
      for (int k = 0; k < count; ++k) {
        sys.eigenfunctions.col(k) /= std::sqrt(sys.eigenvalues[k]);
      }
      sys.total_variance = gram.trace();
      // Beyond the Gram size the remaining eigenvalues are exactly zero.
      sys.next_eigenvalue = count < r ? next_after_leading(solver.eigenvalues(), count)
                                      : (count < m ? 0.0 : std::numeric_limits<double>::quiet_NaN());
      finish(sys, kernel.grid);
      return sys;
    }
    // Requested pairs reach into the numerical null space; fall through.
  }
  return solve_symmetric(f.transpose() * f, kernel.grid, count);
}

std::vector<int> near_degenerate_pairs(const EigenSystem& system, int p) {
  std::vector<int> out;
  if (system.count() == 0) return out;
  const double top = std::abs(system.eigenvalues[0]);
  const int last = std::min(p, system.count());
  for (int k = 0; k < last; ++k) {
    const double next =
        k + 1 < system.count() ? system.eigenvalues[k + 1] : system.next_eigenvalue;
    if (std::isnan(next)) break;
    if (system.eigenvalues[k] - next < kDegenerateGap * top) out.push_back(k + 1);
  }
  return out;
}

Eigen::MatrixXd project_scores(const FunctionalDataset& data, std::size_t i, const Curve& center,
                               const Eigen::MatrixXd& basis) {
  check_group_index(data, i);
  const Eigen::Index m = data.grid_size();
  if (center.size() != m || basis.rows() != m) {
    throw DimensionError("project_scores: center/basis length does not match grid");
  }
  const Eigen::MatrixXd c = data.group(i).rowwise() - center.transpose();
  return c * (data.grid().weights().asDiagonal() * basis);
}

Eigen::MatrixXd project_scores(const FunctionalDataset& data, std::size_t i, const Curve& center,
                               const std::vector<Curve>& basis) {
  Eigen::MatrixXd b(data.grid_size(), static_cast<Eigen::Index>(basis.size()));
  for (std::size_t k = 0; k < basis.size(); ++k) {
    if (basis[k].size() != data.grid_size()) {
      throw DimensionError("project_scores: basis curve " + std::to_string(k) +
                           " does not match grid");
    }
    b.col(static_cast<Eigen::Index>(k)) = basis[k];
  }
  return project_scores(data, i, center, b);
}

}  // namespace fdboot
