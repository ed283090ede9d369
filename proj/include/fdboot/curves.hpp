#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "fdboot/errors.hpp"

namespace fdboot {

// A curve is its vector of samples on a Grid.
using Curve = Eigen::VectorXd;

// Ordered sample points in [0,1] with composite-trapezoid quadrature weights.
// Every integral over [0,1] in the library goes through these weights.
class Grid {
 public:
  // Validates ordering and range, then assigns trapezoid weights.
  explicit Grid(Eigen::VectorXd points);

  // m equidistant points t_i = i/(m-1), i = 0..m-1.
  static Grid uniform(Eigen::Index m);

  Eigen::Index size() const noexcept { return points_.size(); }
  const Eigen::VectorXd& points() const noexcept { return points_; }
  const Eigen::VectorXd& weights() const noexcept { return weights_; }
  const Eigen::VectorXd& sqrt_weights() const noexcept { return sqrt_weights_; }

  // Bitwise comparison of the sample points.
  bool operator==(const Grid& other) const;

 private:
  Eigen::VectorXd points_;
  Eigen::VectorXd weights_;
  Eigen::VectorXd sqrt_weights_;
};

// Quadrature of f over the grid.
template <typename Derived>
typename Derived::Scalar integrate(const Eigen::MatrixBase<Derived>& f, const Grid& grid) {
  if (f.size() != grid.size()) {
    throw DimensionError("integrate: curve length " + std::to_string(f.size()) +
                         " does not match grid size " + std::to_string(grid.size()));
  }
  return grid.weights().dot(f.derived().template cast<double>());
}

// <f, g> = sum_i w_i f(t_i) g(t_i).
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar inner_product(const Eigen::MatrixBase<DerivedA>& f,
                                        const Eigen::MatrixBase<DerivedB>& g,
                                        const Grid& grid) {
  if (f.size() != grid.size() || g.size() != grid.size()) {
    throw DimensionError("inner_product: curve lengths " + std::to_string(f.size()) + " and " +
                         std::to_string(g.size()) + " do not match grid size " +
                         std::to_string(grid.size()));
  }
  return (f.derived().array() * g.derived().array() * grid.weights().array()).sum();
}

template <typename Derived>
typename Derived::Scalar squared_norm(const Eigen::MatrixBase<Derived>& f, const Grid& grid) {
  return inner_product(f, f, grid);
}

template <typename Derived>
typename Derived::Scalar norm(const Eigen::MatrixBase<Derived>& f, const Grid& grid) {
  using std::sqrt;
  return sqrt(squared_norm(f, grid));
}

// K >= 2 groups of curves sampled on one grid. Each group is stored as an
// n_i x m matrix whose rows are curves.
class FunctionalDataset {
 public:
  FunctionalDataset(Grid grid, std::vector<Eigen::MatrixXd> groups,
                    std::vector<std::string> labels = {});

  const Grid& grid() const noexcept { return grid_; }
  Eigen::Index grid_size() const noexcept { return grid_.size(); }

  std::size_t group_count() const noexcept { return groups_.size(); }
  Eigen::Index group_size(std::size_t i) const { return groups_.at(i).rows(); }
  Eigen::Index total_size() const noexcept { return total_; }
  std::vector<Eigen::Index> group_sizes() const;

  const Eigen::MatrixXd& group(std::size_t i) const { return groups_.at(i); }
  const std::vector<Eigen::MatrixXd>& groups() const noexcept { return groups_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  Curve curve(std::size_t i, Eigen::Index j) const { return groups_.at(i).row(j).transpose(); }

  // All curves stacked group after group (N x m).
  Eigen::MatrixXd stacked() const;

 private:
  Grid grid_;
  std::vector<Eigen::MatrixXd> groups_;
  std::vector<std::string> labels_;
  Eigen::Index total_ = 0;
};

// Least-squares projection onto {1, sqrt2 sin(2 pi k t), sqrt2 cos(2 pi k t)}
// for k <= (n_basis-1)/2, evaluated back on the grid.
class FourierSmoother {
 public:
  FourierSmoother(const Grid& grid, int n_basis);

  int basis_size() const noexcept { return n_basis_; }
  // m x n_basis matrix of basis functions sampled on the grid.
  const Eigen::MatrixXd& basis() const noexcept { return basis_; }

  Curve smooth(const Curve& raw) const;
  // Smooths every row of `curves` (n x m).
  Eigen::MatrixXd smooth_rows(const Eigen::MatrixXd& curves) const;
  FunctionalDataset smooth(const FunctionalDataset& data) const;

 private:
  Eigen::Index m_;
  int n_basis_;
  Eigen::MatrixXd basis_;
  Eigen::MatrixXd q_;  // orthonormal basis of the column span of basis_
};

Curve fourier_smooth(const Curve& raw, const Grid& grid, int n_basis);

// CSV format: optional `#grid,t_1,...,t_m` row, data rows `label,v_1,...,v_m`.
// Other lines starting with '#' are comments. Without a grid row the grid is
// uniform on [0,1].
FunctionalDataset load_dataset(std::istream& in);
FunctionalDataset load_dataset_file(const std::string& path);

// Writes comment lines (each prefixed with "# "), the grid row, then data rows.
// Values are written with 17 significant digits.
void save_dataset(const FunctionalDataset& data, std::ostream& out,
                  const std::vector<std::string>& comments = {});
void save_dataset_file(const FunctionalDataset& data, const std::string& path,
                       const std::vector<std::string>& comments = {});

}  // namespace fdboot
