#include "fdboot/curves.hpp"

#include <cmath>
#include <numbers>

namespace fdboot {

Grid::Grid(Eigen::VectorXd points) : points_(std::move(points)) {
  const Eigen::Index m = points_.size();
  if (m < 2) {
    throw InvalidParameter("grid needs at least 2 points, got " + std::to_string(m));
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!std::isfinite(points_[i])) {
      throw InvalidParameter("grid point " + std::to_string(i) + " is not finite");
    }
    if (i > 0 && !(points_[i] > points_[i - 1])) {
      throw ValidationError("grid points must be strictly increasing (index " + std::to_string(i) +
                            ")");
    }
  }
  if (points_[0] < 0.0 || points_[m - 1] > 1.0) {
    throw ValidationError("grid points must lie in [0,1]");
  }

  weights_.resize(m);
  weights_.setZero();
  for (Eigen::Index i = 0; i + 1 < m; ++i) {
    const double half = 0.5 * (points_[i + 1] - points_[i]);
    weights_[i] += half;
    weights_[i + 1] += half;
  }
  sqrt_weights_ = weights_.cwiseSqrt();
}

Grid Grid::uniform(Eigen::Index m) {
  if (m < 2) {
    throw InvalidParameter("grid needs at least 2 points, got " + std::to_string(m));
  }
  Eigen::VectorXd t(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    t[i] = static_cast<double>(i) / static_cast<double>(m - 1);
  }
  t[m - 1] = 1.0;
  return Grid(std::move(t));
}

bool Grid::operator==(const Grid& other) const {
  return points_.size() == other.points_.size() && points_ == other.points_;
}

FunctionalDataset::FunctionalDataset(Grid grid, std::vector<Eigen::MatrixXd> groups,
                                     std::vector<std::string> labels)
    : grid_(std::move(grid)), groups_(std::move(groups)), labels_(std::move(labels)) {
  if (groups_.size() < 2) {
    throw ValidationError("K >= 2 required, got " + std::to_string(groups_.size()) + " group(s)");
  }
  if (labels_.empty()) {
    for (std::size_t i = 0; i < groups_.size(); ++i) labels_.push_back(std::to_string(i + 1));
  }
  if (labels_.size() != groups_.size()) {
    throw DimensionError("label count does not match group count");
  }
  for (std::size_t i = 0; i < groups_.size(); ++i) {
    const auto& g = groups_[i];
    if (g.rows() < 1) {
      throw ValidationError("group " + labels_[i] + " is empty");
    }
    if (g.cols() != grid_.size()) {
      throw DimensionError("group " + labels_[i] + " has curves of length " +
                           std::to_string(g.cols()) + ", grid has " +
                           std::to_string(grid_.size()) + " points");
    }
    if (!g.allFinite()) {
      throw ValidationError("group " + labels_[i] + " contains non-finite values");
    }
    total_ += g.rows();
  }
}

std::vector<Eigen::Index> FunctionalDataset::group_sizes() const {
  std::vector<Eigen::Index> sizes;
  sizes.reserve(groups_.size());
  for (const auto& g : groups_) sizes.push_back(g.rows());
  return sizes;
}

Eigen::MatrixXd FunctionalDataset::stacked() const {
  Eigen::MatrixXd all(total_, grid_.size());
  Eigen::Index row = 0;
  for (const auto& g : groups_) {
    all.middleRows(row, g.rows()) = g;
    row += g.rows();
  }
  return all;
}

FourierSmoother::FourierSmoother(const Grid& grid, int n_basis)
    : m_(grid.size()), n_basis_(n_basis) {
  if (n_basis < 1 || n_basis % 2 == 0) {
    throw InvalidParameter("n_basis must be odd and >= 1, got " + std::to_string(n_basis));
  }
  if (n_basis > m_) {
    throw InvalidParameter("n_basis " + std::to_string(n_basis) + " exceeds grid size " +
                           std::to_string(m_));
  }
  const double two_pi = 2.0 * std::numbers::pi;
  const double root2 = std::numbers::sqrt2;
  basis_.resize(m_, n_basis);
  basis_.col(0).setOnes();
  for (int k = 1; 2 * k <= n_basis - 1; ++k) {
    for (Eigen::Index i = 0; i < m_; ++i) {
      const double arg = two_pi * k * grid.points()[i];
      basis_(i, 2 * k - 1) = root2 * std::sin(arg);
      basis_(i, 2 * k) = root2 * std::cos(arg);
    }
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(basis_);
  if (qr.rank() < n_basis) {
    throw InvalidParameter("Fourier basis of size " + std::to_string(n_basis) +
                           " is not identifiable on this grid");
  }
  q_ = qr.householderQ() * Eigen::MatrixXd::Identity(m_, n_basis);
}

Curve FourierSmoother::smooth(const Curve& raw) const {
  if (raw.size() != m_) {
    throw DimensionError("fourier_smooth: curve length does not match grid");
  }
  return q_ * (q_.transpose() * raw);
}

Eigen::MatrixXd FourierSmoother::smooth_rows(const Eigen::MatrixXd& curves) const {
  if (curves.cols() != m_) {
    throw DimensionError("fourier_smooth: curve length does not match grid");
  }
  return (curves * q_) * q_.transpose();
}

FunctionalDataset FourierSmoother::smooth(const FunctionalDataset& data) const {
  std::vector<Eigen::MatrixXd> groups;
  groups.reserve(data.group_count());
  for (const auto& g : data.groups()) groups.push_back(smooth_rows(g));
  return FunctionalDataset(data.grid(), std::move(groups), data.labels());
}

Curve fourier_smooth(const Curve& raw, const Grid& grid, int n_basis) {
  return FourierSmoother(grid, n_basis).smooth(raw);
}

}  // namespace fdboot
