#include "resem/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "resem/errors.hpp"

namespace resem {
namespace {

// Eigendecomposition with the condition-number gate applied.
Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> checked_eigen(
    const Eigen::Ref<const Eigen::MatrixXd>& m, const std::string& block_name,
    double condition_cap) {
  if (m.rows() != m.cols())
    throw DomainError("matrix for block '" + block_name + "' is not square");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success)
    throw SingularDesignError(block_name, "eigendecomposition failed");
  const auto& ev = solver.eigenvalues();
  const double lo = ev.minCoeff();
  const double hi = ev.maxCoeff();
  if (!(lo > 0.0))
    throw SingularDesignError(block_name, "covariance is not positive definite");
  if (hi / lo > condition_cap)
    throw SingularDesignError(
        block_name, "condition number " + std::to_string(hi / lo) +
                        " exceeds cap " + std::to_string(condition_cap));
  return solver;
}

}  // namespace

Eigen::MatrixXd capped_inverse(const Eigen::Ref<const Eigen::MatrixXd>& m,
                               const std::string& block_name,
                               double condition_cap) {
  if (m.rows() == 0) return Eigen::MatrixXd(0, 0);
  auto solver = checked_eigen(m, block_name, condition_cap);
  return solver.eigenvectors() *
         solver.eigenvalues().cwiseInverse().asDiagonal() *
         solver.eigenvectors().transpose();
}

Eigen::MatrixXd spectral_sqrt(const Eigen::Ref<const Eigen::MatrixXd>& m,
                              const std::string& block_name,
                              double condition_cap) {
  if (m.rows() == 0) return Eigen::MatrixXd(0, 0);
  auto solver = checked_eigen(m, block_name, condition_cap);
  return solver.eigenvectors() *
         solver.eigenvalues().cwiseSqrt().asDiagonal() *
         solver.eigenvectors().transpose();
}

Eigen::MatrixXd spectral_inverse_sqrt(const Eigen::Ref<const Eigen::MatrixXd>& m,
                                      const std::string& block_name,
                                      double condition_cap) {
  if (m.rows() == 0) return Eigen::MatrixXd(0, 0);
  auto solver = checked_eigen(m, block_name, condition_cap);
  return solver.eigenvectors() *
         solver.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
         solver.eigenvectors().transpose();
}

double quadratic_form_inverse(const Eigen::Ref<const Eigen::MatrixXd>& m,
                              const Eigen::Ref<const Eigen::VectorXd>& x,
                              const std::string& block_name,
                              double condition_cap) {
  if (x.size() == 0) return 0.0;
  auto solver = checked_eigen(m, block_name, condition_cap);
  const Eigen::VectorXd rotated = solver.eigenvectors().transpose() * x;
  return (rotated.array().square() / solver.eigenvalues().array()).sum();
}

Eigen::VectorXd column_means(const Eigen::Ref<const Eigen::MatrixXd>& data) {
  if (data.rows() == 0) return Eigen::VectorXd::Zero(data.cols());
  return data.colwise().mean();
}

Eigen::MatrixXd sample_covariance(const Eigen::Ref<const Eigen::MatrixXd>& data) {
  const Eigen::Index n = data.rows();
  if (n < 2)
    throw DomainError("sample_covariance: needs at least two rows");
  const Eigen::MatrixXd centered = data.rowwise() - data.colwise().mean();
  return centered.transpose() * centered / static_cast<double>(n - 1);
}

Eigen::VectorXd sample_cross_covariance(const Eigen::Ref<const Eigen::VectorXd>& y,
                                        const Eigen::Ref<const Eigen::MatrixXd>& data) {
  const Eigen::Index n = data.rows();
  if (y.size() != n)
    throw DomainError("sample_cross_covariance: length mismatch");
  if (n < 2)
    throw DomainError("sample_cross_covariance: needs at least two rows");
  const Eigen::VectorXd yc = y.array() - y.mean();
  const Eigen::MatrixXd centered = data.rowwise() - data.colwise().mean();
  return centered.transpose() * yc / static_cast<double>(n - 1);
}

}  // namespace resem
