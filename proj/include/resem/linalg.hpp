#pragma once

#include <Eigen/Dense>
#include <string>

namespace resem {

// Policy shared by everything that inverts a covariance block: symmetric
// eigenfactorization with a condition-number cap.  Above the cap (or with a
// nonpositive eigenvalue) the block is treated as singular and the caller
// gets an error naming it; there is no silent pseudo-inverse.
inline constexpr double kDefaultConditionCap = 1e12;

// Inverse of a symmetric positive-definite matrix.
Eigen::MatrixXd capped_inverse(const Eigen::Ref<const Eigen::MatrixXd>& m,
                               const std::string& block_name,
                               double condition_cap = kDefaultConditionCap);

// Symmetric (spectral) square root and its inverse.
Eigen::MatrixXd spectral_sqrt(const Eigen::Ref<const Eigen::MatrixXd>& m,
                              const std::string& block_name,
                              double condition_cap = kDefaultConditionCap);
Eigen::MatrixXd spectral_inverse_sqrt(const Eigen::Ref<const Eigen::MatrixXd>& m,
                                      const std::string& block_name,
                                      double condition_cap = kDefaultConditionCap);

// x' M^{-1} x without forming the inverse.
double quadratic_form_inverse(const Eigen::Ref<const Eigen::MatrixXd>& m,
                              const Eigen::Ref<const Eigen::VectorXd>& x,
                              const std::string& block_name,
                              double condition_cap = kDefaultConditionCap);

// Column means and sample covariance (divisor rows-1) of a data matrix.
Eigen::VectorXd column_means(const Eigen::Ref<const Eigen::MatrixXd>& data);
Eigen::MatrixXd sample_covariance(const Eigen::Ref<const Eigen::MatrixXd>& data);
// Covariance vector between a column vector and the columns of a matrix.
Eigen::VectorXd sample_cross_covariance(const Eigen::Ref<const Eigen::VectorXd>& y,
                                        const Eigen::Ref<const Eigen::MatrixXd>& data);

}  // namespace resem
