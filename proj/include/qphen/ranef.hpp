#pragma once

#include "qphen/dataset.hpp"
#include "qphen/design.hpp"
#include "qphen/meq.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace qphen {

// Reduced T x T representation of Sigma^{-1} = C + delta_eps I for one group,
// where Sigma = Z psi Z' + sigma_eps I and both C and B = Z psi Z' carry the
// constant-block structure b_st = psi11 + psi12 (s + t) + psi22 s t over the
// group's year values.
struct BlockCovariance {
    Eigen::MatrixXd b_check;    // T x T matrix of b_st
    Eigen::VectorXd n_check;    // per-year member counts
    Eigen::VectorXd year_values; // centered years actually present, ascending
    double sigma_eps = 1.0;
    double delta_eps = 1.0;     // 1 / sigma_eps exactly
    Eigen::MatrixXd c_check;    // T x T matrix of c_st
};

BlockCovariance reduced_inverse(const Eigen::Matrix2d& psi, double sigma_eps,
                                const Eigen::VectorXd& year_counts,
                                const Eigen::VectorXd& year_values);

// Mean of AL(0, sigma_eps, tau); the E[eps(tau)] centering term of the BLUP.
double al_mean_correction(double sigma_eps, double tau);

enum class BlupMode { dense, block, sequential };

// u_hat = psi Z' Sigma^{-1} (y - X beta - E[eps]) per group. Dense mode
// builds Sigma explicitly (verification oracle, guarded to n_i <= 2000);
// block and sequential modes never materialize an n_i x n_i array.
RanefMatrix blup(const MixedParams& fit, const Dataset& ds, BlupMode mode,
                 const std::vector<std::string>& expected_groups = {},
                 const DesignSpec& design = {});

// Peak element count of the largest buffer the last blup call allocated
// (thread-local; used to assert the memory contract).
std::size_t last_blup_peak_elems();

} // namespace qphen
