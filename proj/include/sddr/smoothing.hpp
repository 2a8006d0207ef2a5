#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sddr/design.hpp"

namespace sddr {

/// Penalty strength of one block together with the spectrum it was derived from.
struct SmootherCalibration {
    std::string block;
    Eigen::VectorXd eigenvalues;   // ascending, nonnegative
    double lambda = 0.0;
    double df_target = 0.0;
    int df_max = 0;                // number of columns
    double df_min = 0.0;           // count of zero eigenvalues
};

/// Eigenvalues of R^-T S R^-1 with R^T R = B^T B, sorted ascending.
/// Values below the rank tolerance (relative to the largest) are set to zero.
Eigen::VectorXd dro_eigenvalues(const Eigen::MatrixXd& matrix, const Eigen::MatrixXd& penalty);

/// sum_i 1 / (1 + lambda * s_i)
double effective_df(const Eigen::VectorXd& eigenvalues, double lambda);

/// Penalty strength giving `df_target` effective degrees of freedom, found by
/// bisection on log(lambda). df_target equal to the column count returns 0.
double df_to_lambda(const Eigen::VectorXd& eigenvalues, double df_target);

/// Smallest df_max over the given calibrations.
double default_df(const std::vector<SmootherCalibration>& calibrations);

/// Builds the spectrum and bounds of a block without choosing lambda.
SmootherCalibration describe_block(const DesignBlock& block);

/// Resolves df for every penalized block of every parameter and converts it to lambda.
///
/// Smooth and tensor blocks without an explicit `df=` use `default_df` when given,
/// else the minimum column count over all smooth and tensor blocks. Random effects
/// without `df=` use G - 1. Entries for unpenalized blocks are empty.
std::vector<std::vector<std::optional<SmootherCalibration>>> calibrate_smoothing(
    const std::vector<ParameterDesign>& design, std::optional<double> default_df);

}  // namespace sddr
