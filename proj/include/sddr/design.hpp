#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sddr/dataset.hpp"
#include "sddr/formula.hpp"

namespace sddr {

/// Singular values (or pivots) below this fraction of the largest are treated as zero.
inline constexpr double kRankTolerance = 1e-10;

/// Clamped B-spline basis: `degree` extra copies of each boundary knot around
/// equidistant knots spanning the training range.
struct BSplineBasis {
    Eigen::VectorXd knots;
    int degree = 3;

    int size() const noexcept { return static_cast<int>(knots.size()) - degree - 1; }
    double lower() const { return knots[degree]; }
    double upper() const { return knots[knots.size() - degree - 1]; }

    /// n x size() basis matrix. Values outside [lower, upper] continue the
    /// outermost polynomial piece linearly (value plus first derivative at the boundary).
    Eigen::MatrixXd evaluate(const Eigen::VectorXd& x) const;
};

BSplineBasis make_bspline(const Eigen::VectorXd& values, int n_knots, int degree);

struct SplineBasis {
    Eigen::MatrixXd matrix;
    BSplineBasis basis;
};

/// Evaluates an equidistant clamped B-spline basis at `values`; L = n_knots + degree - 1.
SplineBasis bspline_basis(const Eigen::VectorXd& values, int n_knots, int degree);

/// D^T D for the order-th forward difference matrix D of shape (L - order) x L.
Eigen::MatrixXd difference_penalty(int L, int order);

struct PenalizedBasis {
    Eigen::MatrixXd matrix;
    Eigen::MatrixXd penalty;
};

/// Row-wise Kronecker product with penalty S_a (x) I + I (x) S_b.
PenalizedBasis tensor_basis(const PenalizedBasis& a, const PenalizedBasis& b);

/// Everything needed to rebuild a block's columns on new rows.
struct BlockRecipe {
    TermExpr term;
    std::vector<BSplineBasis> margins;          // one for s(), two for te()
    std::optional<Eigen::MatrixXd> transform;   // L_raw x L constraint map
    std::vector<std::string> groups;            // random-effect levels, sorted

    /// Columns before the constraint transform.
    Eigen::MatrixXd evaluate_raw(const Dataset& data, std::size_t* unseen_groups = nullptr) const;
    /// Final block columns; rows with unseen random-effect groups are zero.
    Eigen::MatrixXd evaluate(const Dataset& data, std::size_t* unseen_groups = nullptr) const;
};

/// A materialized structured term.
struct DesignBlock {
    BlockRecipe recipe;
    Eigen::MatrixXd matrix;
    Eigen::MatrixXd penalty;   // zero matrix for unpenalized blocks
    int penalty_rank = 0;
    std::vector<std::string> column_names;

    const TermExpr& term() const noexcept { return recipe.term; }
    Eigen::Index cols() const noexcept { return matrix.cols(); }
};

/// One-hot group indicators with identity (ridge) penalty.
DesignBlock random_effect_block(const std::string& feature, const std::vector<std::string>& labels);

/// Restricts a smooth or tensor block to the orthogonal complement of
/// [1 | linear_overlap] on the training rows and drops dependent columns.
/// The result's matrix is block.matrix * transform, so rebuilding through the
/// recipe on the training rows reproduces it exactly.
DesignBlock absorb_constraints(const DesignBlock& block,
                               const std::optional<Eigen::MatrixXd>& linear_overlap);

/// Symmetric eigenvalue-based rank with the shared relative tolerance.
int psd_rank(const Eigen::MatrixXd& penalty);

struct DesignOptions {
    int n_knots = 20;
    int degree = 3;
    int penalty_order = 2;
    int tensor_n_knots = 5;

    bool operator==(const DesignOptions&) const = default;
};

/// Raw inputs of one deep term.
struct DeepInput {
    TermExpr term;
    Eigen::MatrixXd inputs;
};

struct ParameterDesign {
    std::vector<DesignBlock> blocks;
    std::vector<DeepInput> deep;
};

/// Builds structured blocks (intercept, linear terms, then smooth, tensor and
/// random-effect terms in formula order) and deep inputs for every parameter.
std::vector<ParameterDesign> build_design(const ModelSpec& spec, const Dataset& data,
                                          const DesignOptions& options);

/// Stacks the raw columns of the given features.
Eigen::MatrixXd feature_matrix(const Dataset& data, const std::vector<std::string>& features);

}  // namespace sddr
