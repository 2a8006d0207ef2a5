#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "sddr/design.hpp"

namespace sddr {

/// Projection onto the orthogonal complement of a column space, A -> A - Q (Q^T A),
/// with Q from a column-pivoted QR of the source matrix.
class Projector {
public:
    Projector() = default;
    explicit Projector(const Eigen::MatrixXd& source, double tolerance = kRankTolerance);

    Eigen::Index rank() const noexcept { return rank_; }
    Eigen::Index rows() const noexcept { return q_.rows(); }
    double tolerance() const noexcept { return tolerance_; }
    const Eigen::MatrixXd& q() const noexcept { return q_; }
    /// True when the source spans every row direction, so the complement is {0}.
    bool annihilates() const noexcept { return rank_ == q_.rows() && rank_ > 0; }

    Eigen::MatrixXd apply(const Eigen::MatrixXd& a) const;
    /// Least-squares coefficients B minimizing ||source * B - a||.
    Eigen::MatrixXd coefficients(const Eigen::MatrixXd& a) const;

private:
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
    Eigen::MatrixXd q_;
    Eigen::Index rank_ = 0;
    Eigen::Index cols_ = 0;
    double tolerance_ = kRankTolerance;
};

Eigen::MatrixXd apply_orthogonalization(const Projector& projector, const Eigen::MatrixXd& latent);

/// Indices of the structured blocks a deep term must be orthogonalized against:
/// every block whose features intersect the deep inputs, plus the intercept when
/// any such block exists. Empty when nothing overlaps.
std::vector<std::size_t> constraint_set(const ParameterDesign& design, const TermExpr& deep);

/// Columns of the selected blocks side by side.
Eigen::MatrixXd compose_blocks(const std::vector<Eigen::MatrixXd>& blocks, const std::vector<std::size_t>& ids);
Eigen::MatrixXd compose_blocks(const ParameterDesign& design, const std::vector<std::size_t>& ids);

/// Row-wise form of the projection for new data: U_new - X_new * coefficients.
struct OrthoMap {
    std::vector<std::size_t> blocks;
    Eigen::MatrixXd coefficients;   // composed columns x latent width

    Eigen::MatrixXd apply(const Eigen::MatrixXd& structured, const Eigen::MatrixXd& latent) const;
};

OrthoMap fit_ortho_map(const Projector& projector, const std::vector<std::size_t>& blocks,
                       const Eigen::MatrixXd& latent);

}  // namespace sddr
