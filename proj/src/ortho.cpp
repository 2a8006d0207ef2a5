#include "sddr/ortho.hpp"

#include <algorithm>
#include <optional>

#include "sddr/error.hpp"

namespace sddr {

Projector::Projector(const Eigen::MatrixXd& source, double tolerance)
    : cols_(source.cols()), tolerance_(tolerance) {
    const Eigen::Index n = source.rows();
    if (source.cols() == 0 || source.isZero(0.0)) {
        q_ = Eigen::MatrixXd::Zero(n, 0);
        return;
    }
    qr_.setThreshold(tolerance);
    qr_.compute(source);
    rank_ = qr_.rank();
    q_ = qr_.householderQ() * Eigen::MatrixXd::Identity(n, rank_);
}

Eigen::MatrixXd Projector::apply(const Eigen::MatrixXd& a) const {
    if (a.rows() != q_.rows()) {
        throw InvariantError("projection expects " + std::to_string(q_.rows()) + " rows, got " +
                             std::to_string(a.rows()));
    }
    if (annihilates()) return Eigen::MatrixXd::Zero(a.rows(), a.cols());
    if (rank_ == 0) return a;
    Eigen::MatrixXd coef = q_.transpose() * a;
    return a - q_ * coef;
}

Eigen::MatrixXd Projector::coefficients(const Eigen::MatrixXd& a) const {
    if (rank_ == 0) return Eigen::MatrixXd::Zero(cols_, a.cols());
    return qr_.solve(a);
}

Eigen::MatrixXd apply_orthogonalization(const Projector& projector, const Eigen::MatrixXd& latent) {
    return projector.apply(latent);
}

std::vector<std::size_t> constraint_set(const ParameterDesign& design, const TermExpr& deep) {
    std::vector<std::size_t> ids;
    std::optional<std::size_t> intercept;
    for (std::size_t j = 0; j < design.blocks.size(); ++j) {
        const TermExpr& t = design.blocks[j].term();
        if (t.kind == TermKind::Intercept) {
            intercept = j;
            continue;
        }
        bool shared = std::any_of(t.features.begin(), t.features.end(), [&](const std::string& f) {
            return std::find(deep.features.begin(), deep.features.end(), f) != deep.features.end();
        });
        if (shared) ids.push_back(j);
    }
    if (!ids.empty() && intercept) ids.insert(ids.begin(), *intercept);
    return ids;
}

Eigen::MatrixXd compose_blocks(const std::vector<Eigen::MatrixXd>& blocks, const std::vector<std::size_t>& ids) {
    Eigen::Index cols = 0;
    Eigen::Index rows = blocks.empty() ? 0 : blocks.front().rows();
    for (auto j : ids) cols += blocks.at(j).cols();
    Eigen::MatrixXd out(rows, cols);
    Eigen::Index at = 0;
    for (auto j : ids) {
        out.middleCols(at, blocks[j].cols()) = blocks[j];
        at += blocks[j].cols();
    }
    return out;
}

Eigen::MatrixXd compose_blocks(const ParameterDesign& design, const std::vector<std::size_t>& ids) {
    std::vector<Eigen::MatrixXd> mats;
    mats.reserve(design.blocks.size());
    for (const auto& b : design.blocks) mats.push_back(b.matrix);
    return compose_blocks(mats, ids);
}

Eigen::MatrixXd OrthoMap::apply(const Eigen::MatrixXd& structured, const Eigen::MatrixXd& latent) const {
    if (structured.cols() != coefficients.rows() || structured.rows() != latent.rows() ||
        latent.cols() != coefficients.cols()) {
        throw InvariantError("orthogonalization map shape mismatch");
    }
    return latent - structured * coefficients;
}

OrthoMap fit_ortho_map(const Projector& projector, const std::vector<std::size_t>& blocks,
                       const Eigen::MatrixXd& latent) {
    OrthoMap map;
    map.blocks = blocks;
    map.coefficients = projector.coefficients(latent);
    return map;
}

}  // namespace sddr
