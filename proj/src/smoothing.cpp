#include "sddr/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sddr/dataset.hpp"
#include "sddr/error.hpp"

namespace sddr {

Eigen::VectorXd dro_eigenvalues(const Eigen::MatrixXd& matrix, const Eigen::MatrixXd& penalty) {
    const Eigen::Index L = matrix.cols();
    if (penalty.rows() != L || penalty.cols() != L) {
        throw InvariantError("penalty shape does not match block columns");
    }
    Eigen::MatrixXd gram = matrix.transpose() * matrix;
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) {
        double scale = std::max(1.0, gram.diagonal().cwiseAbs().maxCoeff());
        gram.diagonal().array() += 1e-10 * scale;
        llt.compute(gram);
        if (llt.info() != Eigen::Success) {
            throw NumericalError("block cross-product is singular even after a ridge of 1e-10");
        }
    }
    // L^-1 S L^-T where gram = L L^T, i.e. R = L^T.
    Eigen::MatrixXd left = llt.matrixL().solve(penalty);
    Eigen::MatrixXd m = llt.matrixL().solve(left.transpose());
    m = 0.5 * (m + m.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
    Eigen::VectorXd s = eig.eigenvalues();
    std::sort(s.data(), s.data() + s.size());
    double top = s.size() ? std::max(0.0, s.maxCoeff()) : 0.0;
    for (auto& v : s) {
        if (v <= kRankTolerance * top) v = 0.0;
    }
    return s;
}

double effective_df(const Eigen::VectorXd& eigenvalues, double lambda) {
    return (1.0 / (1.0 + lambda * eigenvalues.array())).sum();
}

double df_to_lambda(const Eigen::VectorXd& eigenvalues, double df_target) {
    const double df_max = static_cast<double>(eigenvalues.size());
    const double df_min = static_cast<double>((eigenvalues.array() == 0.0).count());
    if (!(df_target > df_min && df_target <= df_max)) {
        throw UserError("df " + format_double(df_target) + " is outside (" + format_double(df_min) + ", " +
                        format_double(df_max) + "]");
    }
    if (df_target == df_max) return 0.0;
    double lo = std::log(1e-12), hi = std::log(1e12);
    double mid = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        mid = 0.5 * (lo + hi);
        double df = effective_df(eigenvalues, std::exp(mid));
        if (df > df_target) {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo < 1e-14) break;
    }
    return std::exp(0.5 * (lo + hi));
}

double default_df(const std::vector<SmootherCalibration>& calibrations) {
    if (calibrations.empty()) throw InvariantError("default df needs at least one smooth block");
    int best = std::numeric_limits<int>::max();
    for (const auto& c : calibrations) best = std::min(best, c.df_max);
    return best;
}

SmootherCalibration describe_block(const DesignBlock& block) {
    SmootherCalibration c;
    c.block = block.term().label();
    c.eigenvalues = dro_eigenvalues(block.matrix, block.penalty);
    c.df_max = static_cast<int>(block.cols());
    c.df_min = static_cast<double>((c.eigenvalues.array() == 0.0).count());
    return c;
}

std::vector<std::vector<std::optional<SmootherCalibration>>> calibrate_smoothing(
    const std::vector<ParameterDesign>& design, std::optional<double> default_df_override) {
    std::vector<std::vector<std::optional<SmootherCalibration>>> out;
    std::vector<SmootherCalibration> smooth;
    for (const auto& pd : design) {
        auto& row = out.emplace_back();
        for (const auto& b : pd.blocks) {
            if (!b.term().is_penalized()) {
                row.emplace_back();
                continue;
            }
            row.push_back(describe_block(b));
            if (b.term().kind != TermKind::RandomEffect) smooth.push_back(*row.back());
        }
    }
    std::optional<double> fallback = default_df_override;
    if (!fallback && !smooth.empty()) fallback = default_df(smooth);

    for (std::size_t k = 0; k < design.size(); ++k) {
        for (std::size_t j = 0; j < design[k].blocks.size(); ++j) {
            auto& cal = out[k][j];
            if (!cal) continue;
            const TermExpr& term = design[k].blocks[j].term();
            double target;
            if (term.df) {
                target = *term.df;
            } else if (term.kind == TermKind::RandomEffect) {
                target = cal->df_max - 1.0;
            } else {
                target = *fallback;
            }
            cal->df_target = target;
            try {
                cal->lambda = df_to_lambda(cal->eigenvalues, target);
            } catch (const UserError& e) {
                throw UserError("cannot calibrate " + term.label() + ": " + e.what());
            }
        }
    }
    return out;
}

}  // namespace sddr
