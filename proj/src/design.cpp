#include "sddr/design.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "sddr/error.hpp"

namespace sddr {

namespace {

int find_span(const BSplineBasis& b, double x) {
    const auto& t = b.knots;
    const int m = static_cast<int>(t.size());
    int i = static_cast<int>(std::upper_bound(t.data(), t.data() + m, x) - t.data()) - 1;
    return std::clamp(i, b.degree, m - b.degree - 2);
}

// Nonzero degree-p basis values at x for knot span `span` (Cox-de Boor, triangular form).
// Writes p + 1 values belonging to basis indices span - p .. span.
void basis_funs(const Eigen::VectorXd& t, int span, double x, int p, double* out) {
    std::vector<double> left(p + 1), right(p + 1);
    out[0] = 1.0;
    for (int j = 1; j <= p; ++j) {
        left[j] = x - t[span + 1 - j];
        right[j] = t[span + j] - x;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            double temp = out[r] / (right[r + 1] + left[j - r]);
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
}

// Full-length basis row and its first derivative at a point inside the range.
void value_and_slope(const BSplineBasis& b, double x, Eigen::RowVectorXd& value,
                     Eigen::RowVectorXd& slope) {
    const int p = b.degree;
    const auto& t = b.knots;
    value = Eigen::RowVectorXd::Zero(b.size());
    slope = Eigen::RowVectorXd::Zero(b.size());
    int span = find_span(b, x);
    std::vector<double> n(p + 1);
    basis_funs(t, span, x, p, n.data());
    for (int r = 0; r <= p; ++r) value[span - p + r] = n[r];
    if (p == 0) return;
    std::vector<double> lower(p);
    basis_funs(t, span, x, p - 1, lower.data());
    // lower[r] belongs to degree p-1 basis index span - p + 1 + r
    auto low = [&](int j) { return (j >= span - p + 1 && j <= span) ? lower[j - (span - p + 1)] : 0.0; };
    for (int j = span - p; j <= span; ++j) {
        double d1 = t[j + p] - t[j];
        double d2 = t[j + p + 1] - t[j + 1];
        double a = d1 > 0 ? low(j) / d1 : 0.0;
        double c = d2 > 0 ? low(j + 1) / d2 : 0.0;
        slope[j] = p * (a - c);
    }
}

Eigen::MatrixXd rowwise_kronecker(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd out(a.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.cols(); ++i)
        for (Eigen::Index j = 0; j < b.cols(); ++j)
            out.col(i * b.cols() + j) = a.col(i).cwiseProduct(b.col(j));
    return out;
}

Eigen::MatrixXd kronecker(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

std::vector<std::string> numbered_names(const std::string& prefix, Eigen::Index count) {
    std::vector<std::string> names;
    for (Eigen::Index i = 1; i <= count; ++i) names.push_back(prefix + ":" + std::to_string(i));
    return names;
}

}  // namespace

Eigen::MatrixXd BSplineBasis::evaluate(const Eigen::VectorXd& x) const {
    const int p = degree;
    const int L = size();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.size(), L);
    Eigen::RowVectorXd lo_value, lo_slope, hi_value, hi_slope;
    value_and_slope(*this, lower(), lo_value, lo_slope);
    value_and_slope(*this, upper(), hi_value, hi_slope);
    std::vector<double> n(p + 1);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        double v = x[i];
        if (v < lower()) {
            out.row(i) = lo_value + (v - lower()) * lo_slope;
        } else if (v > upper()) {
            out.row(i) = hi_value + (v - upper()) * hi_slope;
        } else {
            int span = find_span(*this, v);
            basis_funs(knots, span, v, p, n.data());
            for (int r = 0; r <= p; ++r) out(i, span - p + r) = n[r];
        }
    }
    return out;
}

BSplineBasis make_bspline(const Eigen::VectorXd& values, int n_knots, int degree) {
    if (degree < 0) throw UserError("spline degree must be non-negative");
    if (n_knots < degree + 2) {
        throw UserError("need at least degree + 2 = " + std::to_string(degree + 2) + " knots, got " +
                        std::to_string(n_knots));
    }
    if (values.size() == 0 || !values.allFinite()) throw UserError("spline input must be finite and non-empty");
    double lo = values.minCoeff();
    double hi = values.maxCoeff();
    if (!(hi > lo)) throw UserError("spline input has zero range (constant column)");
    BSplineBasis b;
    b.degree = degree;
    b.knots.resize(n_knots + 2 * degree);
    for (int i = 0; i < degree; ++i) {
        b.knots[i] = lo;
        b.knots[n_knots + degree + i] = hi;
    }
    for (int i = 0; i < n_knots; ++i) {
        b.knots[degree + i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_knots - 1);
    }
    b.knots[degree + n_knots - 1] = hi;
    return b;
}

SplineBasis bspline_basis(const Eigen::VectorXd& values, int n_knots, int degree) {
    BSplineBasis b = make_bspline(values, n_knots, degree);
    return {b.evaluate(values), b};
}

Eigen::MatrixXd difference_penalty(int L, int order) {
    if (order < 1) throw UserError("difference order must be at least 1");
    if (L <= order) {
        throw UserError("difference penalty needs more than " + std::to_string(order) +
                        " coefficients, got " + std::to_string(L));
    }
    Eigen::MatrixXd d = Eigen::MatrixXd::Identity(L, L);
    for (int k = 0; k < order; ++k) {
        Eigen::MatrixXd next = d.bottomRows(d.rows() - 1) - d.topRows(d.rows() - 1);
        d = std::move(next);
    }
    return d.transpose() * d;
}

PenalizedBasis tensor_basis(const PenalizedBasis& a, const PenalizedBasis& b) {
    if (a.matrix.rows() != b.matrix.rows()) {
        throw UserError("tensor margins have different row counts (" + std::to_string(a.matrix.rows()) +
                        " vs " + std::to_string(b.matrix.rows()) + ")");
    }
    const Eigen::Index la = a.matrix.cols(), lb = b.matrix.cols();
    if (la * lb >= a.matrix.rows()) {
        throw UserError("tensor basis has " + std::to_string(la * lb) + " columns for " +
                        std::to_string(a.matrix.rows()) +
                        " rows; reduce the marginal basis size (smoothing.tensor_n_knots)");
    }
    PenalizedBasis out;
    out.matrix = rowwise_kronecker(a.matrix, b.matrix);
    out.penalty = kronecker(a.penalty, Eigen::MatrixXd::Identity(lb, lb)) +
                  kronecker(Eigen::MatrixXd::Identity(la, la), b.penalty);
    return out;
}

Eigen::MatrixXd BlockRecipe::evaluate_raw(const Dataset& data, std::size_t* unseen_groups) const {
    const auto n = static_cast<Eigen::Index>(data.rows());
    switch (term.kind) {
        case TermKind::Intercept: return Eigen::MatrixXd::Ones(n, 1);
        case TermKind::Linear: return data.numeric(term.features[0]);
        case TermKind::Smooth: return margins.at(0).evaluate(data.numeric(term.features[0]));
        case TermKind::TensorSmooth:
            return rowwise_kronecker(margins.at(0).evaluate(data.numeric(term.features[0])),
                                     margins.at(1).evaluate(data.numeric(term.features[1])));
        case TermKind::RandomEffect: {
            auto labels = data.labels(term.features[0]);
            Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(groups.size()));
            for (Eigen::Index i = 0; i < n; ++i) {
                auto it = std::lower_bound(groups.begin(), groups.end(), labels[i]);
                if (it != groups.end() && *it == labels[i]) {
                    out(i, it - groups.begin()) = 1.0;
                } else if (unseen_groups) {
                    ++*unseen_groups;
                }
            }
            return out;
        }
        case TermKind::Deep: break;
    }
    throw InvariantError("deep terms have no structured design");
}

Eigen::MatrixXd BlockRecipe::evaluate(const Dataset& data, std::size_t* unseen_groups) const {
    Eigen::MatrixXd raw = evaluate_raw(data, unseen_groups);
    if (!transform) return raw;
    return raw * *transform;
}

int psd_rank(const Eigen::MatrixXd& penalty) {
    if (penalty.size() == 0) return 0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(penalty, Eigen::EigenvaluesOnly);
    double top = eig.eigenvalues().cwiseAbs().maxCoeff();
    if (top == 0.0) return 0;
    return static_cast<int>((eig.eigenvalues().array() > kRankTolerance * top).count());
}

DesignBlock random_effect_block(const std::string& feature, const std::vector<std::string>& labels) {
    std::set<std::string> levels(labels.begin(), labels.end());
    if (levels.size() < 2) {
        throw UserError("random effect re(" + feature + ") needs at least two groups");
    }
    DesignBlock block;
    block.recipe.term = TermExpr::random_effect(feature);
    block.recipe.groups.assign(levels.begin(), levels.end());
    Dataset tmp;
    tmp.add_labels(feature, labels);
    block.matrix = block.recipe.evaluate(tmp);
    const auto g = static_cast<Eigen::Index>(levels.size());
    block.penalty = Eigen::MatrixXd::Identity(g, g);
    block.penalty_rank = static_cast<int>(g);
    for (const auto& l : block.recipe.groups) block.column_names.push_back("re(" + feature + "):" + l);
    return block;
}

DesignBlock absorb_constraints(const DesignBlock& block,
                               const std::optional<Eigen::MatrixXd>& linear_overlap) {
    const TermKind kind = block.term().kind;
    if (kind != TermKind::Smooth && kind != TermKind::TensorSmooth) {
        throw InvariantError("constraints are absorbed only into smooth blocks");
    }
    const Eigen::MatrixXd& b = block.matrix;
    const Eigen::Index n = b.rows();
    const Eigen::Index extra = linear_overlap ? linear_overlap->cols() : 0;
    Eigen::MatrixXd c(n, 1 + extra);
    c.col(0).setOnes();
    if (extra) c.rightCols(extra) = *linear_overlap;

    // Null space of C^T B gives coefficient directions whose fitted columns are orthogonal to C.
    Eigen::MatrixXd m = c.transpose() * b;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd_m(m, Eigen::ComputeFullV);
    const auto& sm = svd_m.singularValues();
    const double sm_max = sm.size() ? sm.maxCoeff() : 0.0;
    const Eigen::Index rank_c =
        sm_max > 0.0 ? static_cast<Eigen::Index>((sm.array() > kRankTolerance * sm_max).count()) : 0;
    const Eigen::Index keep = b.cols() - rank_c;
    const std::string label = block.term().label();
    if (keep <= 0) {
        throw UserError("block " + label + " is annihilated by its identifiability constraints");
    }
    Eigen::MatrixXd z = svd_m.matrixV().rightCols(keep);

    Eigen::MatrixXd reduced = b * z;
    Eigen::BDCSVD<Eigen::MatrixXd> svd_b(reduced, Eigen::ComputeThinV);
    const auto& sb = svd_b.singularValues();
    const double b_norm = Eigen::JacobiSVD<Eigen::MatrixXd>(b).singularValues()(0);
    if (sb.size() == 0 || sb(0) <= kRankTolerance * b_norm) {
        throw UserError("block " + label + " lies in the span of its identifiability constraints");
    }
    const Eigen::Index rank_b = static_cast<Eigen::Index>((sb.array() > kRankTolerance * sb(0)).count());

    DesignBlock out;
    out.recipe = block.recipe;
    Eigen::MatrixXd local_t = rank_b < keep ? Eigen::MatrixXd(z * svd_b.matrixV().leftCols(rank_b)) : z;
    out.recipe.transform = block.recipe.transform ? Eigen::MatrixXd(*block.recipe.transform * local_t) : local_t;
    out.matrix = b * local_t;
    Eigen::MatrixXd s = local_t.transpose() * block.penalty * local_t;
    out.penalty = 0.5 * (s + s.transpose());
    out.penalty_rank = psd_rank(out.penalty);
    out.column_names = numbered_names(label, out.matrix.cols());
    return out;
}

Eigen::MatrixXd feature_matrix(const Dataset& data, const std::vector<std::string>& features) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(data.rows()), static_cast<Eigen::Index>(features.size()));
    for (std::size_t j = 0; j < features.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = data.numeric(features[j]);
    return out;
}

std::vector<ParameterDesign> build_design(const ModelSpec& spec, const Dataset& data,
                                          const DesignOptions& options) {
    if (!data.has(spec.response)) throw UserError("response '" + spec.response + "' not found in data");
    for (const auto& f : spec.referenced_features()) {
        if (!data.has(f)) throw UserError("feature '" + f + "' not found in data");
    }
    std::vector<ParameterDesign> design;
    for (const auto& terms : spec.parameter_formulas) {
        ParameterDesign pd;
        std::vector<std::string> linear;
        for (const auto& t : terms)
            if (t.kind == TermKind::Linear) linear.push_back(t.features[0]);
        auto overlap_for = [&](const std::vector<std::string>& feats) -> std::optional<Eigen::MatrixXd> {
            std::vector<std::string> shared;
            for (const auto& f : feats)
                if (std::find(linear.begin(), linear.end(), f) != linear.end()) shared.push_back(f);
            if (shared.empty()) return std::nullopt;
            return feature_matrix(data, shared);
        };

        for (const auto& t : terms) {
            if (t.kind != TermKind::Intercept) continue;
            DesignBlock b;
            b.recipe.term = t;
            b.matrix = b.recipe.evaluate(data);
            b.penalty = Eigen::MatrixXd::Zero(1, 1);
            b.column_names = {"(Intercept)"};
            pd.blocks.push_back(std::move(b));
        }
        for (const auto& t : terms) {
            if (t.kind != TermKind::Linear) continue;
            DesignBlock b;
            b.recipe.term = t;
            b.matrix = b.recipe.evaluate(data);
            b.penalty = Eigen::MatrixXd::Zero(1, 1);
            b.column_names = {t.features[0]};
            pd.blocks.push_back(std::move(b));
        }
        for (const auto& t : terms) {
            switch (t.kind) {
                case TermKind::Smooth: {
                    DesignBlock raw;
                    raw.recipe.term = t;
                    raw.recipe.margins = {make_bspline(data.numeric(t.features[0]), options.n_knots, options.degree)};
                    raw.matrix = raw.recipe.evaluate(data);
                    raw.penalty = difference_penalty(static_cast<int>(raw.matrix.cols()), options.penalty_order);
                    pd.blocks.push_back(absorb_constraints(raw, overlap_for(t.features)));
                    break;
                }
                case TermKind::TensorSmooth: {
                    DesignBlock raw;
                    raw.recipe.term = t;
                    PenalizedBasis margins[2];
                    for (int m = 0; m < 2; ++m) {
                        raw.recipe.margins.push_back(make_bspline(data.numeric(t.features[m]),
                                                                  options.tensor_n_knots, options.degree));
                        margins[m].matrix = raw.recipe.margins[m].evaluate(data.numeric(t.features[m]));
                        margins[m].penalty = difference_penalty(
                            static_cast<int>(margins[m].matrix.cols()), options.penalty_order);
                    }
                    PenalizedBasis tb = tensor_basis(margins[0], margins[1]);
                    raw.matrix = raw.recipe.evaluate(data);
                    raw.penalty = std::move(tb.penalty);
                    pd.blocks.push_back(absorb_constraints(raw, overlap_for(t.features)));
                    break;
                }
                case TermKind::RandomEffect: {
                    DesignBlock b = random_effect_block(t.features[0], data.labels(t.features[0]));
                    b.recipe.term = t;
                    pd.blocks.push_back(std::move(b));
                    break;
                }
                case TermKind::Deep:
                    pd.deep.push_back(DeepInput{t, feature_matrix(data, t.features)});
                    break;
                default: break;
            }
        }
        design.push_back(std::move(pd));
    }
    return design;
}

}  // namespace sddr
