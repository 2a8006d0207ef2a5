#include "sddr/engine.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

#include "sddr/error.hpp"

namespace sddr {

namespace {

MlpShape trunk_shape(const ModelSpec& spec, const TermExpr& term) {
    auto it = spec.trunks.find(term.trunk);
    if (it == spec.trunks.end()) throw UserError("deep term " + term.label() + " uses an undeclared trunk");
    if (it->second.widths.empty()) throw UserError("trunk '" + term.trunk + "' has no layers");
    for (int w : it->second.widths) {
        if (w < 1) throw UserError("trunk '" + term.trunk + "' has a non-positive layer width");
    }
    MlpShape shape;
    shape.inputs = static_cast<int>(term.features.size());
    shape.widths = it->second.widths;
    shape.activation = it->second.activation;
    return shape;
}

Eigen::MatrixXd standardize(const Eigen::MatrixXd& x, const Eigen::VectorXd& mean, const Eigen::VectorXd& scale) {
    Eigen::MatrixXd out = x.rowwise() - mean.transpose();
    return out.array().rowwise() / scale.transpose().array();
}

}  // namespace

struct Graph::View {
    const Eigen::VectorXd* y = nullptr;
    std::vector<std::vector<const Eigen::MatrixXd*>> blocks;
    std::vector<std::vector<const Eigen::MatrixXd*>> inputs;
    std::vector<std::vector<const Eigen::MatrixXd*>> q;   // null: no projection
    std::vector<std::vector<bool>> annihilate;
    double scale = 1.0;
    std::deque<Eigen::MatrixXd> storage;
    Eigen::VectorXd y_storage;

    Eigen::MatrixXd project(std::size_t k, std::size_t d, const Eigen::MatrixXd& a) const {
        if (annihilate[k][d]) return Eigen::MatrixXd::Zero(a.rows(), a.cols());
        const Eigen::MatrixXd* qm = q[k][d];
        if (!qm || qm->cols() == 0) return a;
        Eigen::MatrixXd coef = qm->transpose() * a;
        return a - scale * (*qm * coef);
    }
};

Graph::Graph(const ModelSpec& spec, const std::vector<ParameterDesign>& design, const Calibrations& calibrations,
             Eigen::VectorXd y, bool orthogonalize)
    : family_(&family_by_name(spec.family)), y_(std::move(y)) {
    if (design.size() != family_->arity()) throw InvariantError("design does not match family arity");
    Eigen::Index at = 0;
    for (std::size_t k = 0; k < design.size(); ++k) {
        Parameter p;
        for (std::size_t j = 0; j < design[k].blocks.size(); ++j) {
            const DesignBlock& db = design[k].blocks[j];
            if (db.matrix.rows() != y_.size()) throw InvariantError("block rows do not match response");
            Block b;
            b.matrix = db.matrix;
            b.penalty = db.penalty;
            const auto& cal = calibrations.at(k).at(j);
            b.lambda = cal ? cal->lambda : 0.0;
            b.offset = at;
            at += b.matrix.cols();
            p.blocks.push_back(std::move(b));
        }
        for (const auto& deep : design[k].deep) {
            Trunk t;
            t.term = deep.term;
            t.shape = trunk_shape(spec, deep.term);
            t.input_mean = deep.inputs.colwise().mean().transpose();
            Eigen::MatrixXd centered = deep.inputs.rowwise() - t.input_mean.transpose();
            t.input_scale = (centered.colwise().squaredNorm() / static_cast<double>(deep.inputs.rows()))
                                .cwiseSqrt()
                                .transpose();
            for (auto& s : t.input_scale) {
                if (!(s > 0.0)) s = 1.0;
            }
            t.input = standardize(deep.inputs, t.input_mean, t.input_scale);
            if (orthogonalize) t.constraint = constraint_set(design[k], deep.term);
            if (!t.constraint.empty()) {
                t.structured = compose_blocks(design[k], t.constraint);
                t.projector = Projector(t.structured);
            }
            t.offset = at;
            at += static_cast<Eigen::Index>(t.shape.num_params());
            t.head_offset = at;
            at += t.shape.outputs();
            p.trunks.push_back(std::move(t));
        }
        params_.push_back(std::move(p));
    }
    size_ = at;
}

Eigen::VectorXd Graph::initialize(std::mt19937_64& rng) const {
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(size_);
    for (const auto& p : params_) {
        for (const auto& t : p.trunks) {
            glorot_init(t.shape, std::span<double>(theta.data() + t.offset, t.shape.num_params()), rng);
        }
    }
    return theta;
}

Graph::View Graph::full_view() const {
    View v;
    v.y = &y_;
    for (const auto& p : params_) {
        auto& blocks = v.blocks.emplace_back();
        auto& inputs = v.inputs.emplace_back();
        auto& q = v.q.emplace_back();
        auto& ann = v.annihilate.emplace_back();
        for (const auto& b : p.blocks) blocks.push_back(&b.matrix);
        for (const auto& t : p.trunks) {
            inputs.push_back(&t.input);
            q.push_back(t.constraint.empty() ? nullptr : &t.projector.q());
            ann.push_back(!t.constraint.empty() && t.projector.annihilates());
        }
    }
    return v;
}

double Graph::penalty(const Eigen::VectorXd& theta) const {
    double total = 0.0;
    const double n = static_cast<double>(y_.size());
    for (const auto& p : params_) {
        for (const auto& b : p.blocks) {
            if (b.lambda == 0.0) continue;
            auto w = theta.segment(b.offset, b.matrix.cols());
            total += b.lambda / (2.0 * n) * w.dot(b.penalty * w);
        }
    }
    return total;
}

double Graph::evaluate(const Eigen::VectorXd& theta, const View& view, Eigen::VectorXd* grad, ClampStats* stats,
                       std::vector<Eigen::VectorXd>* eta_out) const {
    if (theta.size() != size_) throw InvariantError("parameter vector has the wrong length");
    const Eigen::Index n = view.y->size();
    const std::size_t K = params_.size();
    std::vector<Eigen::VectorXd> eta(K, Eigen::VectorXd::Zero(n));
    std::vector<std::vector<MlpCache>> caches(K);
    for (std::size_t k = 0; k < K; ++k) {
        const Parameter& p = params_[k];
        for (std::size_t j = 0; j < p.blocks.size(); ++j) {
            const Block& b = p.blocks[j];
            eta[k].noalias() += *view.blocks[k][j] * theta.segment(b.offset, b.matrix.cols());
        }
        caches[k].resize(p.trunks.size());
        for (std::size_t d = 0; d < p.trunks.size(); ++d) {
            const Trunk& t = p.trunks[d];
            const Eigen::MatrixXd& u = mlp_forward(
                t.shape, std::span<const double>(theta.data() + t.offset, t.shape.num_params()),
                *view.inputs[k][d], caches[k][d]);
            // P(U) gamma = P(U gamma): project the n-vector instead of the n x s matrix.
            Eigen::VectorXd contribution = u * theta.segment(t.head_offset, t.shape.outputs());
            eta[k] += view.project(k, d, contribution);
        }
    }
    const double data_loss = nll(*family_, *view.y, eta, stats);
    const double loss = data_loss + penalty(theta);
    if (grad) {
        grad->setZero(size_);
        std::vector<Eigen::VectorXd> g = dnll_deta(*family_, *view.y, eta);
        const double inv_n = 1.0 / static_cast<double>(n);
        const double pen_scale = 1.0 / static_cast<double>(y_.size());
        for (std::size_t k = 0; k < K; ++k) {
            g[k] *= inv_n;
            const Parameter& p = params_[k];
            for (std::size_t j = 0; j < p.blocks.size(); ++j) {
                const Block& b = p.blocks[j];
                auto gw = grad->segment(b.offset, b.matrix.cols());
                gw.noalias() = view.blocks[k][j]->transpose() * g[k];
                if (b.lambda != 0.0) {
                    gw.noalias() += (b.lambda * pen_scale) * (b.penalty * theta.segment(b.offset, b.matrix.cols()));
                }
            }
            for (std::size_t d = 0; d < p.trunks.size(); ++d) {
                const Trunk& t = p.trunks[d];
                auto head = theta.segment(t.head_offset, t.shape.outputs());
                // The projection is symmetric, so it moves onto the incoming gradient.
                Eigen::VectorXd pg = view.project(k, d, g[k]);
                grad->segment(t.head_offset, t.shape.outputs()).noalias() = caches[k][d].layers.back().transpose() * pg;
                Eigen::MatrixXd d_latent = pg * head.transpose();
                mlp_backward(t.shape, std::span<const double>(theta.data() + t.offset, t.shape.num_params()),
                             caches[k][d], d_latent,
                             std::span<double>(grad->data() + t.offset, t.shape.num_params()));
            }
        }
    }
    if (eta_out) *eta_out = std::move(eta);
    return loss;
}

double Graph::objective(const Eigen::VectorXd& theta, Eigen::VectorXd* grad, ClampStats* stats) const {
    return evaluate(theta, full_view(), grad, stats, nullptr);
}

double Graph::batch_objective(const Eigen::VectorXd& theta, const std::vector<Eigen::Index>& rows,
                              Eigen::VectorXd* grad) const {
    if (rows.empty()) throw InvariantError("empty batch");
    View v;
    v.y_storage = y_(rows);
    v.y = &v.y_storage;
    v.scale = static_cast<double>(y_.size()) / static_cast<double>(rows.size());
    for (const auto& p : params_) {
        auto& blocks = v.blocks.emplace_back();
        auto& inputs = v.inputs.emplace_back();
        auto& q = v.q.emplace_back();
        auto& ann = v.annihilate.emplace_back();
        for (const auto& b : p.blocks) {
            v.storage.push_back(b.matrix(rows, Eigen::all));
            blocks.push_back(&v.storage.back());
        }
        for (const auto& t : p.trunks) {
            v.storage.push_back(t.input(rows, Eigen::all));
            inputs.push_back(&v.storage.back());
            if (t.constraint.empty()) {
                q.push_back(nullptr);
            } else {
                v.storage.push_back(t.projector.q()(rows, Eigen::all));
                q.push_back(&v.storage.back());
            }
            ann.push_back(!t.constraint.empty() && t.projector.annihilates());
        }
    }
    return evaluate(theta, v, grad, nullptr, nullptr);
}

std::vector<Eigen::VectorXd> Graph::eta(const Eigen::VectorXd& theta) const {
    std::vector<Eigen::VectorXd> out;
    evaluate(theta, full_view(), nullptr, nullptr, &out);
    return out;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> Graph::latent(const Eigen::VectorXd& theta, std::size_t k,
                                                          std::size_t d) const {
    const Trunk& t = params_.at(k).trunks.at(d);
    MlpCache cache;
    Eigen::MatrixXd u =
        mlp_forward(t.shape, std::span<const double>(theta.data() + t.offset, t.shape.num_params()), t.input, cache);
    View v = full_view();
    Eigen::MatrixXd projected = v.project(k, d, u);
    return {std::move(u), std::move(projected)};
}

namespace {

struct Split {
    std::vector<Eigen::Index> train;
    std::vector<Eigen::Index> validation;
};

Split split_rows(std::size_t n, const FitConfig& config, std::mt19937_64& rng) {
    Split s;
    std::vector<Eigen::Index> idx(n);
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    if (!config.early_stopping) {
        s.train = std::move(idx);
        return s;
    }
    if (!(config.validation_fraction > 0.0 && config.validation_fraction < 1.0)) {
        throw UserError("validation_fraction must lie in (0, 1)");
    }
    auto n_val = static_cast<std::size_t>(std::llround(config.validation_fraction * static_cast<double>(n)));
    n_val = std::max<std::size_t>(n_val, 1);
    if (n < n_val + 2) throw UserError("too few rows for an early-stopping validation split");
    std::shuffle(idx.begin(), idx.end(), rng);
    s.validation.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    std::sort(s.validation.begin(), s.validation.end());
    std::sort(s.train.begin(), s.train.end());
    return s;
}

// Freezes the graph state at `theta` into a predictable model (maps fitted on the training rows).
std::vector<FittedParameter> assemble(const Graph& graph, const std::vector<ParameterDesign>& design,
                                      const Calibrations& calibrations, const Eigen::VectorXd& theta) {
    std::vector<FittedParameter> out;
    for (std::size_t k = 0; k < design.size(); ++k) {
        FittedParameter fp;
        const auto& gp = graph.parameters()[k];
        for (std::size_t j = 0; j < design[k].blocks.size(); ++j) {
            const DesignBlock& db = design[k].blocks[j];
            FittedBlock fb;
            fb.recipe = db.recipe;
            fb.weights = theta.segment(gp.blocks[j].offset, db.cols());
            fb.penalty = db.penalty;
            fb.lambda = gp.blocks[j].lambda;
            if (const auto& cal = calibrations[k][j]) fb.df_target = cal->df_target;
            fb.column_names = db.column_names;
            fp.blocks.push_back(std::move(fb));
        }
        for (std::size_t d = 0; d < gp.trunks.size(); ++d) {
            const auto& t = gp.trunks[d];
            FittedTrunk ft;
            ft.term = t.term;
            ft.shape = t.shape;
            ft.input_mean = t.input_mean;
            ft.input_scale = t.input_scale;
            ft.params = theta.segment(t.offset, static_cast<Eigen::Index>(t.shape.num_params()));
            ft.head = theta.segment(t.head_offset, t.shape.outputs());
            if (!t.constraint.empty()) {
                auto [u, unused] = graph.latent(theta, k, d);
                ft.ortho = fit_ortho_map(t.projector, t.constraint, u);
            }
            fp.trunks.push_back(std::move(ft));
        }
        out.push_back(std::move(fp));
    }
    return out;
}

double orthogonality_residual(const Graph& graph, const Eigen::VectorXd& theta) {
    double worst = 0.0;
    for (std::size_t k = 0; k < graph.parameters().size(); ++k) {
        const auto& gp = graph.parameters()[k];
        for (std::size_t d = 0; d < gp.trunks.size(); ++d) {
            if (gp.trunks[d].constraint.empty()) continue;
            auto [u, projected] = graph.latent(theta, k, d);
            const Eigen::MatrixXd& x = gp.trunks[d].structured;
            double denom = x.norm() * projected.norm();
            if (denom == 0.0) continue;
            double num = (x.transpose() * projected).cwiseAbs().maxCoeff();
            worst = std::max(worst, num / denom);
        }
    }
    return worst;
}

void copy_warm_start(const FittedModel& warm, const Graph& graph, const std::vector<ParameterDesign>& design,
                     Eigen::VectorXd& theta) {
    if (warm.parameters.size() != design.size()) throw UserError("warm start model has a different family arity");
    for (std::size_t k = 0; k < design.size(); ++k) {
        const auto& from = warm.parameters[k].blocks;
        const auto& to = design[k].blocks;
        if (from.size() != to.size()) {
            throw UserError("warm start: parameter " + std::to_string(k + 1) + " has different structured terms");
        }
        for (std::size_t j = 0; j < to.size(); ++j) {
            if (!(from[j].recipe.term == to[j].term()) || from[j].weights.size() != to[j].cols()) {
                throw UserError("warm start: term " + from[j].recipe.term.label() + " does not match " +
                                to[j].term().label());
            }
            theta.segment(graph.parameters()[k].blocks[j].offset, to[j].cols()) = from[j].weights;
        }
    }
}

}  // namespace

ModelSpec structured_part(const ModelSpec& spec) {
    ModelSpec out = spec;
    out.trunks.clear();
    for (auto& terms : out.parameter_formulas) {
        std::erase_if(terms, [](const TermExpr& t) { return t.kind == TermKind::Deep; });
        if (terms.empty()) terms.push_back(TermExpr::intercept());
    }
    return out;
}

FittedModel fit(const ModelSpec& spec, const Dataset& data, const FitConfig& config, const FittedModel* warm_start) {
    const Family& family = family_by_name(spec.family);
    if (data.rows() < 2) throw UserError("fitting needs at least two rows");
    if (!(config.learning_rate > 0.0)) throw UserError("learning_rate must be positive");
    if (config.epochs < 0) throw UserError("epochs must be non-negative");
    if (config.batch_size && *config.batch_size < 1) throw UserError("batch_size must be positive");
    if (config.patience < 1) throw UserError("patience must be positive");
    check_support(family, data.numeric(spec.response));

    std::mt19937_64 rng(config.seed);
    Split split = split_rows(data.rows(), config, rng);
    const bool validate = !split.validation.empty();
    Dataset train = validate ? data.select_rows(split.train) : data;
    Dataset valid = validate ? data.select_rows(split.validation) : Dataset{};

    std::vector<ParameterDesign> design = build_design(spec, train, config.design);
    Calibrations calibrations = calibrate_smoothing(design, config.default_df);
    Graph graph(spec, design, calibrations, train.numeric(spec.response), config.orthogonalize);

    Eigen::VectorXd theta = graph.initialize(rng);
    if (warm_start) copy_warm_start(*warm_start, graph, design, theta);

    FittedModel model;
    model.spec = spec;
    model.config = config;
    TrainingDiagnostics& diag = model.diagnostics;
    diag.training_rows = train.rows();
    diag.validation_rows = valid.rows();
    for (std::size_t k = 0; k < calibrations.size(); ++k) {
        for (const auto& cal : calibrations[k]) {
            if (!cal) continue;
            diag.smoothing.push_back({k, cal->block, cal->lambda, cal->df_target,
                                      effective_df(cal->eigenvalues, cal->lambda), cal->df_max});
        }
    }

    Eigen::VectorXd grad;
    double loss = graph.objective(theta, &grad);
    if (!std::isfinite(loss)) throw NumericalError("initial loss is not finite");

    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    const Eigen::Index P = graph.size();
    Eigen::VectorXd m = Eigen::VectorXd::Zero(P), v = Eigen::VectorXd::Zero(P);
    int t = 0;
    double lr = config.learning_rate;

    Eigen::VectorXd best_theta = theta;
    double best_val = std::numeric_limits<double>::infinity();
    auto validation_nll = [&](const Eigen::VectorXd& at) {
        FittedModel probe;
        probe.spec = spec;
        probe.parameters = assemble(graph, design, calibrations, at);
        Prediction pred = predict(probe, valid);
        return log_score(family, valid.numeric(spec.response), pred.eta);
    };

    auto adam_step = [&](const Eigen::VectorXd& g, Eigen::VectorXd& m_out, Eigen::VectorXd& v_out, int t_out,
                         double rate) {
        m_out = beta1 * m + (1.0 - beta1) * g;
        v_out = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
        const double c1 = 1.0 - std::pow(beta1, t_out), c2 = 1.0 - std::pow(beta2, t_out);
        Eigen::ArrayXd step = rate * (m_out.array() / c1) / ((v_out.array() / c2).sqrt() + eps);
        return Eigen::VectorXd(theta - step.matrix());
    };

    const bool minibatch = config.batch_size && static_cast<std::size_t>(*config.batch_size) < train.rows();
    diag.approximate_projection = minibatch;
    std::vector<Eigen::Index> order(train.rows());
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        if (!minibatch) {
            Eigen::VectorXd m_new, v_new, g_new;
            Eigen::VectorXd candidate = adam_step(grad, m_new, v_new, t + 1, lr);
            double cand_loss = std::numeric_limits<double>::infinity();
            try {
                cand_loss = graph.objective(candidate, &g_new);
            } catch (const NumericalError&) {
            }
            if (std::isfinite(cand_loss) && cand_loss <= loss && g_new.allFinite()) {
                theta = std::move(candidate);
                grad = std::move(g_new);
                loss = cand_loss;
                m = std::move(m_new);
                v = std::move(v_new);
                ++t;
                lr = std::min(config.learning_rate, lr * 1.01);
            } else {
                // Restart the moments so the next step follows the current gradient.
                lr *= 0.5;
                m.setZero();
                v.setZero();
                t = 0;
                ++diag.rejected_steps;
            }
        } else {
            std::shuffle(order.begin(), order.end(), rng);
            const std::size_t b = static_cast<std::size_t>(*config.batch_size);
            for (std::size_t start = 0; start < order.size(); start += b) {
                std::vector<Eigen::Index> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                               order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + b)));
                Eigen::VectorXd g;
                graph.batch_objective(theta, rows, &g);
                if (!g.allFinite()) throw NumericalError("non-finite gradient in epoch " + std::to_string(epoch));
                Eigen::VectorXd m_new, v_new;
                theta = adam_step(g, m_new, v_new, t + 1, lr);
                m = std::move(m_new);
                v = std::move(v_new);
                ++t;
            }
            loss = graph.objective(theta, &grad);
            if (!std::isfinite(loss)) throw NumericalError("loss diverged in epoch " + std::to_string(epoch));
        }
        diag.loss_trace.push_back(loss);
        diag.epochs_run = epoch;

        if (validate) {
            double val = validation_nll(theta);
            diag.validation_trace.push_back(val);
            if (val < best_val) {
                best_val = val;
                best_theta = theta;
                diag.best_epoch = epoch;
            } else if (epoch - diag.best_epoch.value_or(0) >= config.patience) {
                break;
            }
        }
        if (!minibatch && lr < config.learning_rate * 1e-12) break;
    }
    if (validate && diag.best_epoch) theta = best_theta;

    model.parameters = assemble(graph, design, calibrations, theta);
    diag.final_loss = graph.objective(theta);
    Prediction fitted = predict(model, train);
    diag.final_nll = log_score(family, train.numeric(spec.response), fitted.eta);
    diag.clamped = fitted.clamped;
    diag.orthogonality_residual = orthogonality_residual(graph, theta);
    return model;
}

Prediction predict(const FittedModel& model, const Dataset& data) {
    const Family& family = model.family();
    if (model.parameters.size() != family.arity()) throw InvariantError("model does not match family arity");
    Prediction out;
    const auto n = static_cast<Eigen::Index>(data.rows());
    ClampStats stats;
    for (const auto& p : model.parameters) {
        Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
        std::vector<Eigen::MatrixXd> mats;
        mats.reserve(p.blocks.size());
        for (const auto& b : p.blocks) {
            mats.push_back(b.recipe.evaluate(data, &out.unseen_groups));
            if (mats.back().cols() != b.weights.size()) throw InvariantError("block width does not match weights");
            eta.noalias() += mats.back() * b.weights;
        }
        for (const auto& t : p.trunks) {
            Eigen::MatrixXd x = standardize(feature_matrix(data, t.term.features), t.input_mean, t.input_scale);
            MlpCache cache;
            Eigen::MatrixXd u = mlp_forward(t.shape, std::span<const double>(t.params.data(), t.params.size()), x, cache);
            if (t.ortho) u = t.ortho->apply(compose_blocks(mats, t.ortho->blocks), u);
            eta.noalias() += u * t.head;
        }
        out.eta.push_back(std::move(eta));
    }
    for (std::size_t k = 0; k < out.eta.size(); ++k) {
        Eigen::VectorXd theta(n);
        for (Eigen::Index i = 0; i < n; ++i) theta[i] = family.response(k, out.eta[k][i], &stats);
        out.theta.push_back(std::move(theta));
    }
    out.clamped = stats.clamped;
    return out;
}

std::vector<double> row_parameters(const Prediction& prediction, Eigen::Index row) {
    std::vector<double> out;
    for (const auto& t : prediction.theta) out.push_back(t[row]);
    return out;
}

const FittedBlock& find_block(const FittedModel& model, std::size_t parameter, const std::string& label) {
    if (parameter >= model.parameters.size()) {
        throw UserError("parameter index " + std::to_string(parameter + 1) + " is out of range");
    }
    for (const auto& b : model.parameters[parameter].blocks) {
        if (b.recipe.term.label() == label) return b;
    }
    // Accept a label without its df annotation, e.g. s(x1) for s(x1, df=4).
    for (const auto& b : model.parameters[parameter].blocks) {
        TermExpr bare = b.recipe.term;
        bare.df.reset();
        if (bare.label() == label) return b;
    }
    throw UserError("no structured term '" + label + "' in parameter " + std::to_string(parameter + 1));
}

EffectCurve partial_effect(const FittedModel& model, std::size_t parameter, const std::string& label,
                           const Eigen::VectorXd& grid) {
    const FittedBlock& b = find_block(model, parameter, label);
    const TermKind kind = b.recipe.term.kind;
    if (kind != TermKind::Linear && kind != TermKind::Smooth) {
        throw UserError("partial effects are available for linear and smooth terms, not " + label);
    }
    Dataset d;
    d.add_numeric(b.recipe.term.features[0], grid);
    EffectCurve curve;
    curve.grid = grid;
    curve.effect = b.recipe.evaluate(d) * b.weights;
    return curve;
}

}  // namespace sddr
