#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sddr/dataset.hpp"
#include "sddr/design.hpp"
#include "sddr/distributions.hpp"
#include "sddr/formula.hpp"
#include "sddr/ortho.hpp"
#include "sddr/smoothing.hpp"
#include "sddr/trunk.hpp"

namespace sddr {

struct FitConfig {
    double learning_rate = 0.01;
    int epochs = 2000;
    std::optional<int> batch_size;        // full batch when unset
    std::uint64_t seed = 0;
    bool early_stopping = false;
    double validation_fraction = 0.1;
    int patience = 50;
    bool orthogonalize = true;
    std::optional<double> default_df;
    DesignOptions design;

    bool operator==(const FitConfig&) const = default;
};

using Calibrations = std::vector<std::vector<std::optional<SmootherCalibration>>>;

/// The penalized objective of one model over a fixed set of training rows.
///
/// Parameters live in one flat vector: per distribution parameter, the weights of
/// every structured block in design order, then for every deep term its trunk
/// parameters followed by its head. The loss is the mean NLL plus
/// sum_j lambda_j / (2 n) * w_j^T S_j w_j.
class Graph {
public:
    Graph(const ModelSpec& spec, const std::vector<ParameterDesign>& design, const Calibrations& calibrations,
          Eigen::VectorXd y, bool orthogonalize);

    struct Block {
        Eigen::MatrixXd matrix;
        Eigen::MatrixXd penalty;
        double lambda = 0.0;
        Eigen::Index offset = 0;
    };
    struct Trunk {
        TermExpr term;
        MlpShape shape;
        Eigen::MatrixXd input;             // standardized
        Eigen::VectorXd input_mean;
        Eigen::VectorXd input_scale;
        std::vector<std::size_t> constraint;   // empty: summed without projection
        Eigen::MatrixXd structured;            // composed constraint columns
        Projector projector;
        Eigen::Index offset = 0;
        Eigen::Index head_offset = 0;
    };
    struct Parameter {
        std::vector<Block> blocks;
        std::vector<Trunk> trunks;
    };

    const Family& family() const noexcept { return *family_; }
    Eigen::Index size() const noexcept { return size_; }
    Eigen::Index rows() const noexcept { return y_.size(); }
    const Eigen::VectorXd& response() const noexcept { return y_; }
    const std::vector<Parameter>& parameters() const noexcept { return params_; }

    /// Zero structured weights and heads, Glorot-uniform trunks.
    Eigen::VectorXd initialize(std::mt19937_64& rng) const;

    /// Penalized loss over all rows; fills `grad` when given.
    double objective(const Eigen::VectorXd& theta, Eigen::VectorXd* grad = nullptr,
                     ClampStats* stats = nullptr) const;
    /// Penalized loss over a subset of rows with the projection sliced to those rows
    /// and rescaled by n / batch.
    double batch_objective(const Eigen::VectorXd& theta, const std::vector<Eigen::Index>& rows,
                           Eigen::VectorXd* grad = nullptr) const;

    std::vector<Eigen::VectorXd> eta(const Eigen::VectorXd& theta) const;
    /// Trunk output before and after orthogonalization on the training rows.
    std::pair<Eigen::MatrixXd, Eigen::MatrixXd> latent(const Eigen::VectorXd& theta, std::size_t k,
                                                       std::size_t d) const;
    double penalty(const Eigen::VectorXd& theta) const;

private:
    struct View;
    double evaluate(const Eigen::VectorXd& theta, const View& view, Eigen::VectorXd* grad, ClampStats* stats,
                    std::vector<Eigen::VectorXd>* eta_out) const;
    View full_view() const;

    const Family* family_;
    Eigen::VectorXd y_;
    std::vector<Parameter> params_;
    Eigen::Index size_ = 0;
};

struct FittedBlock {
    BlockRecipe recipe;
    Eigen::VectorXd weights;
    Eigen::MatrixXd penalty;
    double lambda = 0.0;
    std::optional<double> df_target;
    std::vector<std::string> column_names;
};

struct FittedTrunk {
    TermExpr term;
    MlpShape shape;
    Eigen::VectorXd input_mean;
    Eigen::VectorXd input_scale;
    Eigen::VectorXd params;
    Eigen::VectorXd head;
    std::optional<OrthoMap> ortho;   // absent when the trunk output enters unprojected
};

struct FittedParameter {
    std::vector<FittedBlock> blocks;
    std::vector<FittedTrunk> trunks;
};

struct SmoothingDiagnostics {
    std::size_t parameter = 0;
    std::string term;
    double lambda = 0.0;
    double df_target = 0.0;
    double df_achieved = 0.0;
    int df_max = 0;
};

struct TrainingDiagnostics {
    std::vector<double> loss_trace;          // penalized training loss after each epoch
    std::vector<double> validation_trace;    // validation NLL, early stopping only
    int epochs_run = 0;
    std::optional<int> best_epoch;           // epoch restored by early stopping
    int rejected_steps = 0;
    double final_loss = 0.0;
    double final_nll = 0.0;                  // training NLL recomputed through predict
    std::size_t clamped = 0;
    bool approximate_projection = false;     // minibatch training slices the projector
    double orthogonality_residual = 0.0;     // max |X^T U| / (||X||_F ||U||_F) over trunks
    std::size_t training_rows = 0;
    std::size_t validation_rows = 0;
    std::vector<SmoothingDiagnostics> smoothing;
};

struct FittedModel {
    ModelSpec spec;
    FitConfig config;
    std::vector<FittedParameter> parameters;
    TrainingDiagnostics diagnostics;

    const Family& family() const { return family_by_name(spec.family); }
};

/// The same model with every deep term removed.
ModelSpec structured_part(const ModelSpec& spec);

/// Trains a model. With `warm_start`, structured weights are copied from a model
/// whose structured terms match term for term; trunks start fresh.
FittedModel fit(const ModelSpec& spec, const Dataset& data, const FitConfig& config,
                const FittedModel* warm_start = nullptr);

struct Prediction {
    std::vector<Eigen::VectorXd> eta;
    std::vector<Eigen::VectorXd> theta;
    std::size_t unseen_groups = 0;
    std::size_t clamped = 0;
};

Prediction predict(const FittedModel& model, const Dataset& data);

/// Parameters of row i as a contiguous vector.
std::vector<double> row_parameters(const Prediction& prediction, Eigen::Index row);

struct EffectCurve {
    Eigen::VectorXd grid;
    Eigen::VectorXd effect;
};

/// Finds a structured block by its label (`x1`, `s(x1)`, `s(x1, df=4)`).
const FittedBlock& find_block(const FittedModel& model, std::size_t parameter, const std::string& label);

/// Contribution of a linear or smooth term evaluated at `grid`.
EffectCurve partial_effect(const FittedModel& model, std::size_t parameter, const std::string& label,
                           const Eigen::VectorXd& grid);

}  // namespace sddr
