#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sddr/formula.hpp"

namespace sddr {

/// Fully connected trunk whose parameters live in a caller-owned flat buffer.
/// Each layer stores its weight matrix (fan_in x fan_out, column-major) followed
/// by its bias. Every layer, including the last, applies the activation.
struct MlpShape {
    int inputs = 0;
    std::vector<int> widths;
    Activation activation = Activation::Relu;

    std::size_t num_params() const;
    int outputs() const { return widths.back(); }
};

struct MlpCache {
    std::vector<Eigen::MatrixXd> layers;   // layers[0] = input, layers[l + 1] = activation of layer l
};

/// Returns the last layer's activations (n x outputs).
const Eigen::MatrixXd& mlp_forward(const MlpShape& shape, std::span<const double> params,
                                   const Eigen::MatrixXd& input, MlpCache& cache);

/// Accumulates d loss / d params into `grad` given d loss / d output.
void mlp_backward(const MlpShape& shape, std::span<const double> params, const MlpCache& cache,
                  const Eigen::MatrixXd& d_output, std::span<double> grad);

/// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
void glorot_init(const MlpShape& shape, std::span<double> params, std::mt19937_64& rng);

}  // namespace sddr
