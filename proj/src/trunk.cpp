#include "sddr/trunk.hpp"

#include <cmath>

#include "sddr/error.hpp"

namespace sddr {

namespace {

using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

int fan_in(const MlpShape& shape, std::size_t layer) {
    return layer == 0 ? shape.inputs : shape.widths[layer - 1];
}

}  // namespace

std::size_t MlpShape::num_params() const {
    std::size_t total = 0;
    for (std::size_t l = 0; l < widths.size(); ++l) {
        total += static_cast<std::size_t>(fan_in(*this, l) + 1) * static_cast<std::size_t>(widths[l]);
    }
    return total;
}

const Eigen::MatrixXd& mlp_forward(const MlpShape& shape, std::span<const double> params,
                                   const Eigen::MatrixXd& input, MlpCache& cache) {
    if (input.cols() != shape.inputs) throw InvariantError("trunk input width mismatch");
    if (params.size() != shape.num_params()) throw InvariantError("trunk parameter count mismatch");
    cache.layers.resize(shape.widths.size() + 1);
    cache.layers[0] = input;
    std::size_t at = 0;
    for (std::size_t l = 0; l < shape.widths.size(); ++l) {
        const int in = fan_in(shape, l), out = shape.widths[l];
        ConstMatMap w(params.data() + at, in, out);
        at += static_cast<std::size_t>(in) * out;
        ConstVecMap b(params.data() + at, out);
        at += out;
        Eigen::MatrixXd h = cache.layers[l] * w;
        h.rowwise() += b.transpose();
        if (shape.activation == Activation::Relu) {
            h = h.cwiseMax(0.0);
        } else {
            h = h.array().tanh().matrix();
        }
        cache.layers[l + 1] = std::move(h);
    }
    return cache.layers.back();
}

void mlp_backward(const MlpShape& shape, std::span<const double> params, const MlpCache& cache,
                  const Eigen::MatrixXd& d_output, std::span<double> grad) {
    std::vector<std::size_t> offsets(shape.widths.size());
    std::size_t at = 0;
    for (std::size_t l = 0; l < shape.widths.size(); ++l) {
        offsets[l] = at;
        at += static_cast<std::size_t>(fan_in(shape, l) + 1) * shape.widths[l];
    }
    Eigen::MatrixXd delta = d_output;
    for (std::size_t l = shape.widths.size(); l-- > 0;) {
        const Eigen::MatrixXd& act = cache.layers[l + 1];
        if (shape.activation == Activation::Relu) {
            delta = (act.array() > 0.0).select(delta, 0.0);
        } else {
            delta = delta.cwiseProduct((1.0 - act.array().square()).matrix());
        }
        const int in = fan_in(shape, l), out = shape.widths[l];
        Eigen::Map<Eigen::MatrixXd> gw(grad.data() + offsets[l], in, out);
        Eigen::Map<Eigen::VectorXd> gb(grad.data() + offsets[l] + static_cast<std::size_t>(in) * out, out);
        gw.noalias() += cache.layers[l].transpose() * delta;
        gb += delta.colwise().sum().transpose();
        if (l > 0) {
            ConstMatMap w(params.data() + offsets[l], in, out);
            delta = delta * w.transpose();
        }
    }
}

void glorot_init(const MlpShape& shape, std::span<double> params, std::mt19937_64& rng) {
    std::size_t at = 0;
    for (std::size_t l = 0; l < shape.widths.size(); ++l) {
        const int in = fan_in(shape, l), out = shape.widths[l];
        const double limit = std::sqrt(6.0 / (in + out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (std::size_t i = 0; i < static_cast<std::size_t>(in) * out; ++i) params[at++] = dist(rng);
        for (int i = 0; i < out; ++i) params[at++] = 0.0;
    }
}

}  // namespace sddr
