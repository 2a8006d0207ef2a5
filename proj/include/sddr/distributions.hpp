#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace sddr {

/// Response function h_k mapping a predictor onto the parameter space.
enum class Link { Identity, Exp, Sigmoid };

/// Predictors entering exp or sigmoid links are clamped to [-kEtaClamp, kEtaClamp].
inline constexpr double kEtaClamp = 30.0;

/// Counts predictor values clamped inside the response functions.
struct ClampStats {
    std::size_t clamped = 0;
};

/// A K-parameter outcome distribution with per-parameter response functions.
///
/// Row-level methods take the K predictors of one observation. Gradients are with
/// respect to the predictors (not the parameters); a clamped predictor contributes
/// a zero derivative.
class Family {
public:
    virtual ~Family() = default;

    virtual std::string_view name() const = 0;
    virtual std::size_t arity() const = 0;
    virtual std::string_view parameter_name(std::size_t k) const = 0;
    virtual Link link(std::size_t k) const = 0;

    /// Throws UserError when y is outside the support.
    virtual void check_support(double y) const = 0;

    virtual double nll(double y, std::span<const double> eta, ClampStats* stats = nullptr) const = 0;
    virtual void dnll_deta(double y, std::span<const double> eta, std::span<double> grad,
                           ClampStats* stats = nullptr) const = 0;

    virtual double cdf(double y, std::span<const double> theta) const = 0;
    /// Generalized inverse of the CDF: smallest y with cdf(y) >= prob.
    virtual double quantile(double prob, std::span<const double> theta) const = 0;

    /// Distribution mean at parameters theta.
    virtual double mean(std::span<const double> theta) const = 0;

    /// theta_k = h_k(eta_k), with clamping.
    double response(std::size_t k, double eta, ClampStats* stats = nullptr) const;
    std::vector<double> parameters(std::span<const double> eta) const;
};

const Family& family_by_name(std::string_view name);
std::vector<std::string> family_names();

/// Mean negative log-likelihood over rows. `eta` holds one predictor vector per parameter.
double nll(const Family& family, const Eigen::VectorXd& y, const std::vector<Eigen::VectorXd>& eta,
           ClampStats* stats = nullptr);

/// Per-row derivatives of the row NLL with respect to each predictor (not divided by n).
std::vector<Eigen::VectorXd> dnll_deta(const Family& family, const Eigen::VectorXd& y,
                                       const std::vector<Eigen::VectorXd>& eta,
                                       ClampStats* stats = nullptr);

/// Held-out mean negative log-likelihood.
double log_score(const Family& family, const Eigen::VectorXd& y,
                 const std::vector<Eigen::VectorXd>& eta);

/// Checks every response value; the error names the 0-based row index.
void check_support(const Family& family, const Eigen::VectorXd& y);

double quantile(const Family& family, double prob, std::span<const double> theta);

}  // namespace sddr
