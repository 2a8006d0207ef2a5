#include "sddr/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "sddr/error.hpp"

namespace sddr {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

double clamp_eta(double eta, bool& clamped, ClampStats* stats) {
    clamped = eta > kEtaClamp || eta < -kEtaClamp;
    if (!clamped) return eta;
    if (stats) ++stats->clamped;
    return std::clamp(eta, -kEtaClamp, kEtaClamp);
}

double clamp_eta(double eta, ClampStats* stats) {
    bool clamped = false;
    return clamp_eta(eta, clamped, stats);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

void require_prob(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw UserError("quantile probability must lie in (0, 1), got " + std::to_string(p));
    }
}

// Bisection on log(y) over a bracket that depends only on theta, never on prob.
// Returns the upper end of the final bracket, so quantiles of a fixed theta are
// non-decreasing in prob by construction.
template <class Cdf>
double positive_quantile(double prob, Cdf&& cdf) {
    double lo = -700.0, hi = 700.0;
    for (int it = 0; it < 120; ++it) {
        double mid = 0.5 * (lo + hi);
        if (cdf(std::exp(mid)) >= prob) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return std::exp(hi);
}

void require_positive(double y, std::string_view family) {
    if (!(y > 0.0) || !std::isfinite(y)) {
        throw UserError(std::string(family) + " response must be positive and finite");
    }
}

class Normal final : public Family {
public:
    std::string_view name() const override { return "normal"; }
    std::size_t arity() const override { return 2; }
    std::string_view parameter_name(std::size_t k) const override { return k == 0 ? "mu" : "sigma"; }
    Link link(std::size_t k) const override { return k == 0 ? Link::Identity : Link::Exp; }

    void check_support(double y) const override {
        if (!std::isfinite(y)) throw UserError("normal response must be finite");
    }

    double nll(double y, std::span<const double> eta, ClampStats* stats) const override {
        double ls = clamp_eta(eta[1], stats);
        double r = (y - eta[0]) * std::exp(-ls);
        return kHalfLog2Pi + ls + 0.5 * r * r;
    }

    void dnll_deta(double y, std::span<const double> eta, std::span<double> grad,
                   ClampStats* stats) const override {
        bool clamped = false;
        double ls = clamp_eta(eta[1], clamped, stats);
        double inv_var = std::exp(-2.0 * ls);
        double d = y - eta[0];
        grad[0] = -d * inv_var;
        grad[1] = clamped ? 0.0 : 1.0 - d * d * inv_var;
    }

    double cdf(double y, std::span<const double> theta) const override {
        return 0.5 * std::erfc(-(y - theta[0]) / (theta[1] * std::numbers::sqrt2));
    }

    double quantile(double prob, std::span<const double> theta) const override {
        require_prob(prob);
        return theta[0] - theta[1] * std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * prob);
    }

    double mean(std::span<const double> theta) const override { return theta[0]; }
};

class Bernoulli final : public Family {
public:
    std::string_view name() const override { return "bernoulli"; }
    std::size_t arity() const override { return 1; }
    std::string_view parameter_name(std::size_t) const override { return "p"; }
    Link link(std::size_t) const override { return Link::Sigmoid; }

    void check_support(double y) const override {
        if (y != 0.0 && y != 1.0) throw UserError("bernoulli response must be 0 or 1");
    }

    double nll(double y, std::span<const double> eta, ClampStats* stats) const override {
        double e = clamp_eta(eta[0], stats);
        return softplus(e) - y * e;
    }

    void dnll_deta(double y, std::span<const double> eta, std::span<double> grad,
                   ClampStats* stats) const override {
        bool clamped = false;
        double e = clamp_eta(eta[0], clamped, stats);
        grad[0] = clamped ? 0.0 : sigmoid(e) - y;
    }

    double cdf(double y, std::span<const double> theta) const override {
        if (y < 0.0) return 0.0;
        if (y < 1.0) return 1.0 - theta[0];
        return 1.0;
    }

    double quantile(double prob, std::span<const double> theta) const override {
        require_prob(prob);
        return prob <= 1.0 - theta[0] ? 0.0 : 1.0;
    }

    double mean(std::span<const double> theta) const override { return theta[0]; }
};

class Poisson final : public Family {
public:
    std::string_view name() const override { return "poisson"; }
    std::size_t arity() const override { return 1; }
    std::string_view parameter_name(std::size_t) const override { return "rate"; }
    Link link(std::size_t) const override { return Link::Exp; }

    void check_support(double y) const override {
        if (!(y >= 0.0) || !std::isfinite(y) || std::floor(y) != y) {
            throw UserError("poisson response must be a non-negative integer");
        }
    }

    double nll(double y, std::span<const double> eta, ClampStats* stats) const override {
        double e = clamp_eta(eta[0], stats);
        return std::exp(e) - y * e + std::lgamma(y + 1.0);
    }

    void dnll_deta(double y, std::span<const double> eta, std::span<double> grad,
                   ClampStats* stats) const override {
        bool clamped = false;
        double e = clamp_eta(eta[0], clamped, stats);
        grad[0] = clamped ? 0.0 : std::exp(e) - y;
    }

    double cdf(double y, std::span<const double> theta) const override {
        if (y < 0.0) return 0.0;
        return boost::math::gamma_q(std::floor(y) + 1.0, theta[0]);
    }

    double quantile(double prob, std::span<const double> theta) const override {
        require_prob(prob);
        double rate = theta[0];
        double guess = std::floor(rate + std::sqrt(rate) *
                                              (-std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * prob)));
        double k = std::max(0.0, guess);
        while (cdf(k, theta) < prob) k += 1.0;
        while (k > 0.0 && cdf(k - 1.0, theta) >= prob) k -= 1.0;
        return k;
    }

    double mean(std::span<const double> theta) const override { return theta[0]; }
};

// Mean-shape parameterization: rate = shape / mean.
class Gamma final : public Family {
public:
    std::string_view name() const override { return "gamma"; }
    std::size_t arity() const override { return 2; }
    std::string_view parameter_name(std::size_t k) const override { return k == 0 ? "mean" : "shape"; }
    Link link(std::size_t) const override { return Link::Exp; }

    void check_support(double y) const override { require_positive(y, "gamma"); }

    double nll(double y, std::span<const double> eta, ClampStats* stats) const override {
        double lm = clamp_eta(eta[0], stats);
        double la = clamp_eta(eta[1], stats);
        double a = std::exp(la);
        return -a * (la - lm) + std::lgamma(a) - (a - 1.0) * std::log(y) + a * y * std::exp(-lm);
    }

    void dnll_deta(double y, std::span<const double> eta, std::span<double> grad,
                   ClampStats* stats) const override {
        bool c0 = false, c1 = false;
        double lm = clamp_eta(eta[0], c0, stats);
        double la = clamp_eta(eta[1], c1, stats);
        double a = std::exp(la);
        double ym = y * std::exp(-lm);
        grad[0] = c0 ? 0.0 : a - a * ym;
        grad[1] = c1 ? 0.0
                     : a * (-la - 1.0 + lm + boost::math::digamma(a) - std::log(y) + ym);
    }

    double cdf(double y, std::span<const double> theta) const override {
        if (y <= 0.0) return 0.0;
        return boost::math::gamma_p(theta[1], theta[1] * y / theta[0]);
    }

    double quantile(double prob, std::span<const double> theta) const override {
        require_prob(prob);
        return positive_quantile(prob, [&](double y) { return cdf(y, theta); });
    }

    double mean(std::span<const double> theta) const override { return theta[0]; }
};

class Logistic final : public Family {
public:
    std::string_view name() const override { return "logistic"; }
    std::size_t arity() const override { return 2; }
    std::string_view parameter_name(std::size_t k) const override {
        return k == 0 ? "location" : "scale";
    }
    Link link(std::size_t k) const override { return k == 0 ? Link::Identity : Link::Exp; }

    void check_support(double y) const override {
        if (!std::isfinite(y)) throw UserError("logistic response must be finite");
    }

    double nll(double y, std::span<const double> eta, ClampStats* stats) const override {
        double ls = clamp_eta(eta[1], stats);
        double z = (y - eta[0]) * std::exp(-ls);
        return softplus(z) + softplus(-z) + ls;
    }

    void dnll_deta(double y, std::span<const double> eta, std::span<double> grad,
                   ClampStats* stats) const override {
        bool clamped = false;
        double ls = clamp_eta(eta[1], clamped, stats);
        double inv_s = std::exp(-ls);
        double z = (y - eta[0]) * inv_s;
        double t = std::tanh(0.5 * z);
        grad[0] = -t * inv_s;
        grad[1] = clamped ? 0.0 : 1.0 - z * t;
    }

    double cdf(double y, std::span<const double> theta) const override {
        return sigmoid((y - theta[0]) / theta[1]);
    }

    double quantile(double prob, std::span<const double> theta) const override {
        require_prob(prob);
        return theta[0] + theta[1] * (std::log(prob) - std::log1p(-prob));
    }

    double mean(std::span<const double> theta) const override { return theta[0]; }
};

// Mode-shape parameterization: scale = mode * (shape + 1).
class InverseGamma final : public Family {
public:
    std::string_view name() const override { return "inverse_gamma"; }
    std::size_t arity() const override { return 2; }
    std::string_view parameter_name(std::size_t k) const override { return k == 0 ? "mode" : "shape"; }
    Link link(std::size_t) const override { return Link::Exp; }

    void check_support(double y) const override { require_positive(y, "inverse_gamma"); }

    double nll(double y, std::span<const double> eta, ClampStats* stats) const override {
        double lm = clamp_eta(eta[0], stats);
        double la = clamp_eta(eta[1], stats);
        double a = std::exp(la);
        double log_scale = lm + std::log1p(a);
        return -a * log_scale + std::lgamma(a) + (a + 1.0) * std::log(y) + std::exp(log_scale) / y;
    }

    void dnll_deta(double y, std::span<const double> eta, std::span<double> grad,
                   ClampStats* stats) const override {
        bool c0 = false, c1 = false;
        double lm = clamp_eta(eta[0], c0, stats);
        double la = clamp_eta(eta[1], c1, stats);
        double a = std::exp(la);
        double m = std::exp(lm);
        double log_scale = lm + std::log1p(a);
        double scale = std::exp(log_scale);
        grad[0] = c0 ? 0.0 : -a + scale / y;
        grad[1] = c1 ? 0.0
                     : a * (-log_scale - a / (a + 1.0) + boost::math::digamma(a) + std::log(y) + m / y);
    }

    double cdf(double y, std::span<const double> theta) const override {
        if (y <= 0.0) return 0.0;
        double scale = theta[0] * (theta[1] + 1.0);
        return boost::math::gamma_q(theta[1], scale / y);
    }

    double quantile(double prob, std::span<const double> theta) const override {
        require_prob(prob);
        return positive_quantile(prob, [&](double y) { return cdf(y, theta); });
    }

    double mean(std::span<const double> theta) const override {
        if (theta[1] <= 1.0) return std::numeric_limits<double>::infinity();
        return theta[0] * (theta[1] + 1.0) / (theta[1] - 1.0);
    }
};

const std::vector<std::unique_ptr<Family>>& registry() {
    static const std::vector<std::unique_ptr<Family>> families = [] {
        std::vector<std::unique_ptr<Family>> v;
        v.push_back(std::make_unique<Normal>());
        v.push_back(std::make_unique<Bernoulli>());
        v.push_back(std::make_unique<Poisson>());
        v.push_back(std::make_unique<Gamma>());
        v.push_back(std::make_unique<Logistic>());
        v.push_back(std::make_unique<InverseGamma>());
        return v;
    }();
    return families;
}

void check_shapes(const Family& family, const Eigen::VectorXd& y,
                  const std::vector<Eigen::VectorXd>& eta) {
    if (eta.size() != family.arity()) {
        throw InvariantError("expected " + std::to_string(family.arity()) + " predictors, got " +
                             std::to_string(eta.size()));
    }
    for (const auto& e : eta) {
        if (e.size() != y.size()) throw InvariantError("predictor length does not match response");
    }
}

}  // namespace

double Family::response(std::size_t k, double eta, ClampStats* stats) const {
    switch (link(k)) {
        case Link::Identity: return eta;
        case Link::Exp: return std::exp(clamp_eta(eta, stats));
        case Link::Sigmoid: return sigmoid(clamp_eta(eta, stats));
    }
    throw InvariantError("unknown link");
}

std::vector<double> Family::parameters(std::span<const double> eta) const {
    std::vector<double> theta(arity());
    for (std::size_t k = 0; k < arity(); ++k) theta[k] = response(k, eta[k]);
    return theta;
}

const Family& family_by_name(std::string_view name) {
    for (const auto& f : registry())
        if (f->name() == name) return *f;
    throw UserError("unknown family '" + std::string(name) + "'");
}

std::vector<std::string> family_names() {
    std::vector<std::string> names;
    for (const auto& f : registry()) names.emplace_back(f->name());
    return names;
}

double nll(const Family& family, const Eigen::VectorXd& y, const std::vector<Eigen::VectorXd>& eta,
           ClampStats* stats) {
    check_shapes(family, y, eta);
    const std::size_t K = family.arity();
    double row_eta[2];
    double total = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        for (std::size_t k = 0; k < K; ++k) row_eta[k] = eta[k][i];
        total += family.nll(y[i], std::span<const double>(row_eta, K), stats);
    }
    double mean = total / static_cast<double>(y.size());
    if (!std::isfinite(mean)) {
        throw NumericalError("negative log-likelihood of family " + std::string(family.name()) +
                             " is not finite (overflow in a response function?)");
    }
    return mean;
}

std::vector<Eigen::VectorXd> dnll_deta(const Family& family, const Eigen::VectorXd& y,
                                       const std::vector<Eigen::VectorXd>& eta, ClampStats* stats) {
    check_shapes(family, y, eta);
    const std::size_t K = family.arity();
    std::vector<Eigen::VectorXd> grad(K, Eigen::VectorXd(y.size()));
    double row_eta[2];
    double row_grad[2];
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        for (std::size_t k = 0; k < K; ++k) row_eta[k] = eta[k][i];
        family.dnll_deta(y[i], std::span<const double>(row_eta, K), std::span<double>(row_grad, K),
                         stats);
        for (std::size_t k = 0; k < K; ++k) grad[k][i] = row_grad[k];
    }
    return grad;
}

double log_score(const Family& family, const Eigen::VectorXd& y,
                 const std::vector<Eigen::VectorXd>& eta) {
    return nll(family, y, eta);
}

void check_support(const Family& family, const Eigen::VectorXd& y) {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        try {
            family.check_support(y[i]);
        } catch (const UserError& e) {
            throw UserError(std::string(e.what()) + " (row index " + std::to_string(i) +
                            ", value " + std::to_string(y[i]) + ")");
        }
    }
}

double quantile(const Family& family, double prob, std::span<const double> theta) {
    return family.quantile(prob, theta);
}

}  // namespace sddr
