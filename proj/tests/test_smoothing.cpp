#include <doctest.h>

#include "sddr/error.hpp"
#include "sddr/smoothing.hpp"
#include "support.hpp"

using namespace sddr;

namespace {

// trace(B (B^T B + lambda S)^-1 B^T) with an explicit inverse.
double trace_df(const Eigen::MatrixXd& b, const Eigen::MatrixXd& s, double lambda) {
    Eigen::MatrixXd inv = (b.transpose() * b + lambda * s).inverse();
    return (b * inv * b.transpose()).trace();
}

}  // namespace

TEST_SUITE("smoothing") {

TEST_CASE("zero penalty has a zero spectrum") {
    std::mt19937_64 rng(1);
    Eigen::VectorXd s = dro_eigenvalues(test::gaussian(30, 5, rng), Eigen::MatrixXd::Zero(5, 5));
    CHECK(s.isZero(0.0));
}

TEST_CASE("orthonormal columns with identity penalty") {
    std::mt19937_64 rng(2);
    Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(test::gaussian(40, 6, rng)).householderQ() *
                        Eigen::MatrixXd::Identity(40, 6);
    Eigen::VectorXd s = dro_eigenvalues(q, Eigen::MatrixXd::Identity(6, 6));
    CHECK((s.array() - 1.0).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("trace identity on a P-spline penalty") {
    std::mt19937_64 rng(3);
    Eigen::MatrixXd b = test::gaussian(50, 6, rng);
    Eigen::MatrixXd pen = difference_penalty(6, 2);
    Eigen::VectorXd s = dro_eigenvalues(b, pen);
    for (int i = 1; i < s.size(); ++i) CHECK(s[i - 1] <= s[i]);
    CHECK(s[0] == 0.0);
    CHECK(s[1] == 0.0);
    for (double lambda : {0.1, 1.0, 10.0}) CHECK(std::abs(effective_df(s, lambda) - trace_df(b, pen, lambda)) <= 1e-8);
}

TEST_CASE("df_to_lambda") {
    Eigen::VectorXd s = Eigen::VectorXd::LinSpaced(8, 0.0, 3.0);
    CHECK(df_to_lambda(s, 8.0) == 0.0);

    Eigen::VectorXd ones = Eigen::VectorXd::Ones(6);
    double lambda = df_to_lambda(ones, 3.0);
    CHECK(std::abs(effective_df(ones, lambda) - 3.0) <= 1e-6);
    CHECK(lambda == doctest::Approx(1.0).epsilon(1e-5));

    std::mt19937_64 rng(4);
    Eigen::MatrixXd b = test::gaussian(60, 10, rng);
    Eigen::MatrixXd pen = difference_penalty(10, 2);
    double l4 = df_to_lambda(dro_eigenvalues(b, pen), 4.0);
    CHECK(std::abs(trace_df(b, pen, l4) - 4.0) <= 1e-6);

    Eigen::VectorXd spectrum = dro_eigenvalues(b, pen);
    CHECK_THROWS_AS(df_to_lambda(spectrum, 2.0), UserError);
    CHECK_THROWS_AS(df_to_lambda(spectrum, 1.5), UserError);
    CHECK_THROWS_AS(df_to_lambda(spectrum, 10.5), UserError);
}

TEST_CASE("df is strictly decreasing in lambda and inverts") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> logl(std::log(1e-3), std::log(1e3));
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::MatrixXd b = test::gaussian(40, 8, rng);
        Eigen::VectorXd s = dro_eigenvalues(b, difference_penalty(8, 2));
        double l1 = std::exp(logl(rng)), l2 = std::exp(logl(rng));
        if (l1 > l2) std::swap(l1, l2);
        if (l1 < l2) CHECK(effective_df(s, l1) > effective_df(s, l2));
        double back = df_to_lambda(s, effective_df(s, l1));
        CHECK(std::abs(back - l1) <= 1e-4 * l1);
    }
}

TEST_CASE("default df is the smallest maximum") {
    auto cal = [](int L) {
        SmootherCalibration c;
        c.df_max = L;
        return c;
    };
    CHECK(default_df({cal(21), cal(21), cal(9)}) == 9.0);
    CHECK(default_df({cal(21)}) == 21.0);
}

TEST_CASE("calibration resolves explicit, default and random-effect df") {
    std::mt19937_64 rng(6);
    Dataset d;
    for (const char* name : {"y", "a", "b", "c", "e"}) d.add_numeric(name, test::uniform(500, rng));
    std::vector<std::string> g;
    for (int i = 0; i < 500; ++i) g.push_back("g" + std::to_string(i % 10));
    d.add_labels("grp", g);
    ModelSpec spec = build_spec({"y ~ 1 + s(a, df=4) + s(b) + te(c, e) + re(grp)"}, "poisson", {});
    DesignOptions opts;
    opts.n_knots = 11;
    opts.tensor_n_knots = 5;
    auto design = build_design(spec, d, opts);
    auto cal = calibrate_smoothing(design, std::nullopt);
    REQUIRE(cal[0].size() == 5);
    CHECK_FALSE(cal[0][0].has_value());
    CHECK(cal[0][1]->df_max == 12);
    CHECK(cal[0][1]->df_target == 4.0);
    CHECK(std::abs(effective_df(cal[0][1]->eigenvalues, cal[0][1]->lambda) - 4.0) <= 1e-6);
    CHECK(cal[0][2]->df_target == 12.0);
    CHECK(cal[0][2]->lambda == 0.0);
    CHECK(cal[0][3]->df_max == 48);
    CHECK(cal[0][3]->df_target == 12.0);
    CHECK(cal[0][4]->df_target == 9.0);
    CHECK(cal[0][4]->lambda > 0.0);

    auto fixed = calibrate_smoothing(design, 6.0);
    CHECK(fixed[0][1]->df_target == 4.0);
    CHECK(fixed[0][2]->df_target == 6.0);
    CHECK(fixed[0][3]->df_target == 6.0);
}

}
