#include <doctest.h>

#include "sddr/ortho.hpp"
#include "support.hpp"

using namespace sddr;

namespace {

Eigen::MatrixXd oracle_complement(const Eigen::MatrixXd& x, const Eigen::MatrixXd& u) {
    return u - x * (x.transpose() * x).ldlt().solve(x.transpose() * u);
}

}  // namespace

TEST_SUITE("ortho") {

TEST_CASE("centering against the intercept") {
    Projector p(Eigen::MatrixXd::Ones(2, 1));
    Eigen::MatrixXd u(2, 1);
    u << 1, 3;
    Eigen::MatrixXd out = p.apply(u);
    CHECK(out(0, 0) == doctest::Approx(-1.0));
    CHECK(out(1, 0) == doctest::Approx(1.0));
}

TEST_CASE("full-rank square source annihilates everything") {
    std::mt19937_64 rng(1);
    Projector p(test::gaussian(6, 6, rng));
    CHECK(p.annihilates());
    CHECK(p.apply(test::gaussian(6, 3, rng)).isZero(0.0));
}

TEST_CASE("random instances against the explicit projector") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::MatrixXd x = test::gaussian(5, 2, rng), u = test::gaussian(5, 3, rng);
        Projector p(x);
        CHECK(p.rank() == 2);
        Eigen::MatrixXd q = p.q();
        CHECK((q.transpose() * q - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-10);
        Eigen::MatrixXd pu = apply_orthogonalization(p, u);
        CHECK((x.transpose() * pu).cwiseAbs().maxCoeff() <= 1e-10 * x.norm() * u.norm());
        CHECK((pu - oracle_complement(x, u)).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((p.apply(pu) - pu).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("fixed points and annihilation") {
    std::mt19937_64 rng(3);
    Eigen::MatrixXd x = test::gaussian(30, 4, rng);
    Projector p(x);
    Eigen::MatrixXd orth = oracle_complement(x, test::gaussian(30, 2, rng));
    CHECK((p.apply(orth) - orth).cwiseAbs().maxCoeff() <= 1e-13);
    CHECK(p.apply(x).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("rank deficiency and the empty source") {
    std::mt19937_64 rng(4);
    Eigen::MatrixXd x = test::gaussian(20, 3, rng);
    Eigen::MatrixXd dup(20, 4);
    dup << x, x.col(0) + x.col(1);
    CHECK(Projector(dup).rank() == 3);

    Eigen::MatrixXd u = test::gaussian(20, 2, rng);
    Projector none(Eigen::MatrixXd::Zero(20, 2));
    CHECK(none.rank() == 0);
    CHECK(none.apply(u) == u);
}

TEST_CASE("the backward pass is the projection itself") {
    std::mt19937_64 rng(5);
    Eigen::MatrixXd x = test::gaussian(12, 3, rng), u = test::gaussian(12, 2, rng), w = test::gaussian(12, 2, rng);
    Projector p(x);
    auto loss = [&](const Eigen::MatrixXd& a) { return (w.array() * p.apply(a).array().tanh()).sum(); };
    Eigen::MatrixXd pu = p.apply(u);
    Eigen::MatrixXd upstream = (w.array() * (1.0 - pu.array().tanh().square())).matrix();
    Eigen::MatrixXd grad = p.apply(upstream);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < u.rows(); ++i)
        for (Eigen::Index j = 0; j < u.cols(); ++j) {
            Eigen::MatrixXd up = u, dn = u;
            up(i, j) += h;
            dn(i, j) -= h;
            double fd = (loss(up) - loss(dn)) / (2 * h);
            CHECK(test::rel_err(fd, grad(i, j)) <= 1e-6);
        }
}

TEST_CASE("ortho map reproduces the projection and extends to new rows") {
    std::mt19937_64 rng(6);
    Eigen::MatrixXd x = test::gaussian(40, 5, rng), u = test::gaussian(40, 3, rng);
    Projector p(x);
    OrthoMap map = fit_ortho_map(p, {0}, u);
    CHECK((map.apply(x, u) - oracle_complement(x, u)).cwiseAbs().maxCoeff() <= 1e-8);

    OrthoMap zero = fit_ortho_map(p, {0}, oracle_complement(x, u));
    CHECK(zero.coefficients.cwiseAbs().maxCoeff() <= 1e-12);

    OrthoMap same = fit_ortho_map(p, {0}, x);
    Eigen::MatrixXd x_new = test::gaussian(7, 5, rng);
    CHECK(same.apply(x_new, x_new).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("constraint sets follow feature overlap") {
    std::mt19937_64 rng(7);
    Dataset d;
    for (const char* name : {"y", "x1", "u1"}) d.add_numeric(name, test::uniform(100, rng));
    std::map<std::string, TrunkSpec> trunks = {{"a", TrunkSpec{{4}}}, {"b", TrunkSpec{{4}}}};

    ModelSpec disjoint = build_spec({"y ~ 1 + x1 + d(a: u1)"}, "poisson", trunks);
    auto d1 = build_design(disjoint, d, DesignOptions{});
    CHECK(constraint_set(d1[0], d1[0].deep[0].term).empty());

    ModelSpec shared = build_spec({"y ~ 1 + x1 + s(x1) + d(a: x1, u1) + d(b: x1)"}, "poisson", trunks);
    auto d2 = build_design(shared, d, DesignOptions{});
    CHECK(constraint_set(d2[0], d2[0].deep[0].term) == std::vector<std::size_t>{0, 1, 2});
    CHECK(constraint_set(d2[0], d2[0].deep[1].term) == std::vector<std::size_t>{0, 1, 2});
    CHECK(compose_blocks(d2[0], {0, 1, 2}).cols() == 1 + 1 + d2[0].blocks[2].cols());
}

}
