#include <doctest.h>

#include "sddr/error.hpp"
#include "sddr/model_io.hpp"
#include "support.hpp"

using namespace sddr;
using nlohmann::json;

namespace {

Dataset mixed_data(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Dataset d;
    Eigen::VectorXd x1 = test::uniform(150, rng), x2 = test::uniform(150, rng);
    std::vector<std::string> g;
    for (int i = 0; i < 150; ++i) g.push_back("grp" + std::to_string(i % 6));
    Eigen::VectorXd y = (x1.array().sin() + x2.array().square() + 0.1 * test::uniform(150, rng).array()).matrix();
    d.add_numeric("y", y);
    d.add_numeric("x1", x1);
    d.add_numeric("x2", x2);
    d.add_labels("g", g);
    return d;
}

FittedModel small_model(std::uint64_t seed) {
    ModelSpec spec = build_spec({"y ~ 1 + x1 + s(x1) + te(x1, x2) + re(g) + d(net: x1, x2)", "y ~ 1 + s(x2)"},
                                "normal", {{"net", TrunkSpec{{6, 3}, Activation::Tanh}}});
    FitConfig cfg;
    cfg.epochs = 60;
    cfg.seed = seed;
    return fit(spec, mixed_data(1), cfg);
}

}  // namespace

TEST_SUITE("model_io") {

TEST_CASE("round trip reproduces predictions bit for bit") {
    FittedModel m = small_model(5);
    FittedModel back = deserialize_model(serialize_model(m));
    Dataset d = mixed_data(1);
    Prediction a = predict(m, d), b = predict(back, d);
    for (std::size_t k = 0; k < a.eta.size(); ++k) {
        CHECK(a.eta[k] == b.eta[k]);
        CHECK(a.theta[k] == b.theta[k]);
    }
    CHECK(serialize_model(back) == serialize_model(m));
    CHECK(back.spec == m.spec);
    CHECK(back.config == m.config);
}

TEST_CASE("identical seeds give identical files") {
    CHECK(serialize_model(small_model(9)) == serialize_model(small_model(9)));
    CHECK(serialize_model(small_model(9)) != serialize_model(small_model(10)));
}

TEST_CASE("save and load through the filesystem") {
    FittedModel m = small_model(3);
    auto dir = test::scratch_dir("model-io");
    save_model(m, (dir / "m.json").string());
    CHECK(serialize_model(load_model((dir / "m.json").string())) == serialize_model(m));
    CHECK_THROWS_AS(load_model((dir / "missing.json").string()), UserError);
}

TEST_CASE("malformed documents are user errors") {
    CHECK_THROWS_AS(deserialize_model("not json"), UserError);
    CHECK_THROWS_AS(deserialize_model("{}"), UserError);
    json j = model_to_json(small_model(1));
    j["version"] = 99;
    CHECK_THROWS_AS(model_from_json(j), UserError);
}

TEST_CASE("config round trip and strictness") {
    FitConfig c;
    c.learning_rate = 0.003;
    c.epochs = 17;
    c.batch_size = 8;
    c.seed = 12;
    c.early_stopping = true;
    c.patience = 4;
    c.orthogonalize = false;
    c.default_df = 5.5;
    c.design.n_knots = 9;
    CHECK(config_from_json(config_to_json(c)) == c);

    CHECK_THROWS_AS(config_from_json(json{{"optimizer", {{"lr", 0.1}}}}), UserError);
    CHECK_THROWS_AS(config_from_json(json{{"extra", 1}}), UserError);
    CHECK_THROWS_AS(config_from_json(json{{"optimizer", {{"epochs", "many"}}}}), UserError);
    CHECK_THROWS_AS(config_from_json(json{{"optimizer", {{"learning_rate", -1.0}}}}), UserError);
    CHECK_THROWS_AS(config_from_json(json{{"smoothing", {{"default_df", 0}}}}), UserError);
}

TEST_CASE("diagnostics carry smoothing and orthogonality") {
    FittedModel m = small_model(2);
    json d = diagnostics_to_json(m.diagnostics);
    CHECK(d.at("loss_trace").size() == 60);
    CHECK(d.at("orthogonality_residual").get<double>() <= 1e-8);
    CHECK(d.at("smoothing").size() == 4);
    for (const auto& s : d.at("smoothing")) CHECK(s.contains("lambda"));
}

}
