#include "sddr/evalsim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "sddr/error.hpp"
#include "sddr/model_io.hpp"

namespace sddr {

using nlohmann::json;

namespace {

using ShapeFn = double (*)(double);

const std::map<std::string, ShapeFn>& raw_shapes() {
    static const std::map<std::string, ShapeFn> shapes = {
        {"sin", [](double x) { return std::sin(std::numbers::pi * x); }},
        {"cos", [](double x) { return std::cos(std::numbers::pi * x); }},
        {"sin2", [](double x) { return std::sin(2.0 * std::numbers::pi * x); }},
        {"square", [](double x) { return x * x; }},
        {"abs", [](double x) { return std::abs(x); }},
        {"tanh", [](double x) { return std::tanh(3.0 * x); }},
        {"cubic", [](double x) { return x * x * x; }},
        {"exp", [](double x) { return std::exp(x); }},
        {"bump", [](double x) { return std::exp(-8.0 * x * x); }},
        {"logistic", [](double x) { return 1.0 / (1.0 + std::exp(-6.0 * x)); }},
    };
    return shapes;
}

struct ShapeFit {
    double mean = 0.0;
    double slope = 0.0;
};

// Composite Simpson integrals of g and x*g over [-1, 1].
ShapeFit linear_part(ShapeFn g) {
    constexpr int m = 20000;
    const double h = 2.0 / m;
    double s0 = 0.0, s1 = 0.0;
    for (int i = 0; i <= m; ++i) {
        double x = -1.0 + i * h;
        double w = (i == 0 || i == m) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        double v = g(x);
        s0 += w * v;
        s1 += w * x * v;
    }
    s0 *= h / 3.0;
    s1 *= h / 3.0;
    // Under U(-1, 1): E[g] = s0 / 2, Cov(x, g) / Var(x) = (s1 / 2) / (1 / 3).
    return {0.5 * s0, 1.5 * s1};
}

const std::map<std::string, ShapeFit>& shape_fits() {
    static const std::map<std::string, ShapeFit> fits = [] {
        std::map<std::string, ShapeFit> out;
        for (const auto& [name, fn] : raw_shapes()) out[name] = linear_part(fn);
        return out;
    }();
    return fits;
}

double get_double(const json& j, const std::string& key, const std::string& where) {
    if (!j.at(key).is_number()) throw UserError(where + "." + key + " must be a number");
    return j.at(key).get<double>();
}

int get_int(const json& j, const std::string& key, const std::string& where) {
    if (!j.at(key).is_number_integer()) throw UserError(where + "." + key + " must be an integer");
    return j.at(key).get<int>();
}

PredictorTruth predictor_from_json(const json& j, const std::string& where) {
    reject_unknown_keys(j, {"intercept", "linear", "smooth", "interaction"}, where);
    PredictorTruth p;
    if (j.contains("intercept")) p.intercept = get_double(j, "intercept", where);
    if (j.contains("linear")) {
        for (const auto& [name, v] : j.at("linear").items()) {
            if (!v.is_number()) throw UserError(where + ".linear." + name + " must be a number");
            p.linear[name] = v.get<double>();
        }
    }
    if (j.contains("smooth")) {
        for (const auto& s : j.at("smooth")) {
            reject_unknown_keys(s, {"feature", "shape", "amplitude"}, where + ".smooth");
            SmoothTruth t;
            t.feature = s.at("feature").get<std::string>();
            t.shape = s.at("shape").get<std::string>();
            if (!raw_shapes().count(t.shape)) throw UserError("unknown shape '" + t.shape + "' in " + where);
            if (s.contains("amplitude")) t.amplitude = get_double(s, "amplitude", where + ".smooth");
            p.smooth.push_back(std::move(t));
        }
    }
    if (j.contains("interaction")) p.interaction = j.at("interaction").get<bool>();
    return p;
}

json predictor_to_json(const PredictorTruth& p) {
    json smooth = json::array();
    for (const auto& s : p.smooth) smooth.push_back({{"feature", s.feature}, {"shape", s.shape}, {"amplitude", s.amplitude}});
    return {{"intercept", p.intercept}, {"linear", p.linear}, {"smooth", smooth}, {"interaction", p.interaction}};
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string feature_name(int j) { return "x" + std::to_string(j + 1); }

double draw_response(const Family& family, const std::vector<double>& eta, std::optional<double> noise_sd,
                     std::mt19937_64& rng) {
    const std::string_view name = family.name();
    auto theta = [&](std::size_t k) { return family.response(k, eta[k]); };
    if (name == "normal") {
        double sd = noise_sd ? *noise_sd : theta(1);
        if (sd == 0.0) return eta[0];
        return std::normal_distribution<double>(eta[0], sd)(rng);
    }
    if (name == "bernoulli") return std::bernoulli_distribution(theta(0))(rng) ? 1.0 : 0.0;
    if (name == "poisson") return static_cast<double>(std::poisson_distribution<long long>(theta(0))(rng));
    if (name == "gamma") {
        double mean = theta(0), shape = theta(1);
        return std::gamma_distribution<double>(shape, mean / shape)(rng);
    }
    if (name == "logistic") {
        double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        while (u <= 0.0) u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        return eta[0] + theta(1) * std::log(u / (1.0 - u));
    }
    if (name == "inverse_gamma") {
        double mode = theta(0), shape = theta(1);
        double scale = mode * (shape + 1.0);
        return 1.0 / std::gamma_distribution<double>(shape, 1.0 / scale)(rng);
    }
    throw InvariantError("no sampler for family " + std::string(name));
}

}  // namespace

double shape_value(const std::string& shape, double x) {
    auto it = raw_shapes().find(shape);
    if (it == raw_shapes().end()) throw UserError("unknown shape '" + shape + "'");
    const ShapeFit& fit = shape_fits().at(shape);
    return it->second(x) - fit.mean - fit.slope * x;
}

std::vector<std::string> shape_names() {
    std::vector<std::string> out;
    for (const auto& [name, fn] : raw_shapes()) out.push_back(name);
    return out;
}

Scenario scenario_from_json(const json& j) {
    try {
        reject_unknown_keys(j,
                            {"name", "family", "n", "seed", "replications", "test_fraction", "features", "predictors",
                             "noise_sd", "groups", "model"},
                            "scenario");
        Scenario s;
        s.name = j.at("name").get<std::string>();
        s.family = j.at("family").get<std::string>();
        const Family& family = family_by_name(s.family);
        s.n = get_int(j, "n", "scenario");
        if (s.n < 2) throw UserError("scenario.n must be at least 2");
        if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("replications")) s.replications = get_int(j, "replications", "scenario");
        if (s.replications < 1) throw UserError("scenario.replications must be positive");
        if (j.contains("test_fraction")) s.test_fraction = get_double(j, "test_fraction", "scenario");
        if (!(s.test_fraction >= 0.0 && s.test_fraction < 1.0)) throw UserError("scenario.test_fraction must lie in [0, 1)");
        const json& f = j.at("features");
        reject_unknown_keys(f, {"count", "low", "high"}, "scenario.features");
        s.features = get_int(f, "count", "scenario.features");
        if (f.contains("low")) s.low = get_double(f, "low", "scenario.features");
        if (f.contains("high")) s.high = get_double(f, "high", "scenario.features");
        if (!(s.high > s.low)) throw UserError("scenario.features needs high > low");
        for (const auto& p : j.at("predictors")) {
            s.predictors.push_back(predictor_from_json(p, "scenario.predictors"));
        }
        if (s.predictors.size() != family.arity()) {
            throw UserError("scenario lists " + std::to_string(s.predictors.size()) + " predictors for a family with " +
                            std::to_string(family.arity()) + " parameters");
        }
        if (j.contains("noise_sd") && !j.at("noise_sd").is_null()) {
            if (s.family != "normal") throw UserError("noise_sd applies to the normal family only");
            s.noise_sd = get_double(j, "noise_sd", "scenario");
            if (*s.noise_sd < 0.0) throw UserError("noise_sd must be non-negative");
        }
        if (j.contains("groups")) {
            const json& g = j.at("groups");
            reject_unknown_keys(g, {"feature", "count", "tau", "parameter"}, "scenario.groups");
            GroupSpec gs;
            if (g.contains("feature")) gs.feature = g.at("feature").get<std::string>();
            gs.count = get_int(g, "count", "scenario.groups");
            if (gs.count < 2) throw UserError("scenario.groups.count must be at least 2");
            if (g.contains("tau")) gs.tau = get_double(g, "tau", "scenario.groups");
            if (g.contains("parameter")) gs.parameter = static_cast<std::size_t>(get_int(g, "parameter", "scenario.groups"));
            if (gs.parameter >= family.arity()) throw UserError("scenario.groups.parameter is out of range");
            s.groups = gs;
        }
        const json& m = j.at("model");
        reject_unknown_keys(m, {"formulas", "trunks", "optimizer", "smoothing", "orthogonalize", "warm_start"},
                            "scenario.model");
        if (m.contains("warm_start")) s.warm_start = m.at("warm_start").get<bool>();
        s.formulas = m.at("formulas").get<std::vector<std::string>>();
        if (m.contains("trunks")) {
            for (const auto& [name, t] : m.at("trunks").items()) {
                reject_unknown_keys(t, {"widths", "activation"}, "scenario.model.trunks." + name);
                TrunkSpec ts;
                ts.widths = t.at("widths").get<std::vector<int>>();
                if (t.contains("activation")) ts.activation = parse_activation(t.at("activation").get<std::string>());
                s.trunks[name] = std::move(ts);
            }
        }
        json cfg = json::object();
        for (const char* key : {"optimizer", "smoothing", "orthogonalize"}) {
            if (m.contains(key)) cfg[key] = m.at(key);
        }
        s.fit = config_from_json(cfg);
        build_spec(s.formulas, s.family, s.trunks);
        return s;
    } catch (const json::exception& e) {
        throw UserError(std::string("malformed scenario: ") + e.what());
    }
}

std::vector<std::string> shipped_scenarios() {
    std::vector<std::string> names;
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(SDDR_SCENARIO_DIR, ec)) {
        if (entry.path().extension() == ".json") names.push_back(entry.path().stem().string());
    }
    std::sort(names.begin(), names.end());
    return names;
}

Scenario load_scenario(const std::string& name_or_path) {
    std::string path = name_or_path;
    if (!std::filesystem::exists(path)) {
        path = std::string(SDDR_SCENARIO_DIR) + "/" + name_or_path + ".json";
        if (!std::filesystem::exists(path)) {
            std::string known;
            for (const auto& n : shipped_scenarios()) known += (known.empty() ? "" : ", ") + n;
            throw UserError("unknown scenario '" + name_or_path + "' (shipped: " + known + ")");
        }
    }
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw UserError("scenario file '" + path + "' is not valid JSON: " + e.what());
    }
    return scenario_from_json(j);
}

json truth_to_json(const Truth& t) {
    json predictors = json::array();
    for (const auto& p : t.predictors) predictors.push_back(predictor_to_json(p));
    return {{"scenario", t.scenario},
            {"seed", t.seed},
            {"low", t.low},
            {"high", t.high},
            {"predictors", predictors},
            {"group_feature", t.group_feature},
            {"group_effects", t.group_effects}};
}

Truth truth_from_json(const json& j) {
    try {
        Truth t;
        t.scenario = j.at("scenario").get<std::string>();
        t.seed = j.at("seed").get<std::uint64_t>();
        t.low = j.at("low").get<double>();
        t.high = j.at("high").get<double>();
        for (const auto& p : j.at("predictors")) t.predictors.push_back(predictor_from_json(p, "truth.predictors"));
        t.group_feature = j.at("group_feature").get<std::string>();
        t.group_effects = j.at("group_effects").get<std::map<std::string, double>>();
        return t;
    } catch (const json::exception& e) {
        throw UserError(std::string("malformed truth file: ") + e.what());
    }
}

Simulation generate(const Scenario& s, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Family& family = family_by_name(s.family);
    const Eigen::Index n = s.n;
    Eigen::MatrixXd x(n, s.features);
    std::uniform_real_distribution<double> unif(s.low, s.high);
    for (Eigen::Index i = 0; i < n; ++i)
        for (int j = 0; j < s.features; ++j) x(i, j) = unif(rng);

    Simulation sim;
    sim.truth.scenario = s.name;
    sim.truth.seed = seed;
    sim.truth.low = s.low;
    sim.truth.high = s.high;
    sim.truth.predictors = s.predictors;

    std::vector<std::string> labels;
    Eigen::VectorXd group_shift = Eigen::VectorXd::Zero(n);
    if (s.groups) {
        std::normal_distribution<double> effect(0.0, s.groups->tau);
        std::vector<double> effects(static_cast<std::size_t>(s.groups->count));
        for (auto& e : effects) e = effect(rng);
        sim.truth.group_feature = s.groups->feature;
        for (int g = 0; g < s.groups->count; ++g) sim.truth.group_effects["g" + std::to_string(g + 1)] = effects[g];
        for (Eigen::Index i = 0; i < n; ++i) {
            int g = static_cast<int>(i % s.groups->count);
            labels.push_back("g" + std::to_string(g + 1));
            group_shift[i] = effects[static_cast<std::size_t>(g)];
        }
    }

    auto column_of = [&](const std::string& name) -> Eigen::VectorXd {
        for (int j = 0; j < s.features; ++j)
            if (feature_name(j) == name) return x.col(j);
        throw UserError("scenario references unknown feature '" + name + "'");
    };
    for (std::size_t k = 0; k < s.predictors.size(); ++k) {
        const PredictorTruth& p = s.predictors[k];
        Eigen::VectorXd eta = Eigen::VectorXd::Constant(n, p.intercept);
        for (const auto& [name, beta] : p.linear) eta += beta * column_of(name);
        for (const auto& sm : p.smooth) {
            Eigen::VectorXd col = column_of(sm.feature);
            for (Eigen::Index i = 0; i < n; ++i) eta[i] += sm.amplitude * shape_value(sm.shape, col[i]);
        }
        if (p.interaction) eta += x.rowwise().prod();
        if (s.groups && s.groups->parameter == k) eta += group_shift;
        sim.truth.eta.push_back(std::move(eta));
    }

    Eigen::VectorXd y(n);
    std::vector<double> row(family.arity());
    for (Eigen::Index i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < row.size(); ++k) row[k] = sim.truth.eta[k][i];
        y[i] = draw_response(family, row, s.noise_sd, rng);
    }
    sim.data.add_numeric("y", y);
    for (int j = 0; j < s.features; ++j) sim.data.add_numeric(feature_name(j), x.col(j));
    if (s.groups) sim.data.add_labels(s.groups->feature, labels);
    return sim;
}

EffectErrors effect_rmse(const FittedModel& model, const Truth& truth, std::size_t parameter) {
    EffectErrors out;
    if (parameter >= truth.predictors.size()) throw UserError("truth has no predictor " + std::to_string(parameter + 1));
    const PredictorTruth& p = truth.predictors[parameter];
    if (!p.linear.empty()) {
        double ss = 0.0;
        for (const auto& [name, beta] : p.linear) {
            const FittedBlock& b = find_block(model, parameter, name);
            ss += std::pow(b.weights[0] - beta, 2);
        }
        out.linear_rmse = std::sqrt(ss / static_cast<double>(p.linear.size()));
    }
    if (!p.smooth.empty()) {
        const int m = 200;
        Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(m, truth.low, truth.high);
        double total = 0.0;
        for (const auto& sm : p.smooth) {
            Eigen::VectorXd fitted = partial_effect(model, parameter, "s(" + sm.feature + ")", grid).effect;
            Eigen::VectorXd actual(m);
            for (int i = 0; i < m; ++i) actual[i] = sm.amplitude * shape_value(sm.shape, grid[i]);
            fitted.array() -= fitted.mean();
            actual.array() -= actual.mean();
            total += std::sqrt((fitted - actual).squaredNorm() / m);
        }
        out.smooth_rmse = total / static_cast<double>(p.smooth.size());
    }
    if (!truth.group_effects.empty()) {
        const FittedBlock& b = find_block(model, parameter, "re(" + truth.group_feature + ")");
        std::vector<double> fitted, actual;
        for (std::size_t g = 0; g < b.recipe.groups.size(); ++g) {
            auto it = truth.group_effects.find(b.recipe.groups[g]);
            if (it == truth.group_effects.end()) continue;
            fitted.push_back(b.weights[static_cast<Eigen::Index>(g)]);
            actual.push_back(it->second);
        }
        if (!fitted.empty()) {
            Eigen::Map<Eigen::VectorXd> f(fitted.data(), static_cast<Eigen::Index>(fitted.size()));
            Eigen::Map<Eigen::VectorXd> a(actual.data(), static_cast<Eigen::Index>(actual.size()));
            Eigen::VectorXd diff = (f.array() - f.mean()) - (a.array() - a.mean());
            out.group_rmse = std::sqrt(diff.squaredNorm() / static_cast<double>(diff.size()));
        }
    }
    return out;
}

Summary summarize(std::vector<double> values) {
    Summary s;
    if (values.empty()) return s;
    double med = median_of(values);
    for (auto& v : values) v = std::abs(v - med);
    s.median = med;
    s.mad = median_of(values);
    return s;
}

ReplicationResult run_replication(const Scenario& scenario, int replication) {
    ReplicationResult r;
    r.replication = replication;
    r.seed = scenario.seed + static_cast<std::uint64_t>(replication);
    try {
        Simulation sim = generate(scenario, r.seed);
        const auto n = static_cast<Eigen::Index>(sim.data.rows());
        const auto n_test = static_cast<Eigen::Index>(std::llround(scenario.test_fraction * static_cast<double>(n)));
        std::vector<Eigen::Index> train_rows, test_rows;
        for (Eigen::Index i = 0; i < n; ++i) (i < n - n_test ? train_rows : test_rows).push_back(i);
        Dataset train = n_test ? sim.data.select_rows(train_rows) : sim.data;
        ModelSpec spec = build_spec(scenario.formulas, scenario.family, scenario.trunks);
        FitConfig cfg = scenario.fit;
        cfg.seed = r.seed;
        std::optional<FittedModel> warm;
        if (scenario.warm_start) warm = fit(structured_part(spec), train, cfg);
        FittedModel model = fit(spec, train, cfg, warm ? &*warm : nullptr);
        if (n_test) {
            Dataset test = sim.data.select_rows(test_rows);
            r.log_score = log_score(model.family(), test.numeric("y"), predict(model, test).eta);
        } else {
            r.log_score = model.diagnostics.final_nll;
        }
        r.errors = effect_rmse(model, sim.truth);
        r.ok = std::isfinite(r.log_score);
        if (!r.ok) r.error = "non-finite log-score";
    } catch (const std::exception& e) {
        r.ok = false;
        r.error = e.what();
    }
    return r;
}

std::vector<ScenarioReport> run_experiment(const std::vector<Scenario>& scenarios, unsigned threads) {
    std::vector<std::pair<std::size_t, int>> tasks;
    for (std::size_t s = 0; s < scenarios.size(); ++s)
        for (int r = 0; r < scenarios[s].replications; ++r) tasks.emplace_back(s, r);
    std::vector<ReplicationResult> results(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            results[i] = run_replication(scenarios[tasks[i].first], tasks[i].second);
        }
    };
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(tasks.size())));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    std::vector<ScenarioReport> reports(scenarios.size());
    for (std::size_t i = 0; i < tasks.size(); ++i) reports[tasks[i].first].replications.push_back(results[i]);
    for (std::size_t s = 0; s < scenarios.size(); ++s) {
        ScenarioReport& rep = reports[s];
        rep.scenario = scenarios[s].name;
        std::vector<double> ls, lin, sm, grp;
        for (const auto& r : rep.replications) {
            if (!r.ok) {
                ++rep.failures;
                continue;
            }
            ls.push_back(r.log_score);
            if (r.errors.linear_rmse) lin.push_back(*r.errors.linear_rmse);
            if (r.errors.smooth_rmse) sm.push_back(*r.errors.smooth_rmse);
            if (r.errors.group_rmse) grp.push_back(*r.errors.group_rmse);
        }
        rep.log_score = summarize(ls);
        rep.linear_rmse = summarize(lin);
        rep.smooth_rmse = summarize(sm);
        rep.group_rmse = summarize(grp);
    }
    return reports;
}

namespace {

std::string cell(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json summary_json(const Summary& s) { return {{"median", opt_json(s.median)}, {"mad", opt_json(s.mad)}}; }

}  // namespace

std::string report_csv(const std::vector<ScenarioReport>& reports) {
    std::ostringstream out;
    out << "scenario,replications,failures,log_score_median,log_score_mad,linear_rmse_median,linear_rmse_mad,"
           "smooth_rmse_median,smooth_rmse_mad,group_rmse_median,group_rmse_mad\n";
    for (const auto& r : reports) {
        out << r.scenario << ',' << r.replications.size() << ',' << r.failures << ',' << cell(r.log_score.median) << ','
            << cell(r.log_score.mad) << ',' << cell(r.linear_rmse.median) << ',' << cell(r.linear_rmse.mad) << ','
            << cell(r.smooth_rmse.median) << ',' << cell(r.smooth_rmse.mad) << ',' << cell(r.group_rmse.median) << ','
            << cell(r.group_rmse.mad) << '\n';
    }
    return out.str();
}

json report_json(const std::vector<ScenarioReport>& reports) {
    json out = json::array();
    for (const auto& r : reports) {
        json reps = json::array();
        for (const auto& x : r.replications) {
            reps.push_back({{"replication", x.replication},
                            {"seed", x.seed},
                            {"ok", x.ok},
                            {"error", x.error},
                            {"log_score", x.ok ? json(x.log_score) : json(nullptr)},
                            {"linear_rmse", opt_json(x.errors.linear_rmse)},
                            {"smooth_rmse", opt_json(x.errors.smooth_rmse)},
                            {"group_rmse", opt_json(x.errors.group_rmse)}});
        }
        out.push_back({{"scenario", r.scenario},
                       {"failures", r.failures},
                       {"log_score", summary_json(r.log_score)},
                       {"linear_rmse", summary_json(r.linear_rmse)},
                       {"smooth_rmse", summary_json(r.smooth_rmse)},
                       {"group_rmse", summary_json(r.group_rmse)},
                       {"replications", reps}});
    }
    return {{"scenarios", out}};
}

unsigned thread_budget() {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("SDDR_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1) return std::min<unsigned>(static_cast<unsigned>(v), hw);
    }
    return hw;
}

}  // namespace sddr
