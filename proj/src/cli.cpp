#include "sddr/cli.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "sddr/dataset.hpp"
#include "sddr/error.hpp"
#include "sddr/evalsim.hpp"
#include "sddr/model_io.hpp"

namespace sddr {

using nlohmann::json;
namespace fs = std::filesystem;

ModelSpec RunConfig::spec() const { return build_spec(formulas, family, trunks); }

RunConfig run_config_from_json(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw UserError("config must be a JSON object");
    reject_unknown_keys(j,
                        {"family", "formulas", "trunks", "optimizer", "smoothing", "orthogonalize", "warm_start",
                         "data", "model", "out"},
                        "config");
    RunConfig c;
    try {
        if (!j.contains("family") || !j.at("family").is_string()) throw UserError("config.family must be a string");
        c.family = j.at("family").get<std::string>();
        if (!j.contains("formulas")) throw UserError("config.formulas is required");
        const json& f = j.at("formulas");
        if (f.is_string()) {
            c.formulas.push_back(f.get<std::string>());
        } else if (f.is_array() && std::all_of(f.begin(), f.end(), [](const json& e) { return e.is_string(); })) {
            c.formulas = f.get<std::vector<std::string>>();
        } else {
            throw UserError("config.formulas must be a string or an array of strings");
        }
        if (j.contains("trunks")) {
            if (!j.at("trunks").is_object()) throw UserError("config.trunks must be an object");
            for (const auto& [name, t] : j.at("trunks").items()) {
                const std::string where = "config.trunks." + name;
                reject_unknown_keys(t, {"widths", "activation"}, where);
                TrunkSpec ts;
                if (!t.contains("widths") || !t.at("widths").is_array()) throw UserError(where + ".widths is required");
                for (const auto& w : t.at("widths")) {
                    if (!w.is_number_integer() || w.get<long long>() < 1) {
                        throw UserError(where + ".widths must hold positive integers");
                    }
                    ts.widths.push_back(w.get<int>());
                }
                if (ts.widths.empty()) throw UserError(where + ".widths must not be empty");
                if (t.contains("activation")) ts.activation = parse_activation(t.at("activation").get<std::string>());
                c.trunks[name] = std::move(ts);
            }
        }
        json fit = json::object();
        for (const char* key : {"optimizer", "smoothing", "orthogonalize"}) {
            if (j.contains(key)) fit[key] = j.at(key);
        }
        c.fit = config_from_json(fit);
        if (j.contains("warm_start")) {
            if (!j.at("warm_start").is_boolean()) throw UserError("config.warm_start must be true or false");
            c.warm_start = j.at("warm_start").get<bool>();
        }
        auto path_of = [&](const char* key) -> std::optional<fs::path> {
            if (!j.contains(key)) return std::nullopt;
            if (!j.at(key).is_string()) throw UserError(std::string("config.") + key + " must be a path string");
            fs::path p = j.at(key).get<std::string>();
            return p.is_absolute() ? p : base_dir / p;
        };
        c.data = path_of("data");
        c.model = path_of("model");
        c.out = path_of("out");
    } catch (const json::exception& e) {
        throw UserError(std::string("malformed config: ") + e.what());
    }
    c.spec();
    return c;
}

RunConfig load_run_config(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_text(path.string()));
    } catch (const json::exception& e) {
        throw UserError("config file '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return run_config_from_json(j, path.parent_path());
}

namespace {

struct Options {
    std::string config;
    std::string data;
    std::string model;
    std::string out;
    std::string truth;
    std::string term;
    std::vector<std::string> scenarios;
    std::vector<double> quantiles;
    std::optional<std::uint64_t> seed;
    std::optional<int> grid;
    std::size_t parameter = 1;
    bool no_orthogonalization = false;
};

void emit(const std::string& text, const std::string& path, std::ostream& out) {
    if (path.empty()) {
        out << text;
    } else {
        write_text_atomic(path, text);
    }
}

Dataset load_for(const ModelSpec& spec, const std::string& path) {
    if (path.empty()) throw UserError("--data is required");
    auto labels = spec.label_features();
    return load_dataset(path, std::set<std::string>(labels.begin(), labels.end()));
}

FittedModel require_model(const Options& o) {
    if (o.model.empty()) throw UserError("--model is required");
    return load_model(o.model);
}

int cmd_fit(const Options& o, std::ostream& out) {
    if (o.config.empty()) throw UserError("--config is required");
    RunConfig rc = load_run_config(o.config);
    if (!o.data.empty()) rc.data = o.data;
    if (!o.model.empty()) rc.model = o.model;
    if (!o.out.empty()) rc.out = o.out;
    if (o.seed) rc.fit.seed = *o.seed;
    if (o.no_orthogonalization) rc.fit.orthogonalize = false;
    if (!rc.data) throw UserError("no data file: set config.data or pass --data");
    if (!rc.out && !rc.model) throw UserError("no output location: set config.out or pass --out");

    const ModelSpec spec = rc.spec();
    const Dataset data = load_for(spec, rc.data->string());
    std::optional<FittedModel> warm;
    if (rc.warm_start) warm = fit(structured_part(spec), data, rc.fit);
    FittedModel model = fit(spec, data, rc.fit, warm ? &*warm : nullptr);

    const fs::path dir = rc.out ? *rc.out : rc.model->parent_path();
    if (!dir.empty()) fs::create_directories(dir);
    const fs::path model_path = rc.model ? *rc.model : dir / "model.json";
    save_model(model, model_path.string());
    write_text_atomic((dir / "diagnostics.json").string(), diagnostics_to_json(model.diagnostics).dump(1) + "\n");

    const auto& d = model.diagnostics;
    out << "epochs " << d.epochs_run << ", final loss " << format_double(d.final_loss) << ", training nll "
        << format_double(d.final_nll) << ", orthogonality residual " << format_double(d.orthogonality_residual) << "\n";
    out << "model written to " << model_path.string() << "\n";
    return 0;
}

std::vector<double> checked_quantiles(std::vector<double> q) {
    for (double p : q) {
        if (!(p > 0.0 && p < 1.0)) throw UserError("quantile levels must lie in (0, 1), got " + format_double(p));
    }
    std::sort(q.begin(), q.end());
    q.erase(std::unique(q.begin(), q.end()), q.end());
    return q;
}

int cmd_predict(const Options& o, std::ostream& out) {
    const FittedModel model = require_model(o);
    const std::vector<double> levels = checked_quantiles(o.quantiles);
    const Dataset data = load_for(model.spec, o.data);
    const Prediction pred = predict(model, data);
    const Family& family = model.family();

    std::ostringstream csv;
    for (std::size_t k = 0; k < family.arity(); ++k) csv << (k ? "," : "") << family.parameter_name(k);
    for (double p : levels) csv << ",q" << format_double(p);
    csv << "\n";
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(data.rows()); ++i) {
        std::vector<double> theta = row_parameters(pred, i);
        for (std::size_t k = 0; k < theta.size(); ++k) csv << (k ? "," : "") << format_double(theta[k]);
        for (double p : levels) csv << "," << format_double(quantile(family, p, theta));
        csv << "\n";
    }
    emit(csv.str(), o.out, out);
    return 0;
}

int cmd_partials(const Options& o, std::ostream& out) {
    const FittedModel model = require_model(o);
    if (o.term.empty()) throw UserError("--term is required");
    if (o.parameter < 1 || o.parameter > model.parameters.size()) {
        throw UserError("--parameter must lie in 1.." + std::to_string(model.parameters.size()));
    }
    const std::size_t k = o.parameter - 1;
    const FittedBlock& block = find_block(model, k, o.term);
    const TermKind kind = block.recipe.term.kind;
    if (kind != TermKind::Linear && kind != TermKind::Smooth) {
        throw UserError("partial effects are available for linear and smooth terms, not " + o.term);
    }
    const std::string feature = block.recipe.term.features[0];
    if (o.grid && *o.grid < 2) throw UserError("--grid must be at least 2");

    Eigen::VectorXd grid;
    if (!o.data.empty() && !o.grid) {
        // Every observed value, so the effect averages to zero over the fitting rows.
        grid = load_for(model.spec, o.data).numeric(feature);
        std::sort(grid.begin(), grid.end());
    } else {
        double lo = 0.0, hi = 1.0;
        if (!o.data.empty()) {
            const Eigen::VectorXd v = load_for(model.spec, o.data).numeric(feature);
            lo = v.minCoeff();
            hi = v.maxCoeff();
        } else if (kind == TermKind::Smooth) {
            lo = block.recipe.margins[0].lower();
            hi = block.recipe.margins[0].upper();
        }
        const int m = o.grid ? *o.grid : (kind == TermKind::Linear ? 2 : 200);
        grid = Eigen::VectorXd::LinSpaced(m, lo, hi);
    }
    const EffectCurve curve = partial_effect(model, k, o.term, grid);

    std::ostringstream csv;
    csv << feature << ",effect,exp_effect\n";
    for (Eigen::Index i = 0; i < curve.grid.size(); ++i) {
        csv << format_double(curve.grid[i]) << "," << format_double(curve.effect[i]) << ","
            << format_double(std::exp(curve.effect[i])) << "\n";
    }
    emit(csv.str(), o.out, out);
    return 0;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
    const FittedModel model = require_model(o);
    const Dataset data = load_for(model.spec, o.data);
    const Eigen::VectorXd& y = data.numeric(model.spec.response);
    check_support(model.family(), y);
    const Prediction pred = predict(model, data);

    json report = {{"rows", data.rows()},
                   {"log_score", log_score(model.family(), y, pred.eta)},
                   {"unseen_groups", pred.unseen_groups},
                   {"clamped", pred.clamped}};
    if (!o.truth.empty()) {
        json t;
        try {
            t = json::parse(read_text(o.truth));
        } catch (const json::exception& e) {
            throw UserError("truth file '" + o.truth + "' is not valid JSON: " + e.what());
        }
        const EffectErrors errors = effect_rmse(model, truth_from_json(t));
        if (errors.linear_rmse) report["linear_rmse"] = *errors.linear_rmse;
        if (errors.smooth_rmse) report["smooth_rmse"] = *errors.smooth_rmse;
        if (errors.group_rmse) report["group_rmse"] = *errors.group_rmse;
    }
    emit(report.dump(1) + "\n", o.out, out);
    return 0;
}

int cmd_simulate(const Options& o, std::ostream& out) {
    if (o.scenarios.size() != 1) throw UserError("simulate takes exactly one --scenario");
    if (o.out.empty()) throw UserError("--out is required");
    const Scenario scenario = load_scenario(o.scenarios[0]);
    const Simulation sim = generate(scenario, o.seed.value_or(scenario.seed));
    const fs::path dir = o.out;
    fs::create_directories(dir);
    const fs::path data_path = dir / "data.csv";
    write_csv(sim.data, data_path.string());
    write_text_atomic((dir / "truth.json").string(), truth_to_json(sim.truth).dump(1) + "\n");
    out << sim.data.rows() << " rows written to " << data_path.string() << "\n";
    return 0;
}

int cmd_experiment(const Options& o, std::ostream& out) {
    std::vector<Scenario> scenarios;
    for (const auto& name : o.scenarios.empty() ? shipped_scenarios() : o.scenarios) {
        Scenario s = load_scenario(name);
        if (o.seed) s.seed = *o.seed;
        if (o.no_orthogonalization) s.fit.orthogonalize = false;
        scenarios.push_back(std::move(s));
    }
    if (scenarios.empty()) throw UserError("no scenarios to run");
    const auto reports = run_experiment(scenarios, thread_budget());
    const std::string csv = report_csv(reports);
    if (!o.out.empty()) {
        fs::create_directories(o.out);
        write_text_atomic((fs::path(o.out) / "report.csv").string(), csv);
        write_text_atomic((fs::path(o.out) / "report.json").string(), report_json(reports).dump(1) + "\n");
    }
    out << csv;
    return 0;
}

int cmd_families(std::ostream& out) {
    auto link_name = [](Link l) {
        switch (l) {
            case Link::Identity: return "identity";
            case Link::Exp: return "exp";
            case Link::Sigmoid: return "sigmoid";
        }
        return "?";
    };
    for (const auto& name : family_names()) {
        const Family& f = family_by_name(name);
        out << name << ":";
        for (std::size_t k = 0; k < f.arity(); ++k) {
            out << (k ? ", " : " ") << f.parameter_name(k) << " (" << link_name(f.link(k)) << ")";
        }
        out << "\n";
    }
    return 0;
}

void report_error(std::ostream& err, const char* kind, const std::string& message) {
    err << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Semi-structured deep distributional regression", "sddr"};
    app.require_subcommand(1);
    Options o;

    auto seed_opt = [&](CLI::App* cmd, const std::string& what) {
        cmd->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) { o.seed = s; }, what);
    };

    CLI::App* fit_cmd = app.add_subcommand("fit", "Fit a model from a JSON config");
    fit_cmd->add_option("--config", o.config, "Config file")->required();
    fit_cmd->add_option("--data", o.data, "Training CSV (overrides config.data)");
    fit_cmd->add_option("--model", o.model, "Model file to write (default <out>/model.json)");
    fit_cmd->add_option("--out", o.out, "Output directory for model.json and diagnostics.json");
    seed_opt(fit_cmd, "Optimizer seed (overrides config)");
    fit_cmd->add_flag("--no-orthogonalization", o.no_orthogonalization, "Let deep trunks enter unprojected");

    CLI::App* predict_cmd = app.add_subcommand("predict", "Predict distribution parameters and quantiles");
    predict_cmd->add_option("--model", o.model, "Model file")->required();
    predict_cmd->add_option("--data", o.data, "Input CSV")->required();
    predict_cmd->add_option("--quantiles", o.quantiles, "Quantile levels, comma separated")->delimiter(',');
    predict_cmd->add_option("--out", o.out, "Output CSV (default stdout)");

    CLI::App* partials_cmd = app.add_subcommand("partials", "Partial effect curve of a linear or smooth term");
    partials_cmd->add_option("--model", o.model, "Model file")->required();
    partials_cmd->add_option("--term", o.term, "Term label, e.g. x1 or s(x1)")->required();
    partials_cmd->add_option("--parameter", o.parameter, "Distribution parameter, 1-based")->capture_default_str();
    partials_cmd->add_option_function<int>("--grid", [&](const int& g) { o.grid = g; },
                                           "Equidistant grid points (default 2 for linear, 200 for smooth)");
    partials_cmd->add_option("--data", o.data, "Evaluate at every value of the feature in this CSV");
    partials_cmd->add_option("--out", o.out, "Output CSV (default stdout)");

    CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "Log-score and, with a truth file, effect errors");
    evaluate_cmd->add_option("--model", o.model, "Model file")->required();
    evaluate_cmd->add_option("--data", o.data, "CSV with the response column")->required();
    evaluate_cmd->add_option("--truth", o.truth, "truth.json written by simulate");
    evaluate_cmd->add_option("--out", o.out, "Output JSON (default stdout)");

    CLI::App* simulate_cmd = app.add_subcommand("simulate", "Draw a dataset from a scenario");
    simulate_cmd->add_option("--scenario", o.scenarios, "Shipped scenario name or file")->required();
    simulate_cmd->add_option("--out", o.out, "Output directory for data.csv and truth.json")->required();
    seed_opt(simulate_cmd, "Generator seed (default: the scenario's)");

    CLI::App* experiment_cmd = app.add_subcommand("experiment", "Run scenario replications and summarize");
    experiment_cmd->add_option("--scenario", o.scenarios, "Scenario name or file; repeatable (default: all shipped)");
    experiment_cmd->add_option("--out", o.out, "Directory for report.csv and report.json");
    seed_opt(experiment_cmd, "Base seed replacing each scenario's");
    experiment_cmd->add_flag("--no-orthogonalization", o.no_orthogonalization, "Disable the projection");

    CLI::App* families_cmd = app.add_subcommand("families", "List distribution families");

    std::vector<std::string> argv_store;
    argv_store.reserve(args.size() + 1);
    argv_store.emplace_back("sddr");
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        report_error(err, "usage", e.what());
        return 1;
    }

    try {
        if (fit_cmd->parsed()) return cmd_fit(o, out);
        if (predict_cmd->parsed()) return cmd_predict(o, out);
        if (partials_cmd->parsed()) return cmd_partials(o, out);
        if (evaluate_cmd->parsed()) return cmd_evaluate(o, out);
        if (simulate_cmd->parsed()) return cmd_simulate(o, out);
        if (experiment_cmd->parsed()) return cmd_experiment(o, out);
        if (families_cmd->parsed()) return cmd_families(out);
        throw InvariantError("no subcommand dispatched");
    } catch (const UserError& e) {
        report_error(err, "user", e.what());
        return 1;
    } catch (const NumericalError& e) {
        report_error(err, "numerical", e.what());
        return 2;
    } catch (const fs::filesystem_error& e) {
        report_error(err, "user", e.what());
        return 1;
    } catch (const std::exception& e) {
        report_error(err, "internal", e.what());
        return 3;
    }
}

}  // namespace sddr
