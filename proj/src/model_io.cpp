#include "sddr/model_io.hpp"

#include <set>

#include "sddr/error.hpp"

namespace sddr {

using nlohmann::json;

namespace {

double get_number(const json& j, const std::string& key, const std::string& where) {
    const json& v = j.at(key);
    if (!v.is_number()) throw UserError(where + "." + key + " must be a number");
    return v.get<double>();
}

long long get_integer(const json& j, const std::string& key, const std::string& where) {
    const json& v = j.at(key);
    if (!v.is_number_integer()) throw UserError(where + "." + key + " must be an integer");
    return v.get<long long>();
}

bool get_bool(const json& j, const std::string& key, const std::string& where) {
    const json& v = j.at(key);
    if (!v.is_boolean()) throw UserError(where + "." + key + " must be true or false");
    return v.get<bool>();
}

json vector_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (double x : v) out.push_back(x);
    return out;
}

Eigen::VectorXd vector_from(const json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    return v;
}

json matrix_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
        rows.push_back(std::move(row));
    }
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

Eigen::MatrixXd matrix_from(const json& j) {
    const auto r = j.at("rows").get<Eigen::Index>();
    const auto c = j.at("cols").get<Eigen::Index>();
    Eigen::MatrixXd m(r, c);
    const json& data = j.at("data");
    if (static_cast<Eigen::Index>(data.size()) != r) throw UserError("matrix row count mismatch in model file");
    for (Eigen::Index i = 0; i < r; ++i) {
        const json& row = data[static_cast<std::size_t>(i)];
        if (static_cast<Eigen::Index>(row.size()) != c) throw UserError("matrix column count mismatch in model file");
        for (Eigen::Index k = 0; k < c; ++k) m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
    }
    return m;
}

TermExpr term_from_label(const std::string& label) {
    Formula f = parse_formula("response ~ " + label);
    if (f.terms.size() != 1) throw UserError("model file holds a malformed term '" + label + "'");
    return f.terms[0];
}

json block_json(const FittedBlock& b) {
    json j;
    j["term"] = b.recipe.term.label();
    j["columns"] = b.column_names;
    j["weights"] = vector_json(b.weights);
    j["penalty"] = matrix_json(b.penalty);
    j["lambda"] = b.lambda;
    j["df_target"] = b.df_target ? json(*b.df_target) : json(nullptr);
    json margins = json::array();
    for (const auto& m : b.recipe.margins) margins.push_back({{"degree", m.degree}, {"knots", vector_json(m.knots)}});
    j["margins"] = std::move(margins);
    j["transform"] = b.recipe.transform ? matrix_json(*b.recipe.transform) : json(nullptr);
    j["groups"] = b.recipe.groups;
    return j;
}

FittedBlock block_from(const json& j) {
    FittedBlock b;
    b.recipe.term = term_from_label(j.at("term").get<std::string>());
    b.column_names = j.at("columns").get<std::vector<std::string>>();
    b.weights = vector_from(j.at("weights"));
    b.penalty = matrix_from(j.at("penalty"));
    b.lambda = j.at("lambda").get<double>();
    if (!j.at("df_target").is_null()) b.df_target = j.at("df_target").get<double>();
    for (const auto& m : j.at("margins")) {
        BSplineBasis basis;
        basis.degree = m.at("degree").get<int>();
        basis.knots = vector_from(m.at("knots"));
        b.recipe.margins.push_back(std::move(basis));
    }
    if (!j.at("transform").is_null()) b.recipe.transform = matrix_from(j.at("transform"));
    b.recipe.groups = j.at("groups").get<std::vector<std::string>>();
    return b;
}

json trunk_json(const FittedTrunk& t) {
    json j;
    j["term"] = t.term.label();
    j["inputs"] = t.shape.inputs;
    j["widths"] = t.shape.widths;
    j["activation"] = std::string(activation_name(t.shape.activation));
    j["input_mean"] = vector_json(t.input_mean);
    j["input_scale"] = vector_json(t.input_scale);
    j["params"] = vector_json(t.params);
    j["head"] = vector_json(t.head);
    if (t.ortho) {
        j["ortho"] = {{"blocks", t.ortho->blocks}, {"coefficients", matrix_json(t.ortho->coefficients)}};
    } else {
        j["ortho"] = nullptr;
    }
    return j;
}

FittedTrunk trunk_from(const json& j) {
    FittedTrunk t;
    t.term = term_from_label(j.at("term").get<std::string>());
    t.shape.inputs = j.at("inputs").get<int>();
    t.shape.widths = j.at("widths").get<std::vector<int>>();
    t.shape.activation = parse_activation(j.at("activation").get<std::string>());
    t.input_mean = vector_from(j.at("input_mean"));
    t.input_scale = vector_from(j.at("input_scale"));
    t.params = vector_from(j.at("params"));
    t.head = vector_from(j.at("head"));
    if (t.params.size() != static_cast<Eigen::Index>(t.shape.num_params()) ||
        t.head.size() != t.shape.outputs()) {
        throw UserError("trunk " + t.term.label() + " in model file has inconsistent sizes");
    }
    if (!j.at("ortho").is_null()) {
        OrthoMap map;
        map.blocks = j.at("ortho").at("blocks").get<std::vector<std::size_t>>();
        map.coefficients = matrix_from(j.at("ortho").at("coefficients"));
        t.ortho = std::move(map);
    }
    return t;
}

}  // namespace

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw UserError(where + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key)) throw UserError("unknown key '" + key + "' in " + where);
    }
}

json config_to_json(const FitConfig& c) {
    json optimizer = {{"learning_rate", c.learning_rate},
                      {"epochs", c.epochs},
                      {"batch_size", c.batch_size ? json(*c.batch_size) : json(nullptr)},
                      {"seed", c.seed},
                      {"early_stopping", c.early_stopping},
                      {"validation_fraction", c.validation_fraction},
                      {"patience", c.patience}};
    json smoothing = {{"default_df", c.default_df ? json(*c.default_df) : json(nullptr)},
                      {"n_knots", c.design.n_knots},
                      {"degree", c.design.degree},
                      {"penalty_order", c.design.penalty_order},
                      {"tensor_n_knots", c.design.tensor_n_knots}};
    return {{"optimizer", optimizer}, {"smoothing", smoothing}, {"orthogonalize", c.orthogonalize}};
}

FitConfig config_from_json(const json& j) {
    FitConfig c;
    reject_unknown_keys(j, {"optimizer", "smoothing", "orthogonalize"}, "config");
    if (j.contains("orthogonalize")) c.orthogonalize = get_bool(j, "orthogonalize", "config");
    if (j.contains("optimizer")) {
        const json& o = j.at("optimizer");
        const std::string where = "optimizer";
        reject_unknown_keys(o, {"learning_rate", "epochs", "batch_size", "seed", "early_stopping", "validation_fraction",
                           "patience"},
                       where);
        if (o.contains("learning_rate")) c.learning_rate = get_number(o, "learning_rate", where);
        if (o.contains("epochs")) c.epochs = static_cast<int>(get_integer(o, "epochs", where));
        if (o.contains("batch_size") && !o.at("batch_size").is_null()) {
            c.batch_size = static_cast<int>(get_integer(o, "batch_size", where));
        }
        if (o.contains("seed")) {
            long long s = get_integer(o, "seed", where);
            if (s < 0) throw UserError("optimizer.seed must be non-negative");
            c.seed = static_cast<std::uint64_t>(s);
        }
        if (o.contains("early_stopping")) c.early_stopping = get_bool(o, "early_stopping", where);
        if (o.contains("validation_fraction")) c.validation_fraction = get_number(o, "validation_fraction", where);
        if (o.contains("patience")) c.patience = static_cast<int>(get_integer(o, "patience", where));
    }
    if (j.contains("smoothing")) {
        const json& s = j.at("smoothing");
        const std::string where = "smoothing";
        reject_unknown_keys(s, {"default_df", "n_knots", "degree", "penalty_order", "tensor_n_knots"}, where);
        if (s.contains("default_df") && !s.at("default_df").is_null()) {
            c.default_df = get_number(s, "default_df", where);
        }
        if (s.contains("n_knots")) c.design.n_knots = static_cast<int>(get_integer(s, "n_knots", where));
        if (s.contains("degree")) c.design.degree = static_cast<int>(get_integer(s, "degree", where));
        if (s.contains("penalty_order")) c.design.penalty_order = static_cast<int>(get_integer(s, "penalty_order", where));
        if (s.contains("tensor_n_knots")) {
            c.design.tensor_n_knots = static_cast<int>(get_integer(s, "tensor_n_knots", where));
        }
    }
    if (!(c.learning_rate > 0.0)) throw UserError("optimizer.learning_rate must be positive");
    if (c.epochs < 0) throw UserError("optimizer.epochs must be non-negative");
    if (c.batch_size && *c.batch_size < 1) throw UserError("optimizer.batch_size must be positive");
    if (c.patience < 1) throw UserError("optimizer.patience must be positive");
    if (!(c.validation_fraction > 0.0 && c.validation_fraction < 1.0)) {
        throw UserError("optimizer.validation_fraction must lie in (0, 1)");
    }
    if (c.default_df && !(*c.default_df > 0.0)) throw UserError("smoothing.default_df must be positive");
    return c;
}

json spec_to_json(const ModelSpec& spec) {
    json formulas = json::array();
    for (std::size_t k = 0; k < spec.num_parameters(); ++k) formulas.push_back(spec.formula_text(k));
    json trunks = json::object();
    for (const auto& [name, t] : spec.trunks) {
        trunks[name] = {{"widths", t.widths}, {"activation", std::string(activation_name(t.activation))}};
    }
    return {{"family", spec.family}, {"formulas", formulas}, {"trunks", trunks}};
}

ModelSpec spec_from_json(const json& j) {
    std::map<std::string, TrunkSpec> trunks;
    for (const auto& [name, t] : j.at("trunks").items()) {
        TrunkSpec ts;
        ts.widths = t.at("widths").get<std::vector<int>>();
        ts.activation = parse_activation(t.at("activation").get<std::string>());
        trunks[name] = std::move(ts);
    }
    return build_spec(j.at("formulas").get<std::vector<std::string>>(), j.at("family").get<std::string>(), trunks);
}

json diagnostics_to_json(const TrainingDiagnostics& d) {
    json smoothing = json::array();
    for (const auto& s : d.smoothing) {
        smoothing.push_back({{"parameter", s.parameter},
                             {"term", s.term},
                             {"lambda", s.lambda},
                             {"df_target", s.df_target},
                             {"df_achieved", s.df_achieved},
                             {"df_max", s.df_max}});
    }
    return {{"loss_trace", d.loss_trace},
            {"validation_trace", d.validation_trace},
            {"epochs_run", d.epochs_run},
            {"best_epoch", d.best_epoch ? json(*d.best_epoch) : json(nullptr)},
            {"rejected_steps", d.rejected_steps},
            {"final_loss", d.final_loss},
            {"final_nll", d.final_nll},
            {"clamped", d.clamped},
            {"approximate_projection", d.approximate_projection},
            {"orthogonality_residual", d.orthogonality_residual},
            {"training_rows", d.training_rows},
            {"validation_rows", d.validation_rows},
            {"smoothing", smoothing}};
}

namespace {

TrainingDiagnostics diagnostics_from(const json& j) {
    TrainingDiagnostics d;
    d.loss_trace = j.at("loss_trace").get<std::vector<double>>();
    d.validation_trace = j.at("validation_trace").get<std::vector<double>>();
    d.epochs_run = j.at("epochs_run").get<int>();
    if (!j.at("best_epoch").is_null()) d.best_epoch = j.at("best_epoch").get<int>();
    d.rejected_steps = j.at("rejected_steps").get<int>();
    d.final_loss = j.at("final_loss").get<double>();
    d.final_nll = j.at("final_nll").get<double>();
    d.clamped = j.at("clamped").get<std::size_t>();
    d.approximate_projection = j.at("approximate_projection").get<bool>();
    d.orthogonality_residual = j.at("orthogonality_residual").get<double>();
    d.training_rows = j.at("training_rows").get<std::size_t>();
    d.validation_rows = j.at("validation_rows").get<std::size_t>();
    for (const auto& s : j.at("smoothing")) {
        d.smoothing.push_back({s.at("parameter").get<std::size_t>(), s.at("term").get<std::string>(),
                               s.at("lambda").get<double>(), s.at("df_target").get<double>(),
                               s.at("df_achieved").get<double>(), s.at("df_max").get<int>()});
    }
    return d;
}

}  // namespace

json model_to_json(const FittedModel& model) {
    json params = json::array();
    const Family& family = model.family();
    for (std::size_t k = 0; k < model.parameters.size(); ++k) {
        json blocks = json::array(), trunks = json::array();
        for (const auto& b : model.parameters[k].blocks) blocks.push_back(block_json(b));
        for (const auto& t : model.parameters[k].trunks) trunks.push_back(trunk_json(t));
        params.push_back({{"name", std::string(family.parameter_name(k))}, {"blocks", blocks}, {"trunks", trunks}});
    }
    return {{"format", "sddr-model"},
            {"version", kModelSchemaVersion},
            {"spec", spec_to_json(model.spec)},
            {"config", config_to_json(model.config)},
            {"parameters", params},
            {"diagnostics", diagnostics_to_json(model.diagnostics)}};
}

FittedModel model_from_json(const json& j) {
    try {
        if (j.at("format").get<std::string>() != "sddr-model") throw UserError("not a model file");
        int version = j.at("version").get<int>();
        if (version != kModelSchemaVersion) {
            throw UserError("unsupported model schema version " + std::to_string(version));
        }
        FittedModel m;
        m.spec = spec_from_json(j.at("spec"));
        m.config = config_from_json(j.at("config"));
        for (const auto& p : j.at("parameters")) {
            FittedParameter fp;
            for (const auto& b : p.at("blocks")) fp.blocks.push_back(block_from(b));
            for (const auto& t : p.at("trunks")) fp.trunks.push_back(trunk_from(t));
            m.parameters.push_back(std::move(fp));
        }
        if (m.parameters.size() != m.family().arity()) throw UserError("model file parameter count mismatch");
        m.diagnostics = diagnostics_from(j.at("diagnostics"));
        return m;
    } catch (const json::exception& e) {
        throw UserError(std::string("malformed model file: ") + e.what());
    }
}

std::string serialize_model(const FittedModel& model) { return model_to_json(model).dump(1) + "\n"; }

FittedModel deserialize_model(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw UserError(std::string("model file is not valid JSON: ") + e.what());
    }
    return model_from_json(j);
}

void save_model(const FittedModel& model, const std::string& path) {
    write_text_atomic(path, serialize_model(model));
}

FittedModel load_model(const std::string& path) { return deserialize_model(read_text(path)); }

}  // namespace sddr
