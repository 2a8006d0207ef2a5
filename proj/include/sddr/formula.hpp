#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sddr {

enum class TermKind { Intercept, Linear, Smooth, TensorSmooth, RandomEffect, Deep };

/// One additive term of a predictor formula.
///
/// `features` holds one name for Linear/Smooth/RandomEffect, two for TensorSmooth,
/// and the trunk inputs (at least one) for Deep. `df` is unset unless the formula
/// gave `df=`; unset smooth df is resolved later by the smoothing calibration.
struct TermExpr {
    TermKind kind = TermKind::Intercept;
    std::vector<std::string> features;
    std::string trunk;
    std::optional<double> df;

    bool operator==(const TermExpr&) const = default;

    bool is_structured() const noexcept { return kind != TermKind::Deep; }
    bool is_penalized() const noexcept {
        return kind == TermKind::Smooth || kind == TermKind::TensorSmooth ||
               kind == TermKind::RandomEffect;
    }

    /// Canonical text, e.g. `s(z1, df=4)`; parses back to an equal term.
    std::string label() const;

    static TermExpr intercept();
    static TermExpr linear(std::string feature);
    static TermExpr smooth(std::string feature, std::optional<double> df = std::nullopt);
    static TermExpr tensor(std::string a, std::string b, std::optional<double> df = std::nullopt);
    static TermExpr random_effect(std::string group, std::optional<double> df = std::nullopt);
    static TermExpr deep(std::string trunk, std::vector<std::string> features);
};

struct Formula {
    std::string response;
    std::vector<TermExpr> terms;

    bool operator==(const Formula&) const = default;
};

/// Parses `response ~ term (+ term)*`. Throws ParseError carrying the byte offset.
Formula parse_formula(std::string_view text);

std::string render_formula(const Formula& formula);

enum class Activation { Relu, Tanh };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

/// Hidden layer widths of a fully connected trunk; the last width is the latent
/// dimension s fed to the orthogonalization cell and the linear head.
struct TrunkSpec {
    std::vector<int> widths;
    Activation activation = Activation::Relu;

    bool operator==(const TrunkSpec&) const = default;
};

struct ModelSpec {
    std::string response;
    std::string family;
    std::vector<std::vector<TermExpr>> parameter_formulas;
    std::map<std::string, TrunkSpec> trunks;

    bool operator==(const ModelSpec&) const = default;

    std::size_t num_parameters() const noexcept { return parameter_formulas.size(); }

    /// Formula text of parameter k.
    std::string formula_text(std::size_t k) const;

    /// Every data column referenced by any term, sorted and unique.
    std::vector<std::string> referenced_features() const;

    /// Columns used as random-effect grouping labels (read as strings).
    std::vector<std::string> label_features() const;
};

/// Validates formulas against the family's arity and resolves deep terms against
/// the declared trunks.
ModelSpec build_spec(const std::vector<std::string>& formulas, const std::string& family,
                     const std::map<std::string, TrunkSpec>& trunks);

}  // namespace sddr
