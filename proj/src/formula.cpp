#include "sddr/formula.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>

#include "sddr/distributions.hpp"
#include "sddr/error.hpp"

namespace sddr {

namespace {

std::string format_number(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

bool is_ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool is_ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
}

class Parser {
public:
    explicit Parser(std::string_view text) : text_(text) {}

    Formula parse() {
        Formula f;
        skip_ws();
        f.response = identifier("response name");
        skip_ws();
        expect('~');
        std::vector<std::size_t> offsets;
        do {
            skip_ws();
            offsets.push_back(pos_);
            f.terms.push_back(term());
            skip_ws();
        } while (accept('+'));
        if (pos_ != text_.size()) {
            fail("unexpected character '" + std::string(1, text_[pos_]) + "'");
        }
        for (std::size_t i = 0; i < f.terms.size(); ++i) {
            for (std::size_t j = 0; j < i; ++j) {
                if (f.terms[i] == f.terms[j]) {
                    throw ParseError("duplicate term " + f.terms[i].label(), offsets[i]);
                }
            }
        }
        return f;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_); }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) {
            if (pos_ >= text_.size()) fail(std::string("expected '") + c + "' but reached end of input");
            fail(std::string("expected '") + c + "'");
        }
    }

    bool peek(char c) {
        skip_ws();
        return pos_ < text_.size() && text_[pos_] == c;
    }

    std::string identifier(const char* what) {
        skip_ws();
        if (pos_ >= text_.size() || !is_ident_start(text_[pos_])) {
            fail(std::string("expected ") + what);
        }
        std::size_t start = pos_;
        while (pos_ < text_.size() && is_ident_char(text_[pos_])) ++pos_;
        return std::string(text_.substr(start, pos_ - start));
    }

    double number() {
        skip_ws();
        std::size_t start = pos_;
        double v = 0.0;
        auto res = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), v);
        if (res.ec != std::errc{}) fail("expected a number");
        pos_ = static_cast<std::size_t>(res.ptr - text_.data());
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw ParseError("df must be a positive finite number", start);
        }
        return v;
    }

    // Parses ", df=R" if present.
    std::optional<double> optional_df() {
        if (!accept(',')) return std::nullopt;
        std::string key = identifier("'df'");
        if (key != "df") {
            pos_ -= key.size();
            fail("unknown argument '" + key + "'");
        }
        expect('=');
        return number();
    }

    TermExpr term() {
        std::size_t start = pos_;
        if (pos_ < text_.size() && text_[pos_] == '1' &&
            (pos_ + 1 == text_.size() || !is_ident_char(text_[pos_ + 1]))) {
            ++pos_;
            return TermExpr::intercept();
        }
        std::string name = identifier("a term");
        if (!peek('(')) return TermExpr::linear(std::move(name));
        expect('(');
        if (peek(')')) {
            throw ParseError("empty argument list in " + name + "()", start);
        }
        TermExpr t;
        if (name == "s") {
            std::string f = identifier("feature name");
            t = TermExpr::smooth(std::move(f), optional_df());
        } else if (name == "te") {
            std::string a = identifier("feature name");
            expect(',');
            std::string b = identifier("second feature name");
            t = TermExpr::tensor(std::move(a), std::move(b), optional_df());
        } else if (name == "re") {
            std::string g = identifier("grouping feature name");
            t = TermExpr::random_effect(std::move(g), optional_df());
        } else if (name == "d") {
            std::string trunk = identifier("trunk name");
            expect(':');
            if (peek(')')) throw ParseError("empty argument list in d()", start);
            std::vector<std::string> feats;
            do {
                feats.push_back(identifier("feature name"));
            } while (accept(','));
            t = TermExpr::deep(std::move(trunk), std::move(feats));
        } else {
            throw ParseError("unknown term function '" + name + "'", start);
        }
        expect(')');
        return t;
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

std::string join(const std::vector<std::string>& parts, const char* sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

}  // namespace

TermExpr TermExpr::intercept() { return TermExpr{}; }

TermExpr TermExpr::linear(std::string feature) {
    return TermExpr{TermKind::Linear, {std::move(feature)}, {}, std::nullopt};
}

TermExpr TermExpr::smooth(std::string feature, std::optional<double> df) {
    return TermExpr{TermKind::Smooth, {std::move(feature)}, {}, df};
}

TermExpr TermExpr::tensor(std::string a, std::string b, std::optional<double> df) {
    return TermExpr{TermKind::TensorSmooth, {std::move(a), std::move(b)}, {}, df};
}

TermExpr TermExpr::random_effect(std::string group, std::optional<double> df) {
    return TermExpr{TermKind::RandomEffect, {std::move(group)}, {}, df};
}

TermExpr TermExpr::deep(std::string trunk, std::vector<std::string> features) {
    return TermExpr{TermKind::Deep, std::move(features), std::move(trunk), std::nullopt};
}

std::string TermExpr::label() const {
    auto with_df = [this](std::string head) {
        if (df) head += ", df=" + format_number(*df);
        return head + ")";
    };
    switch (kind) {
        case TermKind::Intercept: return "1";
        case TermKind::Linear: return features.at(0);
        case TermKind::Smooth: return with_df("s(" + features.at(0));
        case TermKind::TensorSmooth: return with_df("te(" + features.at(0) + ", " + features.at(1));
        case TermKind::RandomEffect: return with_df("re(" + features.at(0));
        case TermKind::Deep: return "d(" + trunk + ": " + join(features, ", ") + ")";
    }
    throw InvariantError("unknown term kind");
}

Formula parse_formula(std::string_view text) { return Parser(text).parse(); }

std::string render_formula(const Formula& formula) {
    std::vector<std::string> labels;
    for (const auto& t : formula.terms) labels.push_back(t.label());
    return formula.response + " ~ " + join(labels, " + ");
}

std::string_view activation_name(Activation a) {
    return a == Activation::Relu ? "relu" : "tanh";
}

Activation parse_activation(std::string_view name) {
    if (name == "relu") return Activation::Relu;
    if (name == "tanh") return Activation::Tanh;
    throw UserError("unknown activation '" + std::string(name) + "' (expected relu or tanh)");
}

std::string ModelSpec::formula_text(std::size_t k) const {
    return render_formula(Formula{response, parameter_formulas.at(k)});
}

std::vector<std::string> ModelSpec::referenced_features() const {
    std::set<std::string> names;
    for (const auto& terms : parameter_formulas)
        for (const auto& t : terms) names.insert(t.features.begin(), t.features.end());
    return {names.begin(), names.end()};
}

std::vector<std::string> ModelSpec::label_features() const {
    std::set<std::string> names;
    for (const auto& terms : parameter_formulas)
        for (const auto& t : terms)
            if (t.kind == TermKind::RandomEffect) names.insert(t.features[0]);
    return {names.begin(), names.end()};
}

ModelSpec build_spec(const std::vector<std::string>& formulas, const std::string& family,
                     const std::map<std::string, TrunkSpec>& trunks) {
    const Family& fam = family_by_name(family);
    if (formulas.size() != fam.arity()) {
        throw UserError("family '" + family + "' has " + std::to_string(fam.arity()) +
                        " parameter(s) but " + std::to_string(formulas.size()) +
                        " formula(s) were given");
    }
    ModelSpec spec;
    spec.family = family;
    for (std::size_t k = 0; k < formulas.size(); ++k) {
        Formula f = parse_formula(formulas[k]);
        if (k == 0) {
            spec.response = f.response;
        } else if (f.response != spec.response) {
            throw UserError("inconsistent response names: '" + spec.response + "' and '" +
                            f.response + "'");
        }
        for (const auto& t : f.terms) {
            if (t.kind != TermKind::Deep) continue;
            auto it = trunks.find(t.trunk);
            if (it == trunks.end()) {
                throw UserError("term " + t.label() + " references undeclared trunk '" + t.trunk + "'");
            }
            spec.trunks[t.trunk] = it->second;
        }
        spec.parameter_formulas.push_back(std::move(f.terms));
    }
    for (const auto& [name, trunk] : spec.trunks) {
        if (trunk.widths.empty()) throw UserError("trunk '" + name + "' declares no layers");
        for (int w : trunk.widths)
            if (w < 1) throw UserError("trunk '" + name + "' has a layer width < 1");
    }
    return spec;
}

}  // namespace sddr
