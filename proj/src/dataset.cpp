#include "sddr/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sddr/error.hpp"

namespace sddr {

namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    std::string out(s.substr(b, e - b + 1));
    if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
    return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        auto comma = line.find(',', start);
        cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return cells;
}

bool is_missing(const std::string& cell) {
    static const char* tokens[] = {"", "NA", "N/A", "NaN", "nan", "NAN", "null", "NULL", "None"};
    return std::any_of(std::begin(tokens), std::end(tokens), [&](const char* t) { return cell == t; });
}

std::optional<double> parse_number(const std::string& cell) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = first + cell.size();
    if (first != last && *first == '+') ++first;
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last || !std::isfinite(v)) return std::nullopt;
    return v;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void Dataset::check_length(std::size_t n, const std::string& name) {
    if (has(name)) throw UserError("duplicate column '" + name + "'");
    if (!names_.empty() && n != rows_) {
        throw UserError("column '" + name + "' has " + std::to_string(n) + " rows, expected " +
                        std::to_string(rows_));
    }
    rows_ = n;
}

void Dataset::add_numeric(std::string name, Eigen::VectorXd values) {
    check_length(static_cast<std::size_t>(values.size()), name);
    if (!values.allFinite()) throw UserError("column '" + name + "' contains non-finite values");
    names_.push_back(std::move(name));
    columns_.push_back(Column{std::move(values), std::nullopt});
}

void Dataset::add_labels(std::string name, std::vector<std::string> labels) {
    check_length(labels.size(), name);
    Column col;
    Eigen::VectorXd values(static_cast<Eigen::Index>(labels.size()));
    bool numeric = true;
    for (std::size_t i = 0; i < labels.size() && numeric; ++i) {
        auto v = parse_number(labels[i]);
        if (v) {
            values[static_cast<Eigen::Index>(i)] = *v;
        } else {
            numeric = false;
        }
    }
    if (numeric) col.values = std::move(values);
    col.labels = std::move(labels);
    names_.push_back(std::move(name));
    columns_.push_back(std::move(col));
}

bool Dataset::has(const std::string& name) const {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::size_t Dataset::index_of(const std::string& name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw UserError("feature '" + name + "' not found in data");
    return static_cast<std::size_t>(it - names_.begin());
}

const Eigen::VectorXd& Dataset::numeric(const std::string& name) const {
    const Column& c = columns_[index_of(name)];
    if (!c.values) throw UserError("feature '" + name + "' is not numeric");
    return *c.values;
}

std::vector<std::string> Dataset::labels(const std::string& name) const {
    const Column& c = columns_[index_of(name)];
    if (c.labels) return *c.labels;
    std::vector<std::string> out;
    out.reserve(rows_);
    for (double v : *c.values) out.push_back(format_double(v));
    return out;
}

Dataset Dataset::select_rows(const std::vector<Eigen::Index>& rows) const {
    Dataset out;
    for (std::size_t j = 0; j < names_.size(); ++j) {
        const Column& c = columns_[j];
        if (c.labels) {
            std::vector<std::string> l;
            l.reserve(rows.size());
            for (auto r : rows) l.push_back((*c.labels)[static_cast<std::size_t>(r)]);
            out.add_labels(names_[j], std::move(l));
        } else {
            Eigen::VectorXd v(static_cast<Eigen::Index>(rows.size()));
            for (std::size_t i = 0; i < rows.size(); ++i) v[static_cast<Eigen::Index>(i)] = (*c.values)[rows[i]];
            out.add_numeric(names_[j], std::move(v));
        }
    }
    return out;
}

Dataset load_dataset(const std::string& path, const std::set<std::string>& label_columns) {
    std::ifstream in(path);
    if (!in) throw UserError("cannot read data file '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || trim(line).empty()) {
        throw UserError("data file '" + path + "' is empty");
    }
    std::vector<std::string> header = split_csv_line(line);
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (header[j].empty()) throw DataError("empty column name in header", 1, j + 1);
    }
    const std::size_t ncol = header.size();
    std::vector<std::vector<std::string>> text(ncol);
    std::vector<std::vector<double>> values(ncol);
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != ncol) {
            throw DataError("ragged row: expected " + std::to_string(ncol) + " cells, found " +
                                std::to_string(cells.size()),
                            row, std::min(cells.size(), ncol) + 1);
        }
        for (std::size_t j = 0; j < ncol; ++j) {
            if (is_missing(cells[j])) throw DataError("missing value '" + cells[j] + "'", row, j + 1);
            if (label_columns.count(header[j])) {
                text[j].push_back(cells[j]);
                continue;
            }
            auto v = parse_number(cells[j]);
            if (!v) throw DataError("non-numeric cell '" + cells[j] + "'", row, j + 1);
            values[j].push_back(*v);
        }
    }
    if (row == 1) throw UserError("data file '" + path + "' has a header but no rows");
    Dataset data;
    for (std::size_t j = 0; j < ncol; ++j) {
        if (label_columns.count(header[j])) {
            data.add_labels(header[j], std::move(text[j]));
        } else {
            data.add_numeric(header[j], Eigen::Map<const Eigen::VectorXd>(
                                            values[j].data(), static_cast<Eigen::Index>(values[j].size())));
        }
    }
    if (data.rows() == 0) throw UserError("data file '" + path + "' has a header but no rows");
    return data;
}

void write_csv(const Dataset& data, const std::string& path) {
    std::ostringstream out;
    const auto& names = data.column_names();
    std::vector<std::vector<std::string>> cols;
    for (std::size_t j = 0; j < names.size(); ++j) {
        out << (j ? "," : "") << names[j];
        cols.push_back(data.labels(names[j]));
    }
    out << '\n';
    for (std::size_t i = 0; i < data.rows(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) out << (j ? "," : "") << cols[j][i];
        out << '\n';
    }
    write_text_atomic(path, out.str());
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UserError("cannot read file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_atomic(const std::string& path, const std::string& content) {
    std::filesystem::path target(path);
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    std::filesystem::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw UserError("cannot write file '" + tmp.string() + "'");
        out << content;
        if (!out) throw UserError("failed writing '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, target);
}

}  // namespace sddr
