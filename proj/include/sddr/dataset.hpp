#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sddr {

/// Column-oriented table. Numeric columns are finite doubles; label columns
/// (random-effect groupings) keep their raw cell text and, when every cell
/// parses, a numeric copy as well.
class Dataset {
public:
    Dataset() = default;

    void add_numeric(std::string name, Eigen::VectorXd values);
    void add_labels(std::string name, std::vector<std::string> labels);

    std::size_t rows() const noexcept { return rows_; }
    const std::vector<std::string>& column_names() const noexcept { return names_; }
    bool has(const std::string& name) const;

    /// Throws UserError naming the column if absent or non-numeric.
    const Eigen::VectorXd& numeric(const std::string& name) const;
    /// Raw labels of a label column, or shortest decimal text of a numeric one.
    std::vector<std::string> labels(const std::string& name) const;

    Dataset select_rows(const std::vector<Eigen::Index>& rows) const;

private:
    struct Column {
        std::optional<Eigen::VectorXd> values;
        std::optional<std::vector<std::string>> labels;
    };

    std::size_t index_of(const std::string& name) const;
    void check_length(std::size_t n, const std::string& name);

    std::vector<std::string> names_;
    std::vector<Column> columns_;
    std::size_t rows_ = 0;
};

/// Reads a CSV with a header row. Columns named in `label_columns` are kept as
/// text; every other cell must be a finite number. Missing tokens (empty, NA,
/// NaN, null) are rejected with their row and column.
Dataset load_dataset(const std::string& path, const std::set<std::string>& label_columns = {});

void write_csv(const Dataset& data, const std::string& path);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

std::string read_text(const std::string& path);

/// Writes to a temporary sibling and renames it over `path`.
void write_text_atomic(const std::string& path, const std::string& content);

}  // namespace sddr
