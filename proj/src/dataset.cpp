#include "hlm/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "hlm/errors.hpp"

namespace hlm {

std::string format_number(double v) {
    char buf[48];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

Column Column::from_values(std::vector<double> v) {
    Column c;
    c.kinds.assign(v.size(), Cell::Number);
    c.values = std::move(v);
    return c;
}

Column Column::from_values(std::vector<double> v, std::vector<bool> missing) {
    Column c;
    c.values = std::move(v);
    c.kinds.resize(c.values.size());
    for (std::size_t i = 0; i < c.values.size(); ++i)
        c.kinds[i] = missing[i] ? Cell::Missing : Cell::Number;
    return c;
}

std::string Column::display(std::size_t i) const {
    if (has_raw()) return raw[i];
    if (kinds[i] == Cell::Number) return format_number(values[i]);
    return "";
}

Dataset::Dataset(std::vector<std::string> names, std::vector<Column> cols,
                 std::string cluster_column)
    : names_(std::move(names)), cols_(std::move(cols)),
      cluster_column_(std::move(cluster_column)) {
    if (names_.size() != cols_.size())
        throw DataError("dataset: name/column count mismatch");
    n_rows_ = cols_.empty() ? 0 : cols_.front().size();
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (!index_.emplace(names_[i], i).second)
            throw DataError("dataset: duplicate variable name \"" + names_[i] + "\"");
    }
    validate();
}

void Dataset::validate() const {
    for (std::size_t i = 0; i < cols_.size(); ++i) {
        if (cols_[i].size() != n_rows_)
            throw DataError("dataset: column \"" + names_[i] + "\" has " +
                            std::to_string(cols_[i].size()) + " rows, expected " +
                            std::to_string(n_rows_));
        if (!cols_[i].values.empty() && cols_[i].values.size() != cols_[i].kinds.size())
            throw DataError("dataset: column \"" + names_[i] + "\" value/kind mismatch");
    }
    auto it = index_.find(cluster_column_);
    if (it == index_.end())
        throw DataError("cluster column absent: \"" + cluster_column_ + "\"");
    const Column& cc = cols_[it->second];
    for (std::size_t r = 0; r < n_rows_; ++r)
        if (cc.is_missing(r))
            throw DataError("cluster column \"" + cluster_column_ +
                            "\" has a missing cell at row " + std::to_string(r + 1));
}

bool Dataset::has_column(const std::string& name) const {
    return index_.count(name) > 0;
}

const Column& Dataset::column(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
        throw DataError("no such variable: \"" + name + "\"");
    return cols_[it->second];
}

Dataset Dataset::with_column(const std::string& name, Column col) const {
    if (col.size() != n_rows_)
        throw DataError("with_column: \"" + name + "\" has wrong length");
    std::vector<std::string> names = names_;
    std::vector<Column> cols = cols_;
    auto it = index_.find(name);
    if (it != index_.end()) {
        cols[it->second] = std::move(col);
    } else {
        names.push_back(name);
        cols.push_back(std::move(col));
    }
    return Dataset(std::move(names), std::move(cols), cluster_column_);
}

std::string Dataset::cluster_key(std::size_t i) const {
    const Column& cc = column(cluster_column_);
    if (cc.is_number(i)) return format_number(cc.values[i]);
    return cc.raw.empty() ? "" : cc.raw[i];
}

namespace {

bool parse_double(const std::string& s, double& out) {
    const char* b = s.data();
    const char* e = s.data() + s.size();
    auto res = std::from_chars(b, e, out);
    return res.ec == std::errc() && res.ptr == e && std::isfinite(out);
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// One CSV record; supports quoted fields with doubled quotes.
std::vector<std::string> split_csv_line(const std::string& line, std::size_t lineno) {
    std::vector<std::string> out;
    std::string field;
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            out.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    if (in_quotes)
        throw DataError("unterminated quote on line " + std::to_string(lineno));
    out.push_back(field);
    return out;
}

}  // namespace

Dataset load_csv(const std::string& path, const std::vector<std::string>& schema,
                 const std::string& cluster_column,
                 const std::vector<std::string>& sentinels) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open file: " + path);

    std::string line;
    if (!std::getline(in, line))
        throw DataError("empty file: " + path);
    std::vector<std::string> header = split_csv_line(line, 1);
    for (auto& h : header) h = trim(h);

    const std::size_t ncol = header.size();
    std::vector<Column> cols(ncol);

    std::set<std::string> have(header.begin(), header.end());
    if (have.size() != header.size())
        throw DataError("duplicate column in header of " + path);
    for (const auto& want : schema)
        if (!have.count(want))
            throw DataError("expected variable \"" + want + "\" absent from " + path);
    if (!have.count(cluster_column))
        throw DataError("cluster column absent: \"" + cluster_column + "\"");

    auto is_sentinel = [&](const std::string& s) {
        return std::find(sentinels.begin(), sentinels.end(), s) != sentinels.end();
    };

    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::vector<std::string> cells = split_csv_line(line, lineno);
        if (cells.size() != ncol)
            throw DataError("ragged row at line " + std::to_string(lineno) + ": " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(ncol));
        for (std::size_t c = 0; c < ncol; ++c) {
            std::string cell = trim(cells[c]);
            Column& col = cols[c];
            col.raw.push_back(cell);
            double v = 0.0;
            if (is_sentinel(cell)) {
                col.kinds.push_back(Cell::Missing);
                col.values.push_back(std::nan(""));
            } else if (parse_double(cell, v)) {
                col.kinds.push_back(Cell::Number);
                col.values.push_back(v);
            } else {
                col.kinds.push_back(Cell::Text);
                col.values.push_back(std::nan(""));
            }
        }
    }
    return Dataset(std::move(header), std::move(cols), cluster_column);
}

namespace {

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

}  // namespace

std::string to_csv(const Dataset& ds) {
    std::ostringstream out;
    const auto& names = ds.names();
    for (std::size_t c = 0; c < names.size(); ++c) {
        if (c) out << ',';
        out << csv_escape(names[c]);
    }
    out << '\n';
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        for (std::size_t c = 0; c < names.size(); ++c) {
            if (c) out << ',';
            const Column& col = ds.column(names[c]);
            if (col.is_missing(r)) continue;
            out << csv_escape(col.display(r));
        }
        out << '\n';
    }
    return out.str();
}

void write_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot write file: " + path);
    out << to_csv(ds);
}

std::pair<Dataset, DeletionReport> listwise_delete(const Dataset& ds,
                                                   const std::vector<std::string>& model_vars) {
    for (const auto& v : model_vars)
        ds.column(v);  // throws if absent

    DeletionReport rep;
    rep.rows_before = ds.n_rows();
    rep.groups_before = build_group_index(ds).J;

    std::vector<std::size_t> keep;
    keep.reserve(ds.n_rows());
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        bool ok = true;
        for (const auto& v : model_vars) {
            if (!ds.column(v).is_number(r)) {
                ok = false;
                break;
            }
        }
        if (ok) keep.push_back(r);
    }
    if (keep.empty())
        throw DataError("empty dataset after deletion");

    std::vector<Column> cols;
    std::vector<std::string> names = ds.names();
    cols.reserve(names.size());
    for (const auto& name : names) {
        const Column& src = ds.column(name);
        Column dst;
        dst.values.reserve(keep.size());
        dst.kinds.reserve(keep.size());
        if (src.has_raw()) dst.raw.reserve(keep.size());
        for (std::size_t r : keep) {
            dst.values.push_back(src.values[r]);
            dst.kinds.push_back(src.kinds[r]);
            if (src.has_raw()) dst.raw.push_back(src.raw[r]);
        }
        cols.push_back(std::move(dst));
    }
    Dataset out(std::move(names), std::move(cols), ds.cluster_column());
    rep.rows_after = out.n_rows();
    rep.groups_after = build_group_index(out).J;
    return {std::move(out), rep};
}

CenteredVariable grand_mean_center(const Dataset& ds, const std::string& var) {
    const Column& col = ds.column(var);
    double sum = 0.0;
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        if (!col.is_number(r))
            throw DataError("grand_mean_center: \"" + var + "\" has a non-numeric cell at row " +
                            std::to_string(r + 1));
        sum += col.values[r];
    }
    if (ds.n_rows() == 0)
        throw DataError("grand_mean_center: empty column");
    CenteredVariable cv;
    cv.name = var;
    cv.grand_mean = sum / static_cast<double>(ds.n_rows());
    cv.values.reserve(ds.n_rows());
    for (std::size_t r = 0; r < ds.n_rows(); ++r)
        cv.values.push_back(col.values[r] - cv.grand_mean);
    return cv;
}

GroupIndex build_group_index(const Dataset& ds) {
    GroupIndex gi;
    std::map<std::string, std::size_t> seen;
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        std::string key = ds.cluster_key(r);
        auto it = seen.find(key);
        if (it == seen.end()) {
            seen.emplace(key, gi.ids.size());
            gi.ids.push_back(key);
            gi.rows.emplace_back();
            gi.rows.back().push_back(r);
        } else {
            gi.rows[it->second].push_back(r);
        }
    }
    gi.J = gi.ids.size();
    gi.n_total = ds.n_rows();
    gi.sizes.reserve(gi.J);
    for (const auto& rr : gi.rows) gi.sizes.push_back(rr.size());
    gi.n_bar = gi.J ? static_cast<double>(gi.n_total) / static_cast<double>(gi.J) : 0.0;
    return gi;
}

}  // namespace hlm
