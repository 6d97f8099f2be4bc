#ifndef HLM_DATASET_HPP
#define HLM_DATASET_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace hlm {

// Cell state of a column entry. Text is a cell that carries a raw
// (non-numeric) category string; Missing is a sentinel-coded or
// unparseable-and-empty cell.
enum class Cell : std::uint8_t { Number, Text, Missing };

struct Column {
    std::vector<double> values;   // meaningful only where kind == Number
    std::vector<Cell> kinds;
    std::vector<std::string> raw; // original cell text; empty for built columns

    std::size_t size() const { return kinds.size(); }
    bool has_raw() const { return !raw.empty(); }
    bool is_number(std::size_t i) const { return kinds[i] == Cell::Number; }
    bool is_missing(std::size_t i) const { return kinds[i] == Cell::Missing; }

    static Column from_values(std::vector<double> v);
    static Column from_values(std::vector<double> v, std::vector<bool> missing);

    // Cell content for display/matching: raw text when present, else the
    // shortest round-trip decimal of the numeric value.
    std::string display(std::size_t i) const;
};

// Immutable-after-construction columnar table. All columns share n_rows;
// names are unique; the cluster column exists and has no missing cells.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<std::string> names, std::vector<Column> cols,
            std::string cluster_column);

    std::size_t n_rows() const { return n_rows_; }
    const std::string& cluster_column() const { return cluster_column_; }
    const std::vector<std::string>& names() const { return names_; }

    bool has_column(const std::string& name) const;
    const Column& column(const std::string& name) const;

    // Returns a copy with `col` appended, or replacing an existing column
    // of the same name.
    Dataset with_column(const std::string& name, Column col) const;

    // Grouping key for row i: the cluster cell's canonical text.
    std::string cluster_key(std::size_t i) const;

private:
    void validate() const;

    std::vector<std::string> names_;
    std::vector<Column> cols_;
    std::map<std::string, std::size_t> index_;
    std::string cluster_column_;
    std::size_t n_rows_ = 0;
};

// Ordered two-level grouping of a Dataset. Groups appear in first-row
// order; sum of sizes equals n_rows.
struct GroupIndex {
    std::vector<std::string> ids;            // cluster labels
    std::vector<std::vector<std::size_t>> rows;
    std::vector<std::size_t> sizes;
    std::size_t J = 0;
    std::size_t n_total = 0;
    double n_bar = 0.0;                      // mean group size
};

struct CenteredVariable {
    std::string name;
    std::vector<double> values;
    double grand_mean = 0.0;
};

struct DeletionReport {
    std::size_t rows_before = 0, rows_after = 0;
    std::size_t groups_before = 0, groups_after = 0;
    std::size_t rows_deleted() const { return rows_before - rows_after; }
};

// CSV ingestion. `schema` lists variable names that must be present
// (beyond them, every header column is loaded). Cells matching a sentinel
// become missing; non-numeric cells are kept as text.
Dataset load_csv(const std::string& path, const std::vector<std::string>& schema,
                 const std::string& cluster_column,
                 const std::vector<std::string>& sentinels = {"", "NA"});

// Writes comma-separated text: header row, then one line per row. Missing
// cells are written empty; text cells are quoted when they need it.
void write_csv(const Dataset& ds, const std::string& path);
std::string to_csv(const Dataset& ds);

// Keeps exactly the rows where every model variable is a numeric cell.
std::pair<Dataset, DeletionReport> listwise_delete(const Dataset& ds,
                                                   const std::vector<std::string>& model_vars);

// values = x - mean(x) over all rows. Requires a fully numeric column.
CenteredVariable grand_mean_center(const Dataset& ds, const std::string& var);

GroupIndex build_group_index(const Dataset& ds);

// Shortest round-trip decimal formatting used across CSV and reports.
std::string format_number(double v);

}  // namespace hlm

#endif
