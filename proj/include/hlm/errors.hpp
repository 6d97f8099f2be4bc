#ifndef HLM_ERRORS_HPP
#define HLM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace hlm {

// Data-layer failures: bad files, absent columns, invariant violations.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Model/config-layer failures: invalid specs, mismatched designs.
class SpecError : public std::runtime_error {
public:
    explicit SpecError(const std::string& msg) : std::runtime_error(msg) {}
};

// Codebook text that does not parse. Carries the 1-based line number.
class CodebookError : public std::runtime_error {
public:
    CodebookError(int line, const std::string& msg)
        : std::runtime_error("codebook line " + std::to_string(line) + ": " + msg),
          line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

// A category value outside a map, under the error policy.
class UnmappedCategoryError : public std::runtime_error {
public:
    UnmappedCategoryError(std::string category, std::string variable, long row)
        : std::runtime_error("unmapped category \"" + category + "\" in variable \"" +
                             variable + "\" at row " + std::to_string(row)),
          category_(std::move(category)), variable_(std::move(variable)), row_(row) {}
    const std::string& category() const { return category_; }
    const std::string& variable() const { return variable_; }
    long row() const { return row_; }

private:
    std::string category_;
    std::string variable_;
    long row_;
};

}  // namespace hlm

#endif
