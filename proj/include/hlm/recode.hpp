#ifndef HLM_RECODE_HPP
#define HLM_RECODE_HPP

#include <string>
#include <variant>
#include <vector>

#include "hlm/dataset.hpp"

namespace hlm {

enum class UnmappedPolicy { Error, Missing };

// Category-score lookup. Source codes match a cell's raw text exactly,
// or numerically when both sides parse as numbers.
struct CategoricalMap {
    std::string output;
    std::string source;
    std::vector<std::pair<std::string, double>> mapping;
    UnmappedPolicy unmapped = UnmappedPolicy::Error;
};

// Sum of binary items, each scored 1 for yes_code and 0 for no_code.
// A missing or unrecognizable item makes the sum missing.
struct CompositeSumRule {
    std::string output;
    std::string yes_code;
    std::string no_code;
    std::vector<std::string> items;
};

// Ordinal comparison of two band-coded columns: 1 if left > right,
// -1 if left < right, 0 on ties; missing propagates.
struct OrdinalCompareRule {
    std::string output;
    std::string left;
    std::string right;
};

Dataset apply_categorical_map(const Dataset& ds, const CategoricalMap& rule);
Dataset apply_composite_sum(const Dataset& ds, const CompositeSumRule& rule);
Dataset apply_ordinal_compare(const Dataset& ds, const OrdinalCompareRule& rule);

// School-location recodes are plain categorical maps onto {1, 0, -1}.
inline Dataset apply_school_location_map(const Dataset& ds, const CategoricalMap& rule) {
    return apply_categorical_map(ds, rule);
}

using RecodeRule = std::variant<CategoricalMap, CompositeSumRule, OrdinalCompareRule>;

struct RuleAudit {
    std::string kind;
    std::string output;
    std::size_t applied = 0;
    std::size_t missing = 0;            // propagated missing inputs
    std::size_t unmapped_to_missing = 0;
};

struct Codebook {
    std::vector<RecodeRule> rules;
};

// Line-oriented codebook text. Grammar (tokens are whitespace-separated;
// double quotes group a token containing spaces):
//   map OUTPUT SOURCE [policy=error|missing] CODE SCORE [CODE SCORE ...]
//   sum OUTPUT YES_CODE NO_CODE ITEM [ITEM ...]
//   compare OUTPUT LEFT RIGHT
// '#' starts a comment; blank lines are ignored.
Codebook parse_codebook(const std::string& text);
Codebook load_codebook(const std::string& path);

// Applies every rule in order; returns the recoded dataset and the
// per-rule application counts.
std::pair<Dataset, std::vector<RuleAudit>> apply_codebook(const Dataset& ds,
                                                          const Codebook& cb);

}  // namespace hlm

#endif
