#ifndef HLM_DIAGNOSTICS_HPP
#define HLM_DIAGNOSTICS_HPP

#include <string>
#include <vector>

#include "hlm/dataset.hpp"
#include "hlm/estimator.hpp"

namespace hlm {

// Share of outcome variance between clusters: tau00 / (tau00 + sigma2).
double icc(double tau00, double sigma2);

// Variance inflation of clustered sampling: 1 + (n_bar - 1) * icc.
double design_effect(double n_bar, double icc_value);

struct EffectiveSampleSize {
    double value = 0.0;      // N / deff, unrounded (canonical)
    long long rounded = 0;
};
EffectiveSampleSize effective_sample_size(double n_total, double deff);

// Proportional reduction in variance against the unconditional fit.
// Negative values are reported as computed, with the flag set.
struct VarianceExplained {
    double r2_level1 = 0.0;
    double r2_level2 = 0.0;
    double r2_total = 0.0;
    bool negative_component = false;
};
VarianceExplained variance_explained(const FitResult& null_fit, const FitResult& model_fit);

struct VariableSummary {
    std::string name;
    std::size_t n = 0;       // non-missing count
    double mean = 0.0, sd = 0.0, min = 0.0, max = 0.0;
    bool defined() const { return n > 0; }
};
std::vector<VariableSummary> descriptives(const Dataset& ds,
                                          const std::vector<std::string>& vars);

// Pearson correlations over pairwise-complete rows, with two-sided
// p-values from the t transform on n-2 df. Undefined entries (zero
// variance, too few pairs) are NaN.
struct CorrelationMatrix {
    std::vector<std::string> vars;
    std::vector<std::vector<double>> r;
    std::vector<std::vector<double>> p;
    std::vector<std::vector<std::size_t>> n;
};
CorrelationMatrix correlations(const Dataset& ds, const std::vector<std::string>& vars);

}  // namespace hlm

#endif
