#ifndef HLM_PLAUSIBLE_VALUES_HPP
#define HLM_PLAUSIBLE_VALUES_HPP

#include <string>
#include <vector>

#include "hlm/dataset.hpp"
#include "hlm/estimator.hpp"
#include "hlm/model_spec.hpp"

namespace hlm {

struct PlausibleValueSet {
    std::vector<std::string> columns;

    std::size_t m() const { return columns.size(); }
    void validate(const Dataset& ds) const;
};

// Rubin's-rules combination of M point estimates and their squared SEs.
struct RubinPooled {
    double estimate = 0.0;
    double u_bar = 0.0;      // within-imputation variance
    double b = 0.0;          // between-imputation variance
    double t_var = 0.0;      // u_bar + (1 + 1/M) * b
    double se = 0.0;
    double df = 0.0;         // +inf when b == 0
    double p = 1.0;          // two-sided test of estimate = 0
};
RubinPooled rubin_pool(const std::vector<double>& estimates,
                       const std::vector<double>& variances);

struct PooledParameter {
    std::string name;
    RubinPooled pooled;
};

struct PooledResult {
    std::vector<PooledParameter> params;
    VarianceComponents vc_mean;      // averaged across fits, descriptive only
    std::vector<FitResult> fits;     // per plausible value, for audit
    DeletionReport deletion;
    std::size_t m = 0;
};

// Runs one fit per plausible-value outcome and pools the fixed effects.
// Listwise deletion spans the predictors and every PV column, so all
// fits share rows. A failing fit aborts with the PV index in the error.
PooledResult fit_pooled(const ModelSpec& spec, const Dataset& ds,
                        const PlausibleValueSet& pvs);

// Sensitivity mode: a single fit on the row-wise mean of the PV columns.
// Not the canonical analysis; kept for comparison runs.
FitResult fit_average_pv(const ModelSpec& spec, const Dataset& ds,
                         const PlausibleValueSet& pvs, DeletionReport* report);

}  // namespace hlm

#endif
