#ifndef HLM_REPORT_HPP
#define HLM_REPORT_HPP

#include <string>
#include <vector>

#include <json.hpp>

#include "hlm/diagnostics.hpp"
#include "hlm/estimator.hpp"
#include "hlm/plausible_values.hpp"
#include "hlm/recode.hpp"

namespace hlm::report {

using ordered_json = nlohmann::ordered_json;

enum class Format { Text, Structured };

// Inputs of the variance-partition block (ICC, design effect, effective
// sample size). Rendered twice: with the conventional published rounding
// chain (icc to 3 d.p. before the design effect, design effect to 2 d.p.
// before dividing) and exactly; the exact value is canonical.
struct VariancePartition {
    double tau00 = 0.0;
    double sigma2 = 0.0;
    double n_bar = 0.0;
    double n_total = 0.0;
};

std::string variance_partition_text(const VariancePartition& vp);
ordered_json variance_partition_json(const VariancePartition& vp);

std::string fit_text(const FitResult& fit, const DeletionReport* deletion,
                     const VarianceExplained* r2, const FitResult* null_fit);
ordered_json fit_json(const FitResult& fit, const DeletionReport* deletion,
                      const VarianceExplained* r2, const FitResult* null_fit);

std::string diagnostics_text(const std::vector<VariableSummary>& desc,
                             const CorrelationMatrix* corr,
                             const VariancePartition* vp);
ordered_json diagnostics_json(const std::vector<VariableSummary>& desc,
                              const CorrelationMatrix* corr,
                              const VariancePartition* vp);

std::string pooled_text(const PooledResult& pooled);
ordered_json pooled_json(const PooledResult& pooled);

std::string audit_text(const std::vector<RuleAudit>& audits);
ordered_json audit_json(const std::vector<RuleAudit>& audits);

}  // namespace hlm::report

#endif
