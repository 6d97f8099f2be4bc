#include "hlm/diagnostics.hpp"

#include <cmath>
#include <limits>

#include "hlm/errors.hpp"
#include "hlm/stats.hpp"

namespace hlm {

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
}

double icc(double tau00, double sigma2) {
    if (tau00 < 0.0 || sigma2 < 0.0)
        throw SpecError("icc: variance components must be non-negative");
    if (tau00 + sigma2 <= 0.0)
        throw SpecError("icc: both variance components are zero");
    return tau00 / (tau00 + sigma2);
}

double design_effect(double n_bar, double icc_value) {
    if (n_bar < 1.0)
        throw SpecError("design_effect: mean cluster size must be >= 1");
    if (icc_value < 0.0 || icc_value > 1.0)
        throw SpecError("design_effect: icc must lie in [0, 1]");
    return 1.0 + (n_bar - 1.0) * icc_value;
}

EffectiveSampleSize effective_sample_size(double n_total, double deff) {
    if (n_total < 1.0)
        throw SpecError("effective_sample_size: N must be >= 1");
    if (deff < 1.0)
        throw SpecError("effective_sample_size: design effect must be >= 1");
    EffectiveSampleSize out;
    out.value = n_total / deff;
    out.rounded = std::llround(out.value);
    return out;
}

VarianceExplained variance_explained(const FitResult& null_fit, const FitResult& model_fit) {
    const double tau0 = null_fit.vc.tau00();
    const double sig0 = null_fit.vc.sigma2;
    if (tau0 <= 0.0 || sig0 <= 0.0)
        throw SpecError("variance_explained: null fit components must be positive");
    const double tau_m = model_fit.vc.tau00();
    const double sig_m = model_fit.vc.sigma2;
    VarianceExplained out;
    out.r2_level1 = (sig0 - sig_m) / sig0;
    out.r2_level2 = (tau0 - tau_m) / tau0;
    out.r2_total = ((tau0 + sig0) - (tau_m + sig_m)) / (tau0 + sig0);
    out.negative_component = out.r2_level1 < 0.0 || out.r2_level2 < 0.0;
    return out;
}

std::vector<VariableSummary> descriptives(const Dataset& ds,
                                          const std::vector<std::string>& vars) {
    std::vector<VariableSummary> out;
    out.reserve(vars.size());
    for (const auto& name : vars) {
        const Column& col = ds.column(name);
        VariableSummary s;
        s.name = name;
        double sum = 0.0;
        double mn = std::numeric_limits<double>::infinity();
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < ds.n_rows(); ++r) {
            if (!col.is_number(r)) continue;
            const double v = col.values[r];
            sum += v;
            mn = std::min(mn, v);
            mx = std::max(mx, v);
            ++s.n;
        }
        if (s.n == 0) {
            s.mean = s.sd = s.min = s.max = kNan;
            out.push_back(std::move(s));
            continue;
        }
        s.mean = sum / static_cast<double>(s.n);
        s.min = mn;
        s.max = mx;
        if (s.n > 1) {
            double ss = 0.0;
            for (std::size_t r = 0; r < ds.n_rows(); ++r) {
                if (!col.is_number(r)) continue;
                const double d = col.values[r] - s.mean;
                ss += d * d;
            }
            s.sd = std::sqrt(ss / static_cast<double>(s.n - 1));
        } else {
            s.sd = kNan;
        }
        out.push_back(std::move(s));
    }
    return out;
}

CorrelationMatrix correlations(const Dataset& ds, const std::vector<std::string>& vars) {
    const std::size_t k = vars.size();
    CorrelationMatrix cm;
    cm.vars = vars;
    cm.r.assign(k, std::vector<double>(k, kNan));
    cm.p.assign(k, std::vector<double>(k, kNan));
    cm.n.assign(k, std::vector<std::size_t>(k, 0));

    std::vector<const Column*> cols;
    cols.reserve(k);
    for (const auto& v : vars) cols.push_back(&ds.column(v));

    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = a; b < k; ++b) {
            double sx = 0, sy = 0;
            std::size_t n = 0;
            for (std::size_t r = 0; r < ds.n_rows(); ++r) {
                if (!cols[a]->is_number(r) || !cols[b]->is_number(r)) continue;
                sx += cols[a]->values[r];
                sy += cols[b]->values[r];
                ++n;
            }
            cm.n[a][b] = cm.n[b][a] = n;
            if (n < 2) continue;
            const double mx = sx / static_cast<double>(n);
            const double my = sy / static_cast<double>(n);
            double sxx = 0, syy = 0, sxy = 0;
            for (std::size_t r = 0; r < ds.n_rows(); ++r) {
                if (!cols[a]->is_number(r) || !cols[b]->is_number(r)) continue;
                const double dx = cols[a]->values[r] - mx;
                const double dy = cols[b]->values[r] - my;
                sxx += dx * dx;
                syy += dy * dy;
                sxy += dx * dy;
            }
            if (sxx <= 0.0 || syy <= 0.0) continue;  // zero-variance column
            double r = sxy / std::sqrt(sxx * syy);
            r = std::clamp(r, -1.0, 1.0);
            cm.r[a][b] = cm.r[b][a] = r;
            double p = kNan;
            if (a == b) {
                p = 0.0;
            } else if (n > 2) {
                if (std::fabs(r) >= 1.0) {
                    p = 0.0;
                } else {
                    const double t = r * std::sqrt((static_cast<double>(n) - 2.0) /
                                                   (1.0 - r * r));
                    p = stats::two_sided_t_p(t, static_cast<double>(n) - 2.0);
                }
            }
            cm.p[a][b] = cm.p[b][a] = p;
        }
    }
    return cm;
}

}  // namespace hlm
