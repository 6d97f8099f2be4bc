#include "hlm/plausible_values.hpp"

#include <cmath>
#include <limits>

#include "hlm/errors.hpp"
#include "hlm/stats.hpp"

namespace hlm {

void PlausibleValueSet::validate(const Dataset& ds) const {
    if (m() < 2)
        throw SpecError("M >= 2 required: got " + std::to_string(m()) +
                        " plausible-value column(s)");
    for (const auto& c : columns)
        if (!ds.has_column(c))
            throw DataError("plausible-value column absent: \"" + c + "\"");
}

RubinPooled rubin_pool(const std::vector<double>& estimates,
                       const std::vector<double>& variances) {
    const std::size_t m = estimates.size();
    if (m < 2)
        throw SpecError("M >= 2 required for pooling");
    if (variances.size() != m)
        throw SpecError("rubin_pool: estimate/variance length mismatch");
    for (double v : variances)
        if (v < 0.0)
            throw SpecError("rubin_pool: variances must be >= 0");

    const double md = static_cast<double>(m);
    RubinPooled out;
    for (double e : estimates) out.estimate += e;
    out.estimate /= md;
    for (double v : variances) out.u_bar += v;
    out.u_bar /= md;
    for (double e : estimates) {
        const double d = e - out.estimate;
        out.b += d * d;
    }
    out.b /= (md - 1.0);
    out.t_var = out.u_bar + (1.0 + 1.0 / md) * out.b;
    out.se = std::sqrt(out.t_var);

    if (out.b > 0.0) {
        const double ratio = out.u_bar / ((1.0 + 1.0 / md) * out.b);
        out.df = (md - 1.0) * (1.0 + ratio) * (1.0 + ratio);
    } else {
        out.df = std::numeric_limits<double>::infinity();
    }
    if (out.se > 0.0)
        out.p = stats::two_sided_t_p(out.estimate / out.se, out.df);
    else
        out.p = out.estimate == 0.0 ? 1.0 : 0.0;
    return out;
}

PooledResult fit_pooled(const ModelSpec& spec, const Dataset& ds,
                        const PlausibleValueSet& pvs) {
    pvs.validate(ds);

    // Deletion variables: predictors, level-2 terms, and all PV columns.
    std::vector<std::string> del_vars;
    for (const auto& t : spec.level1) del_vars.push_back(t.name);
    for (const auto& w : spec.level2) del_vars.push_back(w);
    for (const auto& c : pvs.columns) del_vars.push_back(c);

    auto [clean, report] = listwise_delete(ds, del_vars);

    PooledResult out;
    out.m = pvs.m();
    out.deletion = report;
    out.fits.reserve(pvs.m());
    for (std::size_t i = 0; i < pvs.m(); ++i) {
        ModelSpec s = spec;
        s.outcome = pvs.columns[i];
        try {
            FitResult r = fit(s, clean);
            if (!r.converged)
                throw SpecError("fit did not converge");
            out.fits.push_back(std::move(r));
        } catch (const std::exception& e) {
            throw SpecError("plausible value " + std::to_string(i + 1) + " (\"" +
                            pvs.columns[i] + "\"): " + e.what());
        }
    }

    const std::size_t p = out.fits.front().fixed.size();
    for (std::size_t c = 0; c < p; ++c) {
        std::vector<double> est, var;
        est.reserve(pvs.m());
        var.reserve(pvs.m());
        for (const auto& f : out.fits) {
            est.push_back(f.fixed[c].estimate);
            var.push_back(f.fixed[c].se * f.fixed[c].se);
        }
        PooledParameter pp;
        pp.name = out.fits.front().fixed[c].name;
        pp.pooled = rubin_pool(est, var);
        out.params.push_back(std::move(pp));
    }

    const auto q = out.fits.front().vc.tau.rows();
    out.vc_mean.tau = Eigen::MatrixXd::Zero(q, q);
    out.vc_mean.sigma2 = 0.0;
    for (const auto& f : out.fits) {
        out.vc_mean.tau += f.vc.tau;
        out.vc_mean.sigma2 += f.vc.sigma2;
    }
    out.vc_mean.tau /= static_cast<double>(pvs.m());
    out.vc_mean.sigma2 /= static_cast<double>(pvs.m());
    return out;
}

FitResult fit_average_pv(const ModelSpec& spec, const Dataset& ds,
                         const PlausibleValueSet& pvs, DeletionReport* report) {
    pvs.validate(ds);
    std::vector<std::string> del_vars;
    for (const auto& t : spec.level1) del_vars.push_back(t.name);
    for (const auto& w : spec.level2) del_vars.push_back(w);
    for (const auto& c : pvs.columns) del_vars.push_back(c);
    auto [clean, rep] = listwise_delete(ds, del_vars);
    if (report) *report = rep;

    std::vector<double> mean(clean.n_rows(), 0.0);
    for (const auto& c : pvs.columns) {
        const Column& col = clean.column(c);
        for (std::size_t r = 0; r < clean.n_rows(); ++r) mean[r] += col.values[r];
    }
    for (auto& v : mean) v /= static_cast<double>(pvs.m());

    const std::string avg_name = "pv_mean";
    Dataset with_avg = clean.with_column(avg_name, Column::from_values(std::move(mean)));
    ModelSpec s = spec;
    s.outcome = avg_name;
    return fit(s, with_avg);
}

}  // namespace hlm
