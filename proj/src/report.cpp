#include "hlm/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace hlm::report {

namespace {

std::string num(double v, int prec) {
    if (std::isnan(v)) return "-";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

std::string sci(double v) {
    if (std::isnan(v)) return "-";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

std::string pad(const std::string& s, int width, bool left = false) {
    if (static_cast<int>(s.size()) >= width) return s;
    std::string fill(width - s.size(), ' ');
    return left ? s + fill : fill + s;
}

double round_to(double v, int digits) {
    const double scale = std::pow(10.0, digits);
    return std::llround(v * scale) / scale;
}

double json_safe(double v) { return v; }  // nlohmann serializes nan/inf as null

ordered_json matrix_json(const Eigen::MatrixXd& m) {
    ordered_json rows = ordered_json::array();
    for (Eigen::Index a = 0; a < m.rows(); ++a) {
        ordered_json row = ordered_json::array();
        for (Eigen::Index b = 0; b < m.cols(); ++b) row.push_back(m(a, b));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

// ---------------------------------------------------------------------
// Variance partition block
// ---------------------------------------------------------------------

namespace {

struct VpDerived {
    double icc_raw, icc_3dp;
    double deff_pub, deff_pub_2dp, eff_n_pub;
    double deff_exact, eff_n_exact;
};

VpDerived derive(const VariancePartition& vp) {
    VpDerived d{};
    d.icc_raw = hlm::icc(vp.tau00, vp.sigma2);
    d.icc_3dp = round_to(d.icc_raw, 3);
    d.deff_pub = hlm::design_effect(vp.n_bar, d.icc_3dp);
    d.deff_pub_2dp = round_to(d.deff_pub, 2);
    d.eff_n_pub = vp.n_total / d.deff_pub_2dp;
    d.deff_exact = hlm::design_effect(vp.n_bar, d.icc_raw);
    d.eff_n_exact = vp.n_total / d.deff_exact;
    return d;
}

}  // namespace

std::string variance_partition_text(const VariancePartition& vp) {
    const VpDerived d = derive(vp);
    std::ostringstream out;
    out << "Variance partition (tau00 = " << num(vp.tau00, 2)
        << ", sigma2 = " << num(vp.sigma2, 2) << ", n_bar = " << num(vp.n_bar, 2)
        << ", N = " << num(vp.n_total, 0) << ")\n";
    out << "  ICC                    = " << num(d.icc_raw, 3) << "\n";
    out << "  Design effect          = " << num(d.deff_pub, 2) << "\n";
    out << "  Effective sample size  = " << num(d.eff_n_pub, 1) << "  (rounds to "
        << std::llround(d.eff_n_pub) << ")\n";
    out << "  Exact, no intermediate rounding: design effect " << num(d.deff_exact, 4)
        << ", effective sample size " << num(d.eff_n_exact, 1) << " (rounds to "
        << std::llround(d.eff_n_exact) << ")\n";
    return out.str();
}

ordered_json variance_partition_json(const VariancePartition& vp) {
    const VpDerived d = derive(vp);
    ordered_json j;
    j["tau00"] = vp.tau00;
    j["sigma2"] = vp.sigma2;
    j["n_bar"] = vp.n_bar;
    j["n_total"] = vp.n_total;
    j["icc"] = d.icc_raw;
    j["published_rounding"] = {{"icc", d.icc_3dp},
                               {"design_effect", d.deff_pub_2dp},
                               {"effective_n", d.eff_n_pub},
                               {"effective_n_rounded", std::llround(d.eff_n_pub)}};
    j["exact"] = {{"design_effect", d.deff_exact},
                  {"effective_n", d.eff_n_exact},
                  {"effective_n_rounded", std::llround(d.eff_n_exact)}};
    return j;
}

// ---------------------------------------------------------------------
// Fit report
// ---------------------------------------------------------------------

namespace {

void deletion_text(std::ostringstream& out, const DeletionReport& del) {
    out << "Listwise deletion: rows " << del.rows_before << " -> " << del.rows_after
        << ", groups " << del.groups_before << " -> " << del.groups_after << "\n";
}

ordered_json deletion_json(const DeletionReport& del) {
    ordered_json j;
    j["rows_before"] = del.rows_before;
    j["rows_after"] = del.rows_after;
    j["groups_before"] = del.groups_before;
    j["groups_after"] = del.groups_after;
    return j;
}

}  // namespace

std::string fit_text(const FitResult& fit, const DeletionReport* deletion,
                     const VarianceExplained* r2, const FitResult* null_fit) {
    std::ostringstream out;
    out << "Two-level model fit (" << (fit.method == Method::REML ? "REML" : "ML") << ")\n";
    out << "  N = " << fit.n << " rows in J = " << fit.j << " clusters\n";
    out << "  converged: " << (fit.converged ? "yes" : "NO") << " after " << fit.iterations
        << " iterations";
    if (fit.tau_boundary) out << "  [tau at boundary]";
    out << "\n";
    out << "  log-likelihood = " << num(fit.loglik, 4) << "   deviance = "
        << num(fit.deviance, 4) << "\n\n";
    if (deletion) {
        deletion_text(out, *deletion);
        out << "\n";
    }
    if (!fit.grand_means.empty()) {
        out << "Grand-mean centering constants:\n";
        for (const auto& [name, gm] : fit.grand_means)
            out << "  " << pad(name, 12, true) << " " << num(gm, 6) << "\n";
        out << "\n";
    }

    out << "Fixed effects:\n";
    out << "  " << pad("name", 14, true) << pad("estimate", 12) << pad("se", 10)
        << pad("t", 10) << pad("df", 9) << pad("p", 11) << "\n";
    for (const auto& fe : fit.fixed) {
        out << "  " << pad(fe.name, 14, true) << pad(num(fe.estimate, 4), 12)
            << pad(num(fe.se, 4), 10) << pad(num(fe.t, 3), 10) << pad(num(fe.df, 0), 9)
            << pad(sci(fe.p), 11) << "\n";
    }
    out << "\n";

    out << "Variance components:\n";
    for (std::size_t a = 0; a < fit.random_names.size(); ++a) {
        const auto ai = static_cast<Eigen::Index>(a);
        out << "  " << pad(fit.random_names[a], 14, true)
            << pad(num(fit.vc.tau(ai, ai), 4), 14);
        for (const auto& t : fit.vc_tests) {
            if (t.effect != fit.random_names[a]) continue;
            out << "   chi2 = " << num(t.chi2, 2) << ", df = " << t.df
                << ", p = " << sci(t.p);
            if (t.groups_excluded > 0)
                out << "  (" << t.groups_excluded << " groups excluded)";
        }
        out << "\n";
    }
    out << "  " << pad("residual", 14, true) << pad(num(fit.vc.sigma2, 4), 14) << "\n";
    if (fit.random_names.size() > 1) {
        out << "  tau matrix:\n";
        for (Eigen::Index a = 0; a < fit.vc.tau.rows(); ++a) {
            out << "   ";
            for (Eigen::Index b = 0; b < fit.vc.tau.cols(); ++b)
                out << pad(num(fit.vc.tau(a, b), 4), 14);
            out << "\n";
        }
    }
    out << "\n";
    out << "Reliability of the intercept: mean lambda = " << num(fit.reliability.mean, 3)
        << "\n\n";

    if (fit.vc.tau00() > 0.0) {
        VariancePartition vp{fit.vc.tau00(), fit.vc.sigma2,
                             static_cast<double>(fit.n) / static_cast<double>(fit.j),
                             static_cast<double>(fit.n)};
        out << variance_partition_text(vp);
    }

    if (r2) {
        out << "\nVariance explained vs. null model";
        if (null_fit)
            out << " (tau00 = " << num(null_fit->vc.tau00(), 2)
                << ", sigma2 = " << num(null_fit->vc.sigma2, 2) << ")";
        out << ":\n";
        out << "  level 1 (within)  = " << num(100.0 * r2->r2_level1, 1) << "%\n";
        out << "  level 2 (between) = " << num(100.0 * r2->r2_level2, 1) << "%\n";
        out << "  total             = " << num(100.0 * r2->r2_total, 1) << "%\n";
        if (r2->negative_component)
            out << "  note: a component increased relative to the null fit\n";
    }
    return out.str();
}

ordered_json fit_json(const FitResult& fit, const DeletionReport* deletion,
                      const VarianceExplained* r2, const FitResult* null_fit) {
    ordered_json j;
    j["kind"] = "fit";
    j["method"] = fit.method == Method::REML ? "reml" : "ml";
    j["n"] = fit.n;
    j["j"] = fit.j;
    j["converged"] = fit.converged;
    j["iterations"] = fit.iterations;
    j["tau_boundary"] = fit.tau_boundary;
    j["loglik"] = json_safe(fit.loglik);
    j["deviance"] = json_safe(fit.deviance);
    if (deletion) j["deletion"] = deletion_json(*deletion);

    ordered_json gm;
    for (const auto& [name, v] : fit.grand_means) gm[name] = v;
    j["grand_means"] = std::move(gm);

    ordered_json fes = ordered_json::array();
    for (const auto& fe : fit.fixed) {
        ordered_json f;
        f["name"] = fe.name;
        f["level"] = fe.level;
        f["estimate"] = fe.estimate;
        f["se"] = fe.se;
        f["t"] = fe.t;
        f["df"] = json_safe(fe.df);
        f["p"] = json_safe(fe.p);
        fes.push_back(std::move(f));
    }
    j["fixed_effects"] = std::move(fes);

    ordered_json vc;
    vc["random"] = fit.random_names;
    vc["tau"] = matrix_json(fit.vc.tau);
    vc["sigma2"] = fit.vc.sigma2;
    j["variance_components"] = std::move(vc);

    ordered_json tests = ordered_json::array();
    for (const auto& t : fit.vc_tests) {
        ordered_json tj;
        tj["effect"] = t.effect;
        tj["chi2"] = t.chi2;
        tj["df"] = t.df;
        tj["p"] = json_safe(t.p);
        tj["groups_used"] = t.groups_used;
        tj["groups_excluded"] = t.groups_excluded;
        tests.push_back(std::move(tj));
    }
    j["vc_tests"] = std::move(tests);

    ordered_json rel;
    rel["mean"] = fit.reliability.mean;
    rel["per_group"] = fit.reliability.per_group;
    j["reliability"] = std::move(rel);

    if (fit.vc.tau00() > 0.0) {
        VariancePartition vp{fit.vc.tau00(), fit.vc.sigma2,
                             static_cast<double>(fit.n) / static_cast<double>(fit.j),
                             static_cast<double>(fit.n)};
        j["variance_partition"] = variance_partition_json(vp);
    }
    if (r2) {
        ordered_json rj;
        rj["r2_level1"] = r2->r2_level1;
        rj["r2_level2"] = r2->r2_level2;
        rj["r2_total"] = r2->r2_total;
        rj["negative_component"] = r2->negative_component;
        if (null_fit) {
            rj["null_tau00"] = null_fit->vc.tau00();
            rj["null_sigma2"] = null_fit->vc.sigma2;
        }
        j["variance_explained"] = std::move(rj);
    }
    return j;
}

// ---------------------------------------------------------------------
// Diagnostics report
// ---------------------------------------------------------------------

std::string diagnostics_text(const std::vector<VariableSummary>& desc,
                             const CorrelationMatrix* corr,
                             const VariancePartition* vp) {
    std::ostringstream out;
    out << "Descriptive statistics:\n";
    out << "  " << pad("variable", 14, true) << pad("n", 8) << pad("mean", 12)
        << pad("sd", 12) << pad("min", 12) << pad("max", 12) << "\n";
    for (const auto& s : desc) {
        out << "  " << pad(s.name, 14, true) << pad(std::to_string(s.n), 8)
            << pad(num(s.mean, 4), 12) << pad(num(s.sd, 4), 12) << pad(num(s.min, 4), 12)
            << pad(num(s.max, 4), 12) << "\n";
    }
    if (corr && corr->vars.size() > 1) {
        out << "\nCorrelations (Pearson, pairwise complete):\n";
        out << "  " << pad("", 12, true);
        for (const auto& v : corr->vars) out << pad(v, 10);
        out << "\n";
        for (std::size_t a = 0; a < corr->vars.size(); ++a) {
            out << "  " << pad(corr->vars[a], 12, true);
            for (std::size_t b = 0; b < corr->vars.size(); ++b)
                out << pad(num(corr->r[a][b], 3), 10);
            out << "\n";
        }
        out << "  two-sided p-values:\n";
        for (std::size_t a = 0; a < corr->vars.size(); ++a) {
            out << "  " << pad(corr->vars[a], 12, true);
            for (std::size_t b = 0; b < corr->vars.size(); ++b)
                out << pad(sci(corr->p[a][b]), 10);
            out << "\n";
        }
    }
    if (vp) {
        out << "\n";
        out << variance_partition_text(*vp);
    }
    return out.str();
}

ordered_json diagnostics_json(const std::vector<VariableSummary>& desc,
                              const CorrelationMatrix* corr,
                              const VariancePartition* vp) {
    ordered_json j;
    j["kind"] = "diagnostics";
    ordered_json ds = ordered_json::array();
    for (const auto& s : desc) {
        ordered_json sj;
        sj["variable"] = s.name;
        sj["n"] = s.n;
        sj["mean"] = json_safe(s.mean);
        sj["sd"] = json_safe(s.sd);
        sj["min"] = json_safe(s.min);
        sj["max"] = json_safe(s.max);
        ds.push_back(std::move(sj));
    }
    j["descriptives"] = std::move(ds);
    if (corr) {
        ordered_json cj;
        cj["variables"] = corr->vars;
        ordered_json r = ordered_json::array(), p = ordered_json::array();
        for (std::size_t a = 0; a < corr->vars.size(); ++a) {
            ordered_json rr = ordered_json::array(), pr = ordered_json::array();
            for (std::size_t b = 0; b < corr->vars.size(); ++b) {
                rr.push_back(json_safe(corr->r[a][b]));
                pr.push_back(json_safe(corr->p[a][b]));
            }
            r.push_back(std::move(rr));
            p.push_back(std::move(pr));
        }
        cj["r"] = std::move(r);
        cj["p"] = std::move(p);
        j["correlations"] = std::move(cj);
    }
    if (vp) j["variance_partition"] = variance_partition_json(*vp);
    return j;
}

// ---------------------------------------------------------------------
// Pooled report
// ---------------------------------------------------------------------

std::string pooled_text(const PooledResult& pooled) {
    std::ostringstream out;
    out << "Pooled analysis over M = " << pooled.m << " plausible values (Rubin's rules)\n";
    deletion_text(out, pooled.deletion);
    out << "\n";
    out << "  " << pad("parameter", 14, true) << pad("estimate", 12) << pad("se", 10)
        << pad("df", 10) << pad("p", 11) << pad("U_bar", 12) << pad("B", 12) << "\n";
    for (const auto& pp : pooled.params) {
        out << "  " << pad(pp.name, 14, true) << pad(num(pp.pooled.estimate, 4), 12)
            << pad(num(pp.pooled.se, 4), 10) << pad(num(pp.pooled.df, 1), 10)
            << pad(sci(pp.pooled.p), 11) << pad(num(pp.pooled.u_bar, 5), 12)
            << pad(num(pp.pooled.b, 5), 12) << "\n";
    }
    out << "  total variance T = U_bar + (1 + 1/M) * B\n\n";
    out << "Variance components, mean across fits (descriptive):\n";
    out << "  tau00 = " << num(pooled.vc_mean.tau00(), 4) << "   sigma2 = "
        << num(pooled.vc_mean.sigma2, 4) << "\n";
    return out.str();
}

ordered_json pooled_json(const PooledResult& pooled) {
    ordered_json j;
    j["kind"] = "pooled";
    j["m"] = pooled.m;
    j["deletion"] = deletion_json(pooled.deletion);
    ordered_json params = ordered_json::array();
    for (const auto& pp : pooled.params) {
        ordered_json pj;
        pj["name"] = pp.name;
        pj["estimate"] = pp.pooled.estimate;
        pj["se"] = pp.pooled.se;
        pj["df"] = json_safe(pp.pooled.df);
        pj["p"] = json_safe(pp.pooled.p);
        pj["u_bar"] = pp.pooled.u_bar;
        pj["b"] = pp.pooled.b;
        pj["t_var"] = pp.pooled.t_var;
        params.push_back(std::move(pj));
    }
    j["parameters"] = std::move(params);
    ordered_json vc;
    vc["tau"] = matrix_json(pooled.vc_mean.tau);
    vc["sigma2"] = pooled.vc_mean.sigma2;
    j["variance_components_mean"] = std::move(vc);

    ordered_json fits = ordered_json::array();
    for (const auto& f : pooled.fits) fits.push_back(fit_json(f, nullptr, nullptr, nullptr));
    j["per_pv_fits"] = std::move(fits);
    return j;
}

// ---------------------------------------------------------------------
// Recode audit
// ---------------------------------------------------------------------

std::string audit_text(const std::vector<RuleAudit>& audits) {
    std::ostringstream out;
    out << "Recode audit:\n";
    out << "  " << pad("rule", 9, true) << pad("output", 14, true) << pad("applied", 10)
        << pad("missing", 10) << pad("unmapped", 10) << "\n";
    for (const auto& a : audits) {
        out << "  " << pad(a.kind, 9, true) << pad(a.output, 14, true)
            << pad(std::to_string(a.applied), 10) << pad(std::to_string(a.missing), 10)
            << pad(std::to_string(a.unmapped_to_missing), 10) << "\n";
    }
    return out.str();
}

ordered_json audit_json(const std::vector<RuleAudit>& audits) {
    ordered_json j;
    j["kind"] = "recode_audit";
    ordered_json rules = ordered_json::array();
    for (const auto& a : audits) {
        ordered_json aj;
        aj["rule"] = a.kind;
        aj["output"] = a.output;
        aj["applied"] = a.applied;
        aj["missing"] = a.missing;
        aj["unmapped_to_missing"] = a.unmapped_to_missing;
        rules.push_back(std::move(aj));
    }
    j["rules"] = std::move(rules);
    return j;
}

}  // namespace hlm::report
