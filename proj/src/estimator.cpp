#include "hlm/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hlm/errors.hpp"
#include "hlm/stats.hpp"

namespace hlm {

namespace {

constexpr double kLogDiagFloor = -20.0;  // Lambda diagonal >= e^-20
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower-triangular square root of a PSD matrix, via jittered LLT.
Eigen::MatrixXd psd_cholesky(const Eigen::MatrixXd& m) {
    const auto n = m.rows();
    const double jitter = 1e-12 * (1.0 + m.trace());
    Eigen::MatrixXd work = m;
    for (int tries = 0; tries < 8; ++tries) {
        Eigen::LLT<Eigen::MatrixXd> llt(work);
        if (llt.info() == Eigen::Success) return llt.matrixL();
        work += jitter * std::pow(10.0, tries) * Eigen::MatrixXd::Identity(n, n);
    }
    throw SpecError("psd_cholesky: matrix not positive semi-definite");
}

}  // namespace

// ---------------------------------------------------------------------
// Design construction
// ---------------------------------------------------------------------

Design build_design(const ModelSpec& spec, const Dataset& ds) {
    spec.validate();

    Design d;
    d.groups = build_group_index(ds);
    d.J = d.groups.J;
    d.N = ds.n_rows();
    if (d.J < 2)
        throw SpecError("J >= 2 required (dataset has a single cluster)");

    // Complete numeric cases are a precondition; deletion happens upstream.
    for (const auto& var : spec.variables()) {
        const Column& col = ds.column(var);
        for (std::size_t r = 0; r < ds.n_rows(); ++r)
            if (!col.is_number(r))
                throw DataError("fit requires complete cases: variable \"" + var +
                                "\" is not numeric at row " + std::to_string(r + 1) +
                                " (run listwise deletion first)");
    }

    d.p = spec.n_fixed();
    d.q = spec.n_random();
    if (d.N <= static_cast<std::size_t>(d.p) + 2)
        throw SpecError("N > p + 2 required: N=" + std::to_string(d.N) +
                        ", fixed effects p=" + std::to_string(d.p));

    // Fixed-effect columns over all rows, in order.
    Eigen::MatrixXd x_all(d.N, d.p);
    x_all.col(0).setOnes();
    d.fixed_names.push_back("intercept");
    d.fixed_level.push_back(0);
    int c = 1;
    for (const auto& term : spec.level1) {
        const Column& col = ds.column(term.name);
        Eigen::VectorXd v(d.N);
        for (std::size_t r = 0; r < d.N; ++r) v[static_cast<Eigen::Index>(r)] = col.values[r];
        if (term.centering == Centering::GrandMean) {
            const double gm = v.mean();
            v.array() -= gm;
            d.grand_means.emplace_back(term.name, gm);
        }
        x_all.col(c++) = v;
        d.fixed_names.push_back(term.name);
        d.fixed_level.push_back(1);
    }
    for (const auto& w : spec.level2) {
        const Column& col = ds.column(w);
        for (std::size_t r = 0; r < d.N; ++r)
            x_all(static_cast<Eigen::Index>(r), c) = col.values[r];
        d.fixed_names.push_back(w);
        d.fixed_level.push_back(2);
        ++c;
    }

    // Level-2 predictors must not vary within a group.
    for (const auto& w : spec.level2) {
        const Column& col = ds.column(w);
        for (std::size_t j = 0; j < d.J; ++j) {
            const double v0 = col.values[d.groups.rows[j][0]];
            for (std::size_t r : d.groups.rows[j])
                if (col.values[r] != v0)
                    throw SpecError("level-2 predictor \"" + w +
                                    "\" varies within group \"" + d.groups.ids[j] + "\"");
        }
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x_all);
    if (qr.rank() < d.p)
        throw SpecError("singular fixed-effects design");

    const Column& ycol = ds.column(spec.outcome);
    Eigen::VectorXd y_all(d.N);
    for (std::size_t r = 0; r < d.N; ++r) y_all[static_cast<Eigen::Index>(r)] = ycol.values[r];
    const double y_var = (y_all.array() - y_all.mean()).square().sum();
    if (y_var <= 0.0)
        throw DataError("outcome \"" + spec.outcome + "\" has zero variance");

    // Random-effect columns: intercept plus the flagged level-1 terms
    // (already centered inside x_all).
    std::vector<int> z_cols{0};
    d.random_names.push_back("intercept");
    c = 1;
    for (const auto& term : spec.level1) {
        if (term.random_slope) {
            z_cols.push_back(c);
            d.random_names.push_back(term.name);
        }
        ++c;
    }

    d.X.reserve(d.J);
    d.Z.reserve(d.J);
    d.y.reserve(d.J);
    for (std::size_t j = 0; j < d.J; ++j) {
        const auto& rows = d.groups.rows[j];
        const auto nj = static_cast<Eigen::Index>(rows.size());
        Eigen::MatrixXd xj(nj, d.p), zj(nj, d.q);
        Eigen::VectorXd yj(nj);
        for (Eigen::Index i = 0; i < nj; ++i) {
            const auto r = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)]);
            xj.row(i) = x_all.row(r);
            yj[i] = y_all[r];
            for (int a = 0; a < d.q; ++a) zj(i, a) = x_all(r, z_cols[static_cast<std::size_t>(a)]);
        }
        d.X.push_back(std::move(xj));
        d.Z.push_back(std::move(zj));
        d.y.push_back(std::move(yj));
    }
    return d;
}

// ---------------------------------------------------------------------
// Profiled objective
// ---------------------------------------------------------------------

ProfiledObjective::ProfiledObjective(const Design& design, Method method)
    : p_(design.p), q_(design.q), n_total_(design.N), method_(method) {
    stats_.reserve(design.J);
    for (std::size_t j = 0; j < design.J; ++j) {
        GroupStats s;
        const auto& x = design.X[j];
        const auto& z = design.Z[j];
        const auto& y = design.y[j];
        s.czz = z.transpose() * z;
        s.czx = z.transpose() * x;
        s.cxx = x.transpose() * x;
        s.czy = z.transpose() * y;
        s.cxy = x.transpose() * y;
        s.cyy = y.squaredNorm();
        s.n = static_cast<std::size_t>(y.size());
        stats_.push_back(std::move(s));
    }
}

Eigen::MatrixXd ProfiledObjective::lambda_from_psi(const Eigen::VectorXd& psi) const {
    Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(q_, q_);
    int k = 0;
    for (int b = 0; b < q_; ++b)
        for (int a = b; a < q_; ++a, ++k)
            lambda(a, b) = (a == b) ? std::exp(psi[k]) : psi[k];
    return lambda;
}

Eigen::VectorXd ProfiledObjective::psi_from_lambda(const Eigen::MatrixXd& lambda) const {
    Eigen::VectorXd psi(dim());
    int k = 0;
    for (int b = 0; b < q_; ++b)
        for (int a = b; a < q_; ++a, ++k)
            psi[k] = (a == b) ? std::log(std::max(lambda(a, b), std::exp(kLogDiagFloor)))
                              : lambda(a, b);
    return psi;
}

// Shared per-evaluation state.
struct ProfiledObjective::Core {
    Eigen::MatrixXd lambda;
    Eigen::MatrixXd a;            // sum X' M^-1 X
    Eigen::VectorXd b;            // sum X' M^-1 y
    Eigen::VectorXd beta;
    double ymy = 0.0;             // sum y' M^-1 y
    double logdet_m = 0.0;
    double logdet_a = 0.0;
    double quad = 0.0;            // r' M^-1 r at the GLS solution
    double sigma2 = 0.0;
    double loglik = kNegInf;
    bool ok = false;
    // per-group pieces reused by the gradient
    std::vector<Eigen::MatrixXd> k_inv_ut;   // K^-1 (Lambda' Czx)
    std::vector<Eigen::VectorXd> k_inv_vt;   // K^-1 (Lambda' Czy)
    std::vector<Eigen::LLT<Eigen::MatrixXd>> k_llt;
};

ProfiledObjective::Core ProfiledObjective::core(const Eigen::VectorXd& psi) const {
    Core c;
    c.lambda = lambda_from_psi(psi);
    if (!c.lambda.allFinite()) return c;
    const int p = p_;
    c.a = Eigen::MatrixXd::Zero(p, p);
    c.b = Eigen::VectorXd::Zero(p);
    c.k_inv_ut.reserve(stats_.size());
    c.k_inv_vt.reserve(stats_.size());
    c.k_llt.reserve(stats_.size());

    for (const auto& s : stats_) {
        Eigen::MatrixXd k = Eigen::MatrixXd::Identity(q_, q_) +
                            c.lambda.transpose() * s.czz * c.lambda;
        Eigen::LLT<Eigen::MatrixXd> llt(k);
        if (llt.info() != Eigen::Success) return c;
        for (int i = 0; i < q_; ++i)
            c.logdet_m += 2.0 * std::log(llt.matrixL()(i, i));

        Eigen::MatrixXd ut = c.lambda.transpose() * s.czx;   // q x p
        Eigen::VectorXd vt = c.lambda.transpose() * s.czy;   // q
        Eigen::MatrixXd k_ut = llt.solve(ut);
        Eigen::VectorXd k_vt = llt.solve(vt);

        c.a.noalias() += s.cxx - ut.transpose() * k_ut;
        c.b.noalias() += s.cxy - ut.transpose() * k_vt;
        c.ymy += s.cyy - vt.dot(k_vt);

        c.k_inv_ut.push_back(std::move(k_ut));
        c.k_inv_vt.push_back(std::move(k_vt));
        c.k_llt.push_back(std::move(llt));
    }

    Eigen::LDLT<Eigen::MatrixXd> aldlt(c.a);
    if (aldlt.info() != Eigen::Success || !aldlt.isPositive()) return c;
    c.beta = aldlt.solve(c.b);
    c.quad = c.ymy - c.beta.dot(c.b);
    if (!(c.quad > 0.0)) return c;
    c.logdet_a = aldlt.vectorD().array().log().sum();

    const double n = static_cast<double>(n_total_);
    const double two_pi = 2.0 * M_PI;
    if (method_ == Method::ML) {
        c.sigma2 = c.quad / n;
        c.loglik = -0.5 * (c.logdet_m + n * std::log(c.sigma2) + n + n * std::log(two_pi));
    } else {
        const double nmp = n - p;
        c.sigma2 = c.quad / nmp;
        c.loglik = -0.5 * (c.logdet_m + c.logdet_a + nmp * std::log(c.sigma2) + nmp +
                           nmp * std::log(two_pi));
    }
    c.ok = std::isfinite(c.loglik);
    return c;
}

double ProfiledObjective::value(const Eigen::VectorXd& psi) const {
    Core c = core(psi);
    return c.ok ? c.loglik : kNegInf;
}

ProfiledObjective::Eval ProfiledObjective::evaluate(const Eigen::VectorXd& psi) const {
    Core c = core(psi);
    Eval e;
    e.ok = c.ok;
    e.loglik = c.loglik;
    e.sigma2 = c.sigma2;
    e.beta = c.beta;
    e.info = c.a;
    e.lambda = c.lambda;
    return e;
}

Eigen::VectorXd ProfiledObjective::gradient(const Eigen::VectorXd& psi) const {
    Core c = core(psi);
    if (!c.ok)
        throw SpecError("profiled objective not finite at requested point");

    Eigen::MatrixXd g1 = Eigen::MatrixXd::Zero(q_, q_);
    Eigen::MatrixXd g2 = Eigen::MatrixXd::Zero(q_, q_);
    Eigen::MatrixXd g3 = Eigen::MatrixXd::Zero(q_, q_);
    Eigen::LDLT<Eigen::MatrixXd> aldlt(c.a);

    for (std::size_t j = 0; j < stats_.size(); ++j) {
        const auto& s = stats_[j];
        // Z' M^-1 Z = Czz - (Czz Lambda) K^-1 (Czz Lambda)'
        Eigen::MatrixXd zl = s.czz * c.lambda;                       // q x q
        Eigen::MatrixXd w1 = s.czz - zl * c.k_llt[j].solve(zl.transpose());
        // Z' M^-1 X and Z' M^-1 r
        Eigen::MatrixXd w2 = s.czx - zl * c.k_inv_ut[j];
        Eigen::VectorXd zy = s.czy - zl * c.k_inv_vt[j];
        Eigen::VectorXd w = zy - w2 * c.beta;

        g1 += w1;
        g3.noalias() += w * w.transpose();
        if (method_ == Method::REML)
            g2.noalias() += w2 * aldlt.solve(w2.transpose());
    }

    const double n = static_cast<double>(n_total_);
    Eigen::MatrixXd dl_dlambda;
    if (method_ == Method::ML) {
        dl_dlambda = -(g1 - (n / c.quad) * g3) * c.lambda;
    } else {
        const double nmp = n - p_;
        dl_dlambda = -(g1 - g2 - (nmp / c.quad) * g3) * c.lambda;
    }

    Eigen::VectorXd grad(dim());
    int k = 0;
    for (int b = 0; b < q_; ++b)
        for (int a = b; a < q_; ++a, ++k)
            grad[k] = (a == b) ? c.lambda(a, a) * dl_dlambda(a, b) : dl_dlambda(a, b);
    return grad;
}

// ---------------------------------------------------------------------
// EM warm start (maximum likelihood flavor)
// ---------------------------------------------------------------------

namespace {

struct GroupCp {
    Eigen::MatrixXd czz, czx, cxx;
    Eigen::VectorXd czy, cxy;
    double cyy = 0.0;
    std::size_t n = 0;
};

std::vector<GroupCp> cross_products(const Design& d) {
    std::vector<GroupCp> cp;
    cp.reserve(d.J);
    for (std::size_t j = 0; j < d.J; ++j) {
        GroupCp s;
        s.czz = d.Z[j].transpose() * d.Z[j];
        s.czx = d.Z[j].transpose() * d.X[j];
        s.cxx = d.X[j].transpose() * d.X[j];
        s.czy = d.Z[j].transpose() * d.y[j];
        s.cxy = d.X[j].transpose() * d.y[j];
        s.cyy = d.y[j].squaredNorm();
        s.n = static_cast<std::size_t>(d.y[j].size());
        cp.push_back(std::move(s));
    }
    return cp;
}

struct EmState {
    Eigen::MatrixXd tau;
    double sigma2 = 0.0;
};

// One EM sweep for (beta, tau, sigma2), with beta held at its GLS value
// during the E-step. `loglik` reports the ML log-likelihood of the
// incoming state so callers can trace monotonicity.
EmState em_step(const std::vector<GroupCp>& cp, std::size_t n_total,
                const EmState& st, double& loglik) {
    const auto q = st.tau.rows();
    const auto p = cp[0].cxx.rows();
    const std::size_t nj_groups = cp.size();
    const double sigma2 = std::max(st.sigma2, 1e-300);

    const Eigen::MatrixXd lambda = psd_cholesky(st.tau / sigma2);
    const Eigen::MatrixXd ll = lambda * lambda.transpose();

    // GLS pass at the incoming state.
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd bvec = Eigen::VectorXd::Zero(p);
    double ymy = 0.0, logdet_m = 0.0;
    std::vector<Eigen::LLT<Eigen::MatrixXd>> llts;
    llts.reserve(nj_groups);
    for (const auto& s : cp) {
        Eigen::MatrixXd k = Eigen::MatrixXd::Identity(q, q) +
                            lambda.transpose() * s.czz * lambda;
        Eigen::LLT<Eigen::MatrixXd> llt(k);
        for (int i = 0; i < q; ++i) logdet_m += 2.0 * std::log(llt.matrixL()(i, i));
        const Eigen::MatrixXd ut = lambda.transpose() * s.czx;
        const Eigen::VectorXd vt = lambda.transpose() * s.czy;
        a.noalias() += s.cxx - ut.transpose() * llt.solve(ut);
        bvec.noalias() += s.cxy - ut.transpose() * llt.solve(vt);
        ymy += s.cyy - vt.dot(llt.solve(vt));
        llts.push_back(std::move(llt));
    }
    const Eigen::VectorXd beta = a.ldlt().solve(bvec);
    const double quad = ymy - beta.dot(bvec);
    const double n = static_cast<double>(n_total);
    loglik = -0.5 * (logdet_m + n * std::log(sigma2) + quad / sigma2 +
                     n * std::log(2.0 * M_PI));

    // E-step moments, then the joint M-step.
    Eigen::MatrixXd tau_new = Eigen::MatrixXd::Zero(q, q);
    Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd xty_adj = Eigen::VectorXd::Zero(p);
    std::vector<Eigen::VectorXd> u_hats(nj_groups);
    std::vector<Eigen::MatrixXd> s_mats(nj_groups);
    for (std::size_t j = 0; j < nj_groups; ++j) {
        const auto& s = cp[j];
        const Eigen::MatrixXd zl = s.czz * lambda;
        const Eigen::MatrixXd ut = lambda.transpose() * s.czx;
        const Eigen::VectorXd vt = lambda.transpose() * s.czy;
        // w = Z' M^-1 (y - X beta)
        const Eigen::VectorXd w = (s.czy - zl * llts[j].solve(vt)) -
                                  (s.czx - zl * llts[j].solve(ut)) * beta;
        const Eigen::MatrixXd zmz = s.czz - zl * llts[j].solve(zl.transpose());
        u_hats[j] = ll * w;
        s_mats[j] = sigma2 * (ll - ll * zmz * ll);
        tau_new += u_hats[j] * u_hats[j].transpose() + s_mats[j];
        xtx += s.cxx;
        xty_adj += s.cxy - s.czx.transpose() * u_hats[j];
    }
    tau_new /= static_cast<double>(nj_groups);

    const Eigen::VectorXd beta_new = xtx.ldlt().solve(xty_adj);
    double acc = 0.0;
    for (std::size_t j = 0; j < nj_groups; ++j) {
        const auto& s = cp[j];
        const Eigen::VectorXd& u = u_hats[j];
        const double ee = s.cyy - 2.0 * beta_new.dot(s.cxy) +
                          beta_new.dot(s.cxx * beta_new) -
                          2.0 * u.dot(s.czy - s.czx * beta_new) + u.dot(s.czz * u);
        acc += ee + (s_mats[j] * s.czz).trace();
    }

    EmState out;
    out.tau = 0.5 * (tau_new + tau_new.transpose());
    out.sigma2 = acc / n;
    return out;
}

}  // namespace

// ---------------------------------------------------------------------
// Homogeneity chi-square tests
// ---------------------------------------------------------------------

namespace {

// Per-group OLS tests of between-group variance in the requested random
// coefficients, against their model-implied values.
std::vector<VcTest> homogeneity_tests(const Design& d, const ModelSpec& spec,
                                      const Eigen::VectorXd& beta,
                                      bool include_slopes) {
    const int k_lvl1 = static_cast<int>(spec.level1.size());
    const int cols = 1 + k_lvl1;
    const int s_lvl2 = static_cast<int>(spec.level2.size());

    struct GroupOls {
        bool usable = false;
        Eigen::VectorXd coef;
        Eigen::MatrixXd xtx_inv;
        double ss = 0.0;
        double rdf = 0.0;
    };
    std::vector<GroupOls> ols(d.J);
    double pooled_ss = 0.0, pooled_df = 0.0;
    std::size_t usable = 0;
    for (std::size_t j = 0; j < d.J; ++j) {
        const auto nj = d.y[j].size();
        if (nj < cols + 1) continue;
        Eigen::MatrixXd x1 = d.X[j].leftCols(cols);
        Eigen::MatrixXd xtx = x1.transpose() * x1;
        Eigen::FullPivLU<Eigen::MatrixXd> lu(xtx);
        if (!lu.isInvertible()) continue;
        GroupOls g;
        g.xtx_inv = lu.inverse();
        g.coef = g.xtx_inv * (x1.transpose() * d.y[j]);
        const Eigen::VectorXd resid = d.y[j] - x1 * g.coef;
        g.ss = resid.squaredNorm();
        g.rdf = static_cast<double>(nj - cols);
        g.usable = true;
        pooled_ss += g.ss;
        pooled_df += g.rdf;
        ols[j] = std::move(g);
        ++usable;
    }
    if (pooled_df <= 0.0)
        throw SpecError("homogeneity test: no group has residual degrees of freedom");
    const double sigma2_pool = pooled_ss / pooled_df;

    std::vector<std::pair<std::string, int>> effects{{"intercept", 0}};
    if (include_slopes) {
        int cidx = 1;
        for (const auto& term : spec.level1) {
            if (term.random_slope) effects.emplace_back(term.name, cidx);
            ++cidx;
        }
    }

    std::vector<VcTest> tests;
    for (const auto& [label, col] : effects) {
        const int s_for = (col == 0) ? s_lvl2 : 0;
        VcTest t;
        t.effect = label;
        t.groups_used = usable;
        t.groups_excluded = d.J - usable;
        t.df = static_cast<int>(usable) - s_for - 1;
        if (t.df <= 0)
            throw SpecError("homogeneity test for \"" + label + "\": df <= 0");
        double h = 0.0;
        for (std::size_t j = 0; j < d.J; ++j) {
            if (!ols[j].usable) continue;
            double pred;
            if (col == 0) {
                pred = beta[0];
                for (int s = 0; s < s_lvl2; ++s)
                    pred += beta[1 + k_lvl1 + s] * d.X[j](0, 1 + k_lvl1 + s);
            } else {
                pred = beta[col];
            }
            const double v_hat = sigma2_pool * ols[j].xtx_inv(col, col);
            const double dev = ols[j].coef[col] - pred;
            h += dev * dev / v_hat;
        }
        t.chi2 = h;
        t.p = stats::chi_square_sf(h, t.df);
        tests.push_back(std::move(t));
    }
    return tests;
}

double df_for_effect(const ModelSpec& spec, int level, std::size_t n, std::size_t j) {
    if (spec.df_method == DfMethod::Residual)
        return static_cast<double>(n) - static_cast<double>(spec.n_fixed());
    const auto s = static_cast<double>(spec.level2.size());
    const auto k = static_cast<double>(spec.level1.size());
    if (level == 1)
        return static_cast<double>(n) - static_cast<double>(j) - k;
    return static_cast<double>(j) - s - 1.0;
}

}  // namespace

// ---------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------

FitResult fit(const ModelSpec& spec, const Dataset& ds) {
    Design d = build_design(spec, ds);
    ProfiledObjective obj(d, spec.method);
    const std::vector<GroupCp> cp = cross_products(d);

    FitResult res;
    res.n = d.N;
    res.j = d.J;
    res.method = spec.method;
    res.random_names = d.random_names;
    res.grand_means = d.grand_means;

    // --- initial values from OLS ---
    Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(d.p, d.p);
    Eigen::VectorXd xty = Eigen::VectorXd::Zero(d.p);
    double yy = 0.0;
    for (const auto& s : cp) {
        xtx += s.cxx;
        xty += s.cxy;
        yy += s.cyy;
    }
    const Eigen::VectorXd beta_ols = xtx.ldlt().solve(xty);
    const double rss = std::max(yy - beta_ols.dot(xty), 1e-12);
    const double s2 = rss / static_cast<double>(d.N - static_cast<std::size_t>(d.p));

    EmState st;
    st.sigma2 = 0.8 * s2;
    st.tau = Eigen::MatrixXd::Zero(d.q, d.q);
    st.tau(0, 0) = 0.2 * s2;
    for (int a = 1; a < d.q; ++a) {
        double zss = 0.0, zn = 0.0;
        for (const auto& s : cp) {
            zss += s.czz(a, a);
            zn += static_cast<double>(s.n);
        }
        st.tau(a, a) = 0.1 * s2 / std::max(zss / zn, 1e-8);
    }

    int iterations = 0;
    const int max_iter = spec.max_iter;

    // --- EM warm start (ML objective; monotone by construction) ---
    double prev = kNegInf;
    const int em_cap = std::min(max_iter, 100);
    for (int it = 0; it < em_cap && iterations < max_iter; ++it) {
        double ll = kNegInf;
        EmState next = em_step(cp, d.N, st, ll);
        ++iterations;
        res.em_deviance_trace.push_back(-2.0 * ll);
        st = next;
        if (std::isfinite(prev) && (ll - prev) / (std::fabs(prev) + 1.0) < 1e-4) break;
        prev = ll;
    }

    // --- quasi-Newton refinement on the requested objective ---
    Eigen::VectorXd psi = obj.psi_from_lambda(
        psd_cholesky(st.tau / std::max(st.sigma2, 1e-300)));
    const int dim = obj.dim();
    auto clamp_diag = [&](Eigen::VectorXd& v) {
        int k = 0;
        for (int b = 0; b < d.q; ++b)
            for (int a = b; a < d.q; ++a, ++k)
                if (a == b && v[k] < kLogDiagFloor) v[k] = kLogDiagFloor;
    };
    clamp_diag(psi);

    double f = -obj.value(psi);
    if (!std::isfinite(f)) {
        psi.setZero();
        f = -obj.value(psi);
    }
    Eigen::VectorXd g = -obj.gradient(psi);
    Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(dim, dim);
    double rel_change = kInf;

    const double gtol = 1e-7;
    while (iterations < max_iter) {
        if (g.lpNorm<Eigen::Infinity>() <= gtol && rel_change <= spec.tol) break;
        Eigen::VectorXd dir = -h_inv * g;
        if (dir.dot(g) >= 0.0) {
            h_inv.setIdentity();
            dir = -g;
        }
        double step = 1.0;
        const double slope = g.dot(dir);
        double f_new = kInf;
        Eigen::VectorXd psi_new;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            psi_new = psi + step * dir;
            clamp_diag(psi_new);
            f_new = -obj.value(psi_new);
            if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        ++iterations;
        if (!accepted || f_new > f) {
            // No improving step exists at this scale: numerically stationary.
            rel_change = 0.0;
            break;
        }
        Eigen::VectorXd g_new = -obj.gradient(psi_new);
        const Eigen::VectorXd sv = psi_new - psi;
        const Eigen::VectorXd yv = g_new - g;
        const double sy = sv.dot(yv);
        if (sy > 1e-12 * sv.norm() * yv.norm()) {
            const Eigen::MatrixXd hy = h_inv * yv;
            const double yhy = yv.dot(hy);
            h_inv += ((sy + yhy) / (sy * sy)) * (sv * sv.transpose()) -
                     (hy * sv.transpose() + sv * hy.transpose()) / sy;
        }
        rel_change = (f - f_new) / (std::fabs(f_new) + 1.0);
        psi = psi_new;
        f = f_new;
        g = g_new;
    }

    // --- Newton polish to drive the gradient toward zero ---
    for (int polish = 0; polish < 10 && iterations < max_iter; ++polish) {
        g = -obj.gradient(psi);
        const double gn = g.lpNorm<Eigen::Infinity>();
        if (gn <= 1e-9) break;
        Eigen::MatrixXd hess(dim, dim);
        for (int k = 0; k < dim; ++k) {
            const double h = 1e-5 * std::max(1.0, std::fabs(psi[k]));
            Eigen::VectorXd hi = psi, lo = psi;
            hi[k] += h;
            lo[k] -= h;
            hess.col(k) = (-obj.gradient(hi) + obj.gradient(lo)) / (2.0 * h);
        }
        hess = 0.5 * (hess + hess.transpose());
        Eigen::LDLT<Eigen::MatrixXd> hldlt(hess);
        Eigen::VectorXd dstep = hldlt.info() == Eigen::Success
                                    ? Eigen::VectorXd(-hldlt.solve(g))
                                    : Eigen::VectorXd(-g);
        double scale = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 30; ++ls) {
            Eigen::VectorXd cand = psi + scale * dstep;
            clamp_diag(cand);
            const double fc = -obj.value(cand);
            if (std::isfinite(fc)) {
                const double gc = obj.gradient(cand).lpNorm<Eigen::Infinity>();
                if (fc <= f + 1e-12 * (std::fabs(f) + 1.0) || gc < gn) {
                    rel_change = std::min(rel_change,
                                          std::max(0.0, (f - fc) / (std::fabs(fc) + 1.0)));
                    psi = cand;
                    f = fc;
                    accepted = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        ++iterations;
        if (!accepted) break;
    }

    res.iterations = iterations;
    res.final_rel_change = rel_change;
    res.converged = std::isfinite(f) && rel_change <= spec.tol && iterations < max_iter;
    res.psi_hat = psi;

    // --- extraction ---
    ProfiledObjective::Eval ev = obj.evaluate(psi);
    if (!ev.ok)
        throw SpecError("estimation failed: objective not finite at optimum");
    res.loglik = ev.loglik;
    res.deviance = -2.0 * ev.loglik;
    res.vc.sigma2 = ev.sigma2;
    res.vc.tau = ev.sigma2 * ev.lambda * ev.lambda.transpose();

    // Boundary detection; negligible components are reported as exact zeros.
    {
        int k = 0;
        for (int b = 0; b < d.q; ++b)
            for (int a = b; a < d.q; ++a, ++k)
                if (a == b && psi[k] <= kLogDiagFloor + 0.5) res.tau_boundary = true;
    }
    for (int a = 0; a < d.q; ++a) {
        if (res.vc.tau(a, a) < 1e-8 * res.vc.sigma2) {
            res.tau_boundary = true;
            for (int b = 0; b < d.q; ++b) {
                res.vc.tau(a, b) = 0.0;
                res.vc.tau(b, a) = 0.0;
            }
        }
    }

    const Eigen::MatrixXd cov =
        ev.sigma2 * ev.info.ldlt().solve(Eigen::MatrixXd::Identity(d.p, d.p));
    res.fixed_cov = cov;
    for (int c = 0; c < d.p; ++c) {
        FixedEffect fe;
        fe.name = d.fixed_names[static_cast<std::size_t>(c)];
        fe.level = d.fixed_level[static_cast<std::size_t>(c)];
        fe.estimate = ev.beta[c];
        fe.se = std::sqrt(std::max(cov(c, c), 0.0));
        fe.t = fe.se > 0.0 ? fe.estimate / fe.se : 0.0;
        fe.df = df_for_effect(spec, fe.level, d.N, d.J);
        fe.p = fe.df >= 1.0 ? stats::two_sided_t_p(fe.t, fe.df)
                            : std::numeric_limits<double>::quiet_NaN();
        res.fixed.push_back(std::move(fe));
    }

    res.reliability = intercept_reliability(res.vc, d.groups.sizes);
    res.vc_tests = homogeneity_tests(d, spec, ev.beta, /*include_slopes=*/true);
    return res;
}

// ---------------------------------------------------------------------
// GLS at fixed variance components
// ---------------------------------------------------------------------

GlsResult gls_fixed_effects(const VarianceComponents& vc,
                            const std::vector<Eigen::MatrixXd>& x_blocks,
                            const std::vector<Eigen::MatrixXd>& z_blocks,
                            const std::vector<Eigen::VectorXd>& y_blocks) {
    if (x_blocks.empty() || x_blocks.size() != z_blocks.size() ||
        x_blocks.size() != y_blocks.size())
        throw SpecError("gls_fixed_effects: block lists must align");
    const auto p = x_blocks[0].cols();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
    for (std::size_t j = 0; j < x_blocks.size(); ++j) {
        const auto& x = x_blocks[j];
        const auto& z = z_blocks[j];
        const auto& y = y_blocks[j];
        const auto n = x.rows();
        Eigen::MatrixXd v = z * vc.tau * z.transpose() +
                            vc.sigma2 * Eigen::MatrixXd::Identity(n, n);
        Eigen::LLT<Eigen::MatrixXd> llt(v);
        if (llt.info() != Eigen::Success)
            throw SpecError("gls_fixed_effects: V_j not positive definite in group " +
                            std::to_string(j));
        a.noalias() += x.transpose() * llt.solve(x);
        b.noalias() += x.transpose() * llt.solve(y);
    }
    Eigen::LDLT<Eigen::MatrixXd> aldlt(a);
    if (aldlt.info() != Eigen::Success || !aldlt.isPositive())
        throw SpecError("gls_fixed_effects: singular information matrix");
    GlsResult out;
    out.estimates = aldlt.solve(b);
    out.covariance = aldlt.solve(Eigen::MatrixXd::Identity(p, p));
    return out;
}

Reliability intercept_reliability(const VarianceComponents& vc,
                                  const std::vector<std::size_t>& sizes) {
    const double tau00 = vc.tau00();
    if (tau00 <= 0.0 && vc.sigma2 <= 0.0)
        throw SpecError("reliability undefined: both variance components are zero");
    Reliability rel;
    rel.per_group.reserve(sizes.size());
    double sum = 0.0;
    for (std::size_t nj : sizes) {
        const double lam = tau00 > 0.0
                               ? tau00 / (tau00 + vc.sigma2 / static_cast<double>(nj))
                               : 0.0;
        rel.per_group.push_back(lam);
        sum += lam;
    }
    rel.mean = sizes.empty() ? 0.0 : sum / static_cast<double>(sizes.size());
    return rel;
}

VcTest tau_chi_square_test(const Dataset& ds, const ModelSpec& spec,
                           const FitResult& fit_result) {
    Design d = build_design(spec, ds);
    Eigen::VectorXd beta(d.p);
    for (int c = 0; c < d.p; ++c)
        beta[c] = fit_result.fixed[static_cast<std::size_t>(c)].estimate;
    auto tests = homogeneity_tests(d, spec, beta, /*include_slopes=*/false);
    return tests.front();
}

}  // namespace hlm
