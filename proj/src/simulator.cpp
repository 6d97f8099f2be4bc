#include "hlm/simulator.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hlm/errors.hpp"
#include "hlm/rng.hpp"

namespace hlm {

std::size_t SimConfig::q() const {
    std::size_t q = 1;
    for (const auto& p : predictors)
        if (p.level == 1 && p.random_slope) ++q;
    return q;
}

std::size_t SimConfig::size_of(std::size_t j) const {
    return sizes.size() == 1 ? sizes[0] : sizes[j];
}

void SimConfig::validate() const {
    if (J < 1) throw SpecError("sim config: groups must be >= 1");
    if (sizes.empty() || (sizes.size() != 1 && sizes.size() != J))
        throw SpecError("sim config: sizes must be one constant or one per group");
    for (std::size_t s : sizes)
        if (s < 1) throw SpecError("sim config: group sizes must be >= 1");
    if (sigma2 < 0.0) throw SpecError("sim config: sigma2 must be >= 0");
    const auto nq = static_cast<Eigen::Index>(q());
    if (tau.rows() != nq || tau.cols() != nq)
        throw SpecError("sim config: tau must be " + std::to_string(nq) + "x" +
                        std::to_string(nq));
    if (!tau.isApprox(tau.transpose(), 1e-12))
        throw SpecError("sim config: tau must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tau);
    const double scale = std::max(1.0, tau.cwiseAbs().maxCoeff());
    if (es.eigenvalues().minCoeff() < -1e-10 * scale)
        throw SpecError("sim config: tau is not positive semi-definite");
    for (const auto& p : predictors) {
        if (p.level != 1 && p.level != 2)
            throw SpecError("sim config: predictor level must be 1 or 2");
        if (p.level == 2 && p.random_slope)
            throw SpecError("sim config: level-2 predictors cannot have random slopes");
        if (p.dist == PredictorSpec::Dist::Cat3 &&
            (p.p_neg < 0 || p.p_zero < 0 || p.p_neg + p.p_zero > 1.0))
            throw SpecError("sim config: cat3 probabilities invalid");
    }
}

Dataset simulate(const SimConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);

    const std::size_t q = cfg.q();
    // PSD square root of tau for drawing u_j.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cfg.tau);
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
    Eigen::MatrixXd tau_sqrt =
        es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
    const double resid_sd = std::sqrt(cfg.sigma2);

    std::size_t n_total = 0;
    for (std::size_t j = 0; j < cfg.J; ++j) n_total += cfg.size_of(j);

    std::vector<double> cluster(n_total);
    std::vector<std::vector<double>> pred(cfg.predictors.size(),
                                          std::vector<double>(n_total));
    std::vector<double> outcome(n_total);

    // Indices of level-1 predictors with random slopes, in declaration order.
    std::vector<std::size_t> slope_idx;
    for (std::size_t k = 0; k < cfg.predictors.size(); ++k)
        if (cfg.predictors[k].level == 1 && cfg.predictors[k].random_slope)
            slope_idx.push_back(k);

    std::size_t row = 0;
    for (std::size_t j = 0; j < cfg.J; ++j) {
        const std::size_t nj = cfg.size_of(j);

        // Level-2 predictor values for this group, then the random effects.
        std::vector<double> lvl2(cfg.predictors.size(), 0.0);
        for (std::size_t k = 0; k < cfg.predictors.size(); ++k) {
            const auto& p = cfg.predictors[k];
            if (p.level != 2) continue;
            lvl2[k] = p.dist == PredictorSpec::Dist::Cat3
                          ? static_cast<double>(rng.categorical3(p.p_neg, p.p_zero))
                          : rng.normal(p.mean, p.sd);
        }
        Eigen::VectorXd z(q);
        for (std::size_t a = 0; a < q; ++a) z[a] = rng.normal();
        Eigen::VectorXd u = tau_sqrt * z;

        for (std::size_t i = 0; i < nj; ++i, ++row) {
            cluster[row] = static_cast<double>(j + 1);
            double mean = cfg.intercept + u[0];
            for (std::size_t k = 0; k < cfg.predictors.size(); ++k) {
                const auto& p = cfg.predictors[k];
                double x;
                if (p.level == 2) {
                    x = lvl2[k];
                } else {
                    x = p.dist == PredictorSpec::Dist::Cat3
                            ? static_cast<double>(rng.categorical3(p.p_neg, p.p_zero))
                            : rng.normal(p.mean, p.sd);
                }
                pred[k][row] = x;
                mean += p.coef * x;
            }
            for (std::size_t s = 0; s < slope_idx.size(); ++s)
                mean += u[s + 1] * pred[slope_idx[s]][row];
            outcome[row] = resid_sd > 0.0 ? mean + resid_sd * rng.normal() : mean;
        }
    }

    std::vector<std::string> names;
    std::vector<Column> cols;
    names.push_back(cfg.cluster_name);
    cols.push_back(Column::from_values(std::move(cluster)));
    for (std::size_t k = 0; k < cfg.predictors.size(); ++k) {
        names.push_back(cfg.predictors[k].name);
        cols.push_back(Column::from_values(std::move(pred[k])));
    }
    names.push_back(cfg.outcome_name);
    cols.push_back(Column::from_values(std::move(outcome)));
    return Dataset(std::move(names), std::move(cols), cfg.cluster_name);
}

AnovaEstimates anova_oracle(const Dataset& ds, const std::string& outcome) {
    const Column& y = ds.column(outcome);
    GroupIndex gi = build_group_index(ds);
    if (gi.J < 2)
        throw DataError("anova_oracle: at least 2 groups required");
    const std::size_t n = gi.sizes[0];
    for (std::size_t s : gi.sizes)
        if (s != n)
            throw DataError("anova_oracle: balanced groups required");
    if (n < 2)
        throw DataError("anova_oracle: group size must be >= 2");

    const double N = static_cast<double>(gi.n_total);
    double grand = 0.0;
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        if (!y.is_number(r))
            throw DataError("anova_oracle: outcome has a non-numeric cell");
        grand += y.values[r];
    }
    grand /= N;

    double ss_within = 0.0, ss_between = 0.0;
    for (std::size_t j = 0; j < gi.J; ++j) {
        double gm = 0.0;
        for (std::size_t r : gi.rows[j]) gm += y.values[r];
        gm /= static_cast<double>(n);
        for (std::size_t r : gi.rows[j]) {
            const double d = y.values[r] - gm;
            ss_within += d * d;
        }
        const double b = gm - grand;
        ss_between += static_cast<double>(n) * b * b;
    }

    AnovaEstimates est;
    est.within_ms = ss_within / (N - static_cast<double>(gi.J));
    est.between_ms = ss_between / (static_cast<double>(gi.J) - 1.0);
    est.sigma2_hat = est.within_ms;
    est.tau00_hat = std::max(0.0, (est.between_ms - est.within_ms) / static_cast<double>(n));
    return est;
}

SimConfig sim_preset(const std::string& name) {
    SimConfig cfg;
    if (name == "paper-model0") {
        cfg.J = 140;
        cfg.sizes = {33};
        cfg.intercept = 609.14;
        cfg.tau = Eigen::MatrixXd::Constant(1, 1, 2238.6);
        cfg.sigma2 = 8195.39;
        cfg.outcome_name = "mat";
        cfg.cluster_name = "school";
        return cfg;
    }
    if (name == "paper-full") {
        cfg.J = 140;
        cfg.sizes = {33};
        cfg.intercept = 597.93;
        cfg.tau = Eigen::MatrixXd::Constant(1, 1, 1235.7);
        cfg.sigma2 = 7785.6;
        cfg.outcome_name = "mat";
        cfg.cluster_name = "school";
        cfg.predictors = {
            {.name = "mo", .level = 1, .mean = 2.5, .sd = 1.30, .coef = 6.21},
            {.name = "fa", .level = 1, .mean = 2.6, .sd = 1.25, .coef = 7.32},
            {.name = "hp", .level = 1, .mean = 4.53, .sd = 1.78, .coef = 9.09},
            {.name = "stueco", .level = 2, .dist = PredictorSpec::Dist::Cat3,
             .p_neg = 0.43, .p_zero = 0.10, .coef = 19.41},
            {.name = "schlo", .level = 2, .dist = PredictorSpec::Dist::Cat3,
             .p_neg = 0.47, .p_zero = 0.15, .coef = 23.41},
            {.name = "schrc", .level = 2, .mean = 66.24, .sd = 71.4, .coef = 0.2},
        };
        return cfg;
    }
    throw SpecError("unknown preset \"" + name + "\"");
}

namespace {

double must_num(const std::string& tok, const std::string& where) {
    double v = 0.0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
        throw SpecError(where + "\"" + tok + "\" is not a number");
    return v;
}

}  // namespace

SimConfig parse_sim_config(const std::string& text) {
    SimConfig cfg;
    std::vector<double> tau_lower;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::vector<std::string> tok;
        std::string t;
        while (ls >> t) {
            if (t[0] == '#') break;
            tok.push_back(t);
        }
        if (tok.empty()) continue;
        const std::string where = "sim config line " + std::to_string(lineno) + ": ";
        const std::string& key = tok[0];
        if (key == "groups") {
            cfg.J = static_cast<std::size_t>(must_num(tok.at(1), where));
        } else if (key == "size") {
            cfg.sizes = {static_cast<std::size_t>(must_num(tok.at(1), where))};
        } else if (key == "sizes") {
            cfg.sizes.clear();
            for (std::size_t i = 1; i < tok.size(); ++i)
                cfg.sizes.push_back(static_cast<std::size_t>(must_num(tok[i], where)));
        } else if (key == "intercept") {
            cfg.intercept = must_num(tok.at(1), where);
        } else if (key == "sigma2") {
            cfg.sigma2 = must_num(tok.at(1), where);
        } else if (key == "seed") {
            cfg.seed = static_cast<std::uint64_t>(must_num(tok.at(1), where));
        } else if (key == "outcome") {
            cfg.outcome_name = tok.at(1);
        } else if (key == "cluster") {
            cfg.cluster_name = tok.at(1);
        } else if (key == "tau") {
            tau_lower.clear();
            for (std::size_t i = 1; i < tok.size(); ++i)
                tau_lower.push_back(must_num(tok[i], where));
        } else if (key == "predictor") {
            PredictorSpec p;
            p.name = tok.at(1);
            for (std::size_t i = 2; i < tok.size(); ++i) {
                const std::string& o = tok[i];
                auto eq = o.find('=');
                if (eq == std::string::npos)
                    throw SpecError(where + "predictor options are key=value");
                const std::string k = o.substr(0, eq);
                const std::string v = o.substr(eq + 1);
                if (k == "level") p.level = static_cast<int>(must_num(v, where));
                else if (k == "dist") {
                    if (v == "normal") p.dist = PredictorSpec::Dist::Normal;
                    else if (v == "cat3") p.dist = PredictorSpec::Dist::Cat3;
                    else throw SpecError(where + "dist must be normal or cat3");
                } else if (k == "mean") p.mean = must_num(v, where);
                else if (k == "sd") p.sd = must_num(v, where);
                else if (k == "pneg") p.p_neg = must_num(v, where);
                else if (k == "pzero") p.p_zero = must_num(v, where);
                else if (k == "coef") p.coef = must_num(v, where);
                else if (k == "random") p.random_slope = (v == "yes");
                else throw SpecError(where + "unknown predictor option \"" + k + "\"");
            }
            cfg.predictors.push_back(std::move(p));
        } else {
            throw SpecError(where + "unknown clause \"" + key + "\"");
        }
    }

    const std::size_t q = cfg.q();
    if (tau_lower.empty() && q == 1) tau_lower = {0.0};
    if (tau_lower.size() != q * (q + 1) / 2)
        throw SpecError("sim config: tau needs " + std::to_string(q * (q + 1) / 2) +
                        " lower-triangle values for q=" + std::to_string(q));
    cfg.tau = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(q),
                                    static_cast<Eigen::Index>(q));
    std::size_t k = 0;
    for (std::size_t a = 0; a < q; ++a)
        for (std::size_t b = 0; b <= a; ++b) {
            cfg.tau(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = tau_lower[k];
            cfg.tau(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = tau_lower[k];
            ++k;
        }
    cfg.validate();
    return cfg;
}

SimConfig load_sim_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open sim config: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_sim_config(buf.str());
}

}  // namespace hlm
