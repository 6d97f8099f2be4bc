#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "hlm/errors.hpp"
#include "hlm/simulator.hpp"

using namespace hlm;
using testutil::make_dataset;

namespace {

SimConfig small_config() {
    SimConfig cfg;
    cfg.J = 8;
    cfg.sizes = {5};
    cfg.intercept = 10.0;
    cfg.tau = Eigen::MatrixXd::Constant(1, 1, 4.0);
    cfg.sigma2 = 1.0;
    cfg.seed = 42;
    cfg.predictors = {{.name = "x", .level = 1, .mean = 0.0, .sd = 1.0, .coef = 2.0}};
    return cfg;
}

}  // namespace

TEST_CASE("simulate: noiseless data equals the fixed-effect surface") {
    SimConfig cfg = small_config();
    cfg.tau.setZero();
    cfg.sigma2 = 0.0;
    Dataset ds = simulate(cfg);
    const Column& y = ds.column("y");
    const Column& x = ds.column("x");
    for (std::size_t r = 0; r < ds.n_rows(); ++r)
        CHECK(y.values[r] == doctest::Approx(10.0 + 2.0 * x.values[r]).epsilon(1e-14));
}

TEST_CASE("simulate: identical seeds give bit-identical datasets") {
    SimConfig cfg = small_config();
    Dataset a = simulate(cfg);
    Dataset b = simulate(cfg);
    for (const auto& name : a.names()) {
        const Column& ca = a.column(name);
        const Column& cb = b.column(name);
        REQUIRE(ca.size() == cb.size());
        for (std::size_t r = 0; r < ca.size(); ++r)
            CHECK(ca.values[r] == cb.values[r]);  // exact bit equality
    }
    cfg.seed = 43;
    Dataset c = simulate(cfg);
    bool any_diff = false;
    for (std::size_t r = 0; r < c.n_rows(); ++r)
        if (c.column("y").values[r] != a.column("y").values[r]) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("simulate: non-PSD tau is rejected") {
    SimConfig cfg = small_config();
    cfg.tau = Eigen::MatrixXd::Constant(1, 1, -1.0);
    CHECK_THROWS_WITH_AS(simulate(cfg), doctest::Contains("positive semi-definite"),
                         SpecError);
}

TEST_CASE("simulate: output satisfies dataset invariants") {
    SimConfig cfg = sim_preset("paper-full");
    cfg.J = 20;
    cfg.seed = 5;
    Dataset ds = simulate(cfg);
    CHECK(ds.n_rows() == 20 * 33);
    GroupIndex gi = build_group_index(ds);
    CHECK(gi.J == 20);
    std::size_t total = 0;
    for (auto s : gi.sizes) total += s;
    CHECK(total == ds.n_rows());
    // level-2 predictors constant within each group
    for (const auto* name : {"stueco", "schlo", "schrc"}) {
        const Column& col = ds.column(name);
        for (std::size_t j = 0; j < gi.J; ++j) {
            const double v0 = col.values[gi.rows[j][0]];
            for (std::size_t r : gi.rows[j]) CHECK(col.values[r] == v0);
        }
    }
}

TEST_CASE("anova_oracle: hand computations") {
    // groups {0,0} and {10,10}: between MS 100, within MS 0, tau = 50
    Dataset ds = make_dataset({"g", "y"}, {{1, 1, 2, 2}, {0, 0, 10, 10}}, "g");
    AnovaEstimates est = anova_oracle(ds, "y");
    CHECK(est.between_ms == doctest::Approx(100.0));
    CHECK(est.within_ms == doctest::Approx(0.0));
    CHECK(est.sigma2_hat == doctest::Approx(0.0));
    CHECK(est.tau00_hat == doctest::Approx(50.0));
}

TEST_CASE("anova_oracle: all values equal gives (0, 0)") {
    Dataset ds = make_dataset({"g", "y"}, {{1, 1, 2, 2}, {3, 3, 3, 3}}, "g");
    AnovaEstimates est = anova_oracle(ds, "y");
    CHECK(est.sigma2_hat == doctest::Approx(0.0));
    CHECK(est.tau00_hat == doctest::Approx(0.0));
}

TEST_CASE("anova_oracle: equal group means clamp tau at zero") {
    // within-group variance only: between MS = 0 < within MS
    Dataset ds = make_dataset({"g", "y"}, {{1, 1, 2, 2}, {-1, 1, -1, 1}}, "g");
    AnovaEstimates est = anova_oracle(ds, "y");
    CHECK(est.between_ms == doctest::Approx(0.0));
    CHECK(est.within_ms == doctest::Approx(2.0));
    CHECK(est.tau00_hat == doctest::Approx(0.0));  // negative raw estimate clamped
}

TEST_CASE("anova_oracle: unbalanced input is rejected") {
    Dataset ds = make_dataset({"g", "y"}, {{1, 1, 2}, {0, 1, 2}}, "g");
    CHECK_THROWS_WITH_AS(anova_oracle(ds, "y"), doctest::Contains("balanced"), DataError);
}

TEST_CASE("simulate: empirical ICC converges to tau00/(tau00+sigma2)") {
    SimConfig cfg;
    cfg.J = 2000;
    cfg.sizes = {30};
    cfg.intercept = 0.0;
    cfg.tau = Eigen::MatrixXd::Constant(1, 1, 1.0);
    cfg.sigma2 = 3.0;  // true ICC = 0.25
    cfg.seed = 77;
    Dataset ds = simulate(cfg);
    AnovaEstimates est = anova_oracle(ds, "y");
    const double icc_emp = est.tau00_hat / (est.tau00_hat + est.sigma2_hat);
    CHECK(std::fabs(icc_emp - 0.25) < 0.01);
}

TEST_CASE("sim config text round-trips through the parser") {
    const std::string text =
        "groups 12\n"
        "size 7\n"
        "intercept 600\n"
        "sigma2 50\n"
        "tau 9 0.5 4\n"
        "seed 3\n"
        "outcome mat\n"
        "cluster school\n"
        "predictor mo level=1 dist=normal mean=2.5 sd=1.2 coef=6.8 random=yes\n"
        "predictor stueco level=2 dist=cat3 pneg=0.3 pzero=0.4 coef=19\n";
    SimConfig cfg = parse_sim_config(text);
    CHECK(cfg.J == 12);
    CHECK(cfg.size_of(3) == 7);
    CHECK(cfg.q() == 2);
    CHECK(cfg.tau(0, 0) == 9.0);
    CHECK(cfg.tau(1, 0) == 0.5);
    CHECK(cfg.tau(0, 1) == 0.5);
    CHECK(cfg.tau(1, 1) == 4.0);
    CHECK(cfg.predictors[0].random_slope);
    CHECK(cfg.predictors[1].dist == PredictorSpec::Dist::Cat3);

    Dataset ds = simulate(cfg);
    CHECK(ds.n_rows() == 84);
    CHECK(ds.cluster_column() == "school");
    CHECK(ds.has_column("mat"));
}

TEST_CASE("sim preset paper-model0 carries the benchmark parameters") {
    SimConfig cfg = sim_preset("paper-model0");
    CHECK(cfg.J == 140);
    CHECK(cfg.size_of(0) == 33);
    CHECK(cfg.intercept == doctest::Approx(609.14));
    CHECK(cfg.tau(0, 0) == doctest::Approx(2238.6));
    CHECK(cfg.sigma2 == doctest::Approx(8195.39));
    CHECK_THROWS_AS(sim_preset("no-such-preset"), SpecError);
}
