#ifndef HLM_SIMULATOR_HPP
#define HLM_SIMULATOR_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hlm/dataset.hpp"

namespace hlm {

// One generated predictor. Level-2 predictors are drawn once per group
// and repeated down the group's rows.
struct PredictorSpec {
    enum class Dist { Normal, Cat3 };

    std::string name;
    int level = 1;                 // 1 or 2
    Dist dist = Dist::Normal;
    double mean = 0.0, sd = 1.0;   // Normal
    double p_neg = 1.0 / 3.0, p_zero = 1.0 / 3.0;  // Cat3 on {-1,0,1}
    double coef = 0.0;             // fixed-effect coefficient
    bool random_slope = false;     // level-1 only
};

struct SimConfig {
    std::size_t J = 0;
    std::vector<std::size_t> sizes;  // length 1 (constant) or J
    double intercept = 0.0;
    std::vector<PredictorSpec> predictors;
    Eigen::MatrixXd tau;             // q x q, q = 1 + #random slopes
    double sigma2 = 1.0;
    std::uint64_t seed = 1;
    std::string outcome_name = "y";
    std::string cluster_name = "cluster";

    std::size_t q() const;
    std::size_t size_of(std::size_t j) const;
    void validate() const;
};

// Draws y_ij = x_ij' gamma + z_ij' u_j + r_ij with u_j ~ N(0, tau) and
// r_ij ~ N(0, sigma2). Identical seeds give bit-identical datasets.
Dataset simulate(const SimConfig& cfg);

// Closed-form one-way ANOVA estimators for balanced intercept-only data:
// sigma2_hat = within-group mean square,
// tau00_hat  = max(0, (between MS - within MS) / n).
struct AnovaEstimates {
    double sigma2_hat = 0.0;
    double tau00_hat = 0.0;
    double between_ms = 0.0;
    double within_ms = 0.0;
};
AnovaEstimates anova_oracle(const Dataset& ds, const std::string& outcome);

// Named parameter presets. "paper-model0" is the unconditional two-level
// benchmark (J=140, n=33, intercept 609.14, tau00=2238.6, sigma2=8195.39);
// "paper-full" adds the six tutorial predictors.
SimConfig sim_preset(const std::string& name);

// Same clause-per-line grammar family as model specs:
//   groups N | size N | sizes N1 N2 ... | intercept X | sigma2 X
//   tau T00 [T10 T11 [T20 T21 T22 ...]]     (lower triangle, row-wise)
//   seed N | outcome NAME | cluster NAME
//   predictor NAME level=1|2 dist=normal|cat3 [mean=] [sd=]
//             [pneg=] [pzero=] coef= [random=yes|no]
SimConfig parse_sim_config(const std::string& text);
SimConfig load_sim_config(const std::string& path);

}  // namespace hlm

#endif
