#ifndef HLM_ESTIMATOR_HPP
#define HLM_ESTIMATOR_HPP

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hlm/dataset.hpp"
#include "hlm/model_spec.hpp"

namespace hlm {

struct VarianceComponents {
    Eigen::MatrixXd tau;   // q x q random-effect covariance
    double sigma2 = 0.0;   // level-1 residual variance

    double tau00() const { return tau.size() ? tau(0, 0) : 0.0; }
};

struct FixedEffect {
    std::string name;
    int level = 0;         // 0 intercept, 1 level-1 term, 2 level-2 term
    double estimate = 0.0;
    double se = 0.0;
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
};

// Homogeneity chi-square test of one random effect's between-group variance.
struct VcTest {
    std::string effect;
    double chi2 = 0.0;
    int df = 0;
    double p = 1.0;
    std::size_t groups_used = 0;
    std::size_t groups_excluded = 0;
};

struct Reliability {
    std::vector<double> per_group;
    double mean = 0.0;
};

struct FitResult {
    std::vector<FixedEffect> fixed;
    Eigen::MatrixXd fixed_cov;
    VarianceComponents vc;
    std::vector<std::string> random_names;  // "intercept", then slope terms
    std::vector<VcTest> vc_tests;
    double loglik = 0.0;
    double deviance = 0.0;
    Reliability reliability;
    bool converged = false;
    bool tau_boundary = false;
    int iterations = 0;
    double final_rel_change = 0.0;
    std::size_t n = 0, j = 0;
    Method method = Method::REML;
    std::vector<std::pair<std::string, double>> grand_means;  // centering constants

    // Optimizer internals kept for diagnostics: the unconstrained optimum
    // and the maximized-likelihood trace of the EM warm-start phase.
    Eigen::VectorXd psi_hat;
    std::vector<double> em_deviance_trace;
};

// Per-group design blocks of a prepared model. Column order of X:
// intercept, level-1 terms (centered as requested), level-2 terms.
// Z holds the intercept plus the flagged level-1 columns.
struct Design {
    std::vector<Eigen::MatrixXd> X;
    std::vector<Eigen::MatrixXd> Z;
    std::vector<Eigen::VectorXd> y;
    std::vector<std::string> fixed_names;
    std::vector<int> fixed_level;
    std::vector<std::string> random_names;
    GroupIndex groups;
    std::vector<std::pair<std::string, double>> grand_means;
    int p = 0, q = 0;
    std::size_t N = 0, J = 0;
};

// Builds and validates the design: complete numeric cases, J >= 2,
// N > p + 2, level-2 predictors constant within group, full-rank X.
Design build_design(const ModelSpec& spec, const Dataset& ds);

// Twice-profiled deviance machinery on the unconstrained scale psi:
// tau = sigma2 * Lambda Lambda' with Lambda lower-triangular, packed
// column-wise with log-transformed diagonal. Fixed effects are profiled
// by GLS and sigma2 in closed form, for ML or REML.
class ProfiledObjective {
public:
    ProfiledObjective(const Design& design, Method method);

    int dim() const { return q_ * (q_ + 1) / 2; }
    int q() const { return q_; }

    double value(const Eigen::VectorXd& psi) const;
    Eigen::VectorXd gradient(const Eigen::VectorXd& psi) const;

    struct Eval {
        double loglik = 0.0;
        double sigma2 = 0.0;
        Eigen::VectorXd beta;
        Eigen::MatrixXd info;        // sum X' M^-1 X; Var(beta) = sigma2 * info^-1
        Eigen::MatrixXd lambda;
        bool ok = false;
    };
    Eval evaluate(const Eigen::VectorXd& psi) const;

    Eigen::MatrixXd lambda_from_psi(const Eigen::VectorXd& psi) const;
    Eigen::VectorXd psi_from_lambda(const Eigen::MatrixXd& lambda) const;

private:
    struct GroupStats {
        Eigen::MatrixXd czz, czx, cxx;
        Eigen::VectorXd czy, cxy;
        double cyy = 0.0;
        std::size_t n = 0;
    };
    struct Core;
    Core core(const Eigen::VectorXd& psi) const;

    std::vector<GroupStats> stats_;
    int p_ = 0, q_ = 0;
    std::size_t n_total_ = 0;
    Method method_;
};

// Full estimation: EM warm start on the variance components followed by
// quasi-Newton refinement with a Newton polish; reports fixed effects,
// variance components with homogeneity tests, and reliabilities.
FitResult fit(const ModelSpec& spec, const Dataset& ds);

// fit() already honors random-slope flags; alias for call sites that
// emphasize the slope-variance workflow.
inline FitResult fit_random_slopes(const ModelSpec& spec, const Dataset& ds) {
    return fit(spec, ds);
}

struct GlsResult {
    Eigen::VectorXd estimates;
    Eigen::MatrixXd covariance;
};

// Generalized least squares at fixed variance components:
// estimates = (sum X_j' V_j^-1 X_j)^-1 sum X_j' V_j^-1 y_j with
// V_j = Z_j tau Z_j' + sigma2 I, covariance the inverted information.
GlsResult gls_fixed_effects(const VarianceComponents& vc,
                            const std::vector<Eigen::MatrixXd>& x_blocks,
                            const std::vector<Eigen::MatrixXd>& z_blocks,
                            const std::vector<Eigen::VectorXd>& y_blocks);

// lambda_j = tau00 / (tau00 + sigma2 / n_j), averaged arithmetically.
Reliability intercept_reliability(const VarianceComponents& vc,
                                  const std::vector<std::size_t>& sizes);

// Standalone intercept-variance homogeneity test (the tau00 chi-square):
// per-group OLS intercepts against their level-2 predictions, weighted by
// their OLS sampling variances; df = usable groups - S - 1.
VcTest tau_chi_square_test(const Dataset& ds, const ModelSpec& spec,
                           const FitResult& fit_result);

}  // namespace hlm

#endif
