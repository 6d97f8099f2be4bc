#ifndef HLM_STATS_HPP
#define HLM_STATS_HPP

namespace hlm::stats {

// Standard normal CDF and upper tail.
double normal_cdf(double z);
double normal_sf(double z);

// Student t upper tail, two-sided p for a t statistic. `df` may be
// non-integral (Rubin's-rules degrees of freedom); df = +inf falls back
// to the normal.
double student_t_sf(double t, double df);
double two_sided_t_p(double t, double df);

// Chi-square upper tail.
double chi_square_sf(double x, double df);

// One-sample Kolmogorov-Smirnov statistic against U(0,1).
// `sorted_u` must be ascending, each value in [0,1].
double ks_statistic_uniform(const double* sorted_u, int n);

// Asymptotic KS critical value at level alpha (supported: 0.05, 0.01).
double ks_critical(int n, double alpha);

}  // namespace hlm::stats

#endif
