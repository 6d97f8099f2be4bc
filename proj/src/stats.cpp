#include "hlm/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace hlm::stats {

double normal_cdf(double z) {
    static const boost::math::normal_distribution<double> nd(0.0, 1.0);
    return boost::math::cdf(nd, z);
}

double normal_sf(double z) {
    static const boost::math::normal_distribution<double> nd(0.0, 1.0);
    return boost::math::cdf(boost::math::complement(nd, z));
}

double student_t_sf(double t, double df) {
    if (!std::isfinite(t)) return t > 0 ? 0.0 : 1.0;
    if (!std::isfinite(df) || df > 1e12) return normal_sf(t);
    boost::math::students_t_distribution<double> td(df);
    return boost::math::cdf(boost::math::complement(td, t));
}

double two_sided_t_p(double t, double df) {
    return 2.0 * student_t_sf(std::fabs(t), df);
}

double chi_square_sf(double x, double df) {
    if (x <= 0.0) return 1.0;
    if (!std::isfinite(x)) return 0.0;
    boost::math::chi_squared_distribution<double> cd(df);
    return boost::math::cdf(boost::math::complement(cd, x));
}

double ks_statistic_uniform(const double* sorted_u, int n) {
    if (n <= 0) throw std::invalid_argument("ks_statistic_uniform: empty sample");
    double d = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = sorted_u[i];
        d = std::max(d, (i + 1.0) / n - u);
        d = std::max(d, u - static_cast<double>(i) / n);
    }
    return d;
}

double ks_critical(int n, double alpha) {
    // c(alpha)/sqrt(n) with c(0.05)=1.3581, c(0.01)=1.6276
    double c;
    if (alpha == 0.05) c = 1.3581;
    else if (alpha == 0.01) c = 1.6276;
    else throw std::invalid_argument("ks_critical: unsupported alpha");
    return c / std::sqrt(static_cast<double>(n));
}

}  // namespace hlm::stats
