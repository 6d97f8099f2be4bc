#ifndef HLM_RNG_HPP
#define HLM_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace hlm {

// Reproducible random source. The engine is std::mt19937_64 (bit-exact
// across standard libraries); uniforms take the top 53 bits of one draw;
// normals use the polar method on those uniforms. All sampling in the
// project goes through this class so a seed pins every generated dataset.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Uniform on [0, 1).
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // Standard normal via the polar (Marsaglia) method.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    // Three-level categorical on {-1, 0, +1}.
    int categorical3(double p_neg, double p_zero) {
        const double u = uniform();
        if (u < p_neg) return -1;
        if (u < p_neg + p_zero) return 0;
        return 1;
    }

    // Integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        return gen_() % n;
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace hlm

#endif
