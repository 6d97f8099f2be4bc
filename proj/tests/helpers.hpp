#ifndef HLM_TESTS_HELPERS_HPP
#define HLM_TESTS_HELPERS_HPP

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hlm/dataset.hpp"

namespace testutil {

// Scratch file that cleans up after itself.
class TempFile {
public:
    explicit TempFile(const std::string& contents, const std::string& suffix = ".csv") {
        static std::atomic<int> counter{0};
        path_ = (std::filesystem::temp_directory_path() /
                 ("hlm_test_" + std::to_string(::getpid()) + "_" +
                  std::to_string(counter++) + suffix))
                    .string();
        std::ofstream f(path_, std::ios::binary);
        f << contents;
    }
    ~TempFile() {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

inline hlm::Dataset make_dataset(const std::vector<std::string>& names,
                                 const std::vector<std::vector<double>>& cols,
                                 const std::string& cluster) {
    std::vector<hlm::Column> columns;
    columns.reserve(cols.size());
    for (const auto& v : cols) columns.push_back(hlm::Column::from_values(v));
    return hlm::Dataset(names, std::move(columns), cluster);
}

// Dense whole-matrix GLS oracle: assembles the full block-diagonal V and
// solves (X' V^-1 X)^-1 X' V^-1 y with a single dense factorization.
struct DenseGls {
    Eigen::VectorXd estimates;
    Eigen::MatrixXd covariance;
};

inline DenseGls dense_gls_oracle(const Eigen::MatrixXd& tau, double sigma2,
                                 const std::vector<Eigen::MatrixXd>& x_blocks,
                                 const std::vector<Eigen::MatrixXd>& z_blocks,
                                 const std::vector<Eigen::VectorXd>& y_blocks) {
    Eigen::Index n = 0;
    const Eigen::Index p = x_blocks[0].cols();
    for (const auto& x : x_blocks) n += x.rows();
    Eigen::MatrixXd x_all(n, p);
    Eigen::VectorXd y_all(n);
    Eigen::MatrixXd v_all = Eigen::MatrixXd::Zero(n, n);
    Eigen::Index at = 0;
    for (std::size_t j = 0; j < x_blocks.size(); ++j) {
        const Eigen::Index nj = x_blocks[j].rows();
        x_all.middleRows(at, nj) = x_blocks[j];
        y_all.segment(at, nj) = y_blocks[j];
        v_all.block(at, at, nj, nj) =
            z_blocks[j] * tau * z_blocks[j].transpose() +
            sigma2 * Eigen::MatrixXd::Identity(nj, nj);
        at += nj;
    }
    Eigen::MatrixXd v_inv = v_all.inverse();
    Eigen::MatrixXd info = x_all.transpose() * v_inv * x_all;
    DenseGls out;
    out.covariance = info.inverse();
    out.estimates = out.covariance * (x_all.transpose() * v_inv * y_all);
    return out;
}

// Dense (RE)ML log-likelihood oracle, same definitions as the estimator
// but through a full-matrix route.
inline double dense_loglik_oracle(const Eigen::MatrixXd& tau, double sigma2,
                                  const std::vector<Eigen::MatrixXd>& x_blocks,
                                  const std::vector<Eigen::MatrixXd>& z_blocks,
                                  const std::vector<Eigen::VectorXd>& y_blocks,
                                  bool reml) {
    Eigen::Index n = 0;
    const Eigen::Index p = x_blocks[0].cols();
    for (const auto& x : x_blocks) n += x.rows();
    Eigen::MatrixXd x_all(n, p);
    Eigen::VectorXd y_all(n);
    Eigen::MatrixXd v_all = Eigen::MatrixXd::Zero(n, n);
    Eigen::Index at = 0;
    for (std::size_t j = 0; j < x_blocks.size(); ++j) {
        const Eigen::Index nj = x_blocks[j].rows();
        x_all.middleRows(at, nj) = x_blocks[j];
        y_all.segment(at, nj) = y_blocks[j];
        v_all.block(at, at, nj, nj) =
            z_blocks[j] * tau * z_blocks[j].transpose() +
            sigma2 * Eigen::MatrixXd::Identity(nj, nj);
        at += nj;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(v_all);
    double logdet_v = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) logdet_v += 2.0 * std::log(llt.matrixL()(i, i));
    Eigen::MatrixXd info = x_all.transpose() * llt.solve(x_all);
    Eigen::VectorXd beta = info.ldlt().solve(x_all.transpose() * llt.solve(y_all));
    Eigen::VectorXd r = y_all - x_all * beta;
    const double quad = r.dot(llt.solve(r));
    const double nd = static_cast<double>(n);
    if (!reml)
        return -0.5 * (logdet_v + quad + nd * std::log(2.0 * M_PI));
    const double logdet_info = std::log(info.determinant());
    return -0.5 * (logdet_v + logdet_info + quad +
                   (nd - static_cast<double>(p)) * std::log(2.0 * M_PI));
}

}  // namespace testutil

#endif
