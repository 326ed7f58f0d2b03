#pragma once

// Independent reference implementations used by the tests. Nothing here calls
// into the library under test.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace oracle {

/// Gauss-Jordan inverse with partial pivoting on plain loops.
inline Eigen::MatrixXd inverse(const Eigen::MatrixXd& m) {
    const int n = static_cast<int>(m.rows());
    std::vector<std::vector<double>> a(static_cast<std::size_t>(n), std::vector<double>(2 * static_cast<std::size_t>(n), 0.0));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) a[i][j] = m(i, j);
        a[i][n + i] = 1.0;
    }
    for (int c = 0; c < n; ++c) {
        int piv = c;
        for (int r = c + 1; r < n; ++r)
            if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
        if (a[piv][c] == 0.0) throw std::runtime_error("singular");
        std::swap(a[c], a[piv]);
        const double d = a[c][c];
        for (auto& v : a[c]) v /= d;
        for (int r = 0; r < n; ++r) {
            if (r == c) continue;
            const double f = a[r][c];
            for (int k = 0; k < 2 * n; ++k) a[r][k] -= f * a[c][k];
        }
    }
    Eigen::MatrixXd inv(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) inv(i, j) = a[i][n + j];
    return inv;
}

/// Two-pass column mean and Bessel-corrected covariance.
inline void mean_cov(const Eigen::MatrixXd& z, Eigen::MatrixXd& mu, Eigen::MatrixXd& cov) {
    const int n = static_cast<int>(z.rows()), c = static_cast<int>(z.cols());
    mu = Eigen::MatrixXd::Zero(1, c);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) mu(0, j) += z(i, j);
    mu /= n;
    cov = Eigen::MatrixXd::Zero(c, c);
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < c; ++a)
            for (int b = 0; b < c; ++b) cov(a, b) += (z(i, a) - mu(0, a)) * (z(i, b) - mu(0, b));
    cov /= (n - 1);
}

inline double distance(const Eigen::MatrixXd& mu_a, const Eigen::MatrixXd& cov_a, const Eigen::MatrixXd& mu_b,
                       const Eigen::MatrixXd& cov_b) {
    const Eigen::MatrixXd s_inv = inverse(0.5 * (cov_a + cov_b));
    const Eigen::MatrixXd d = (mu_a - mu_b).transpose();
    double acc = 0.0;
    for (int i = 0; i < d.rows(); ++i)
        for (int j = 0; j < d.rows(); ++j) acc += d(i, 0) * s_inv(i, j) * d(j, 0);
    return std::sqrt(acc);
}

/// Pearson correlation straight from the definition (population sums).
inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

/// Average ranks by counting: rank = #smaller + (#equal + 1) / 2. O(n^2).
inline std::vector<double> ranks(const std::vector<double>& x) {
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double less = 0, equal = 0;
        for (double v : x) {
            if (v < x[i]) ++less;
            if (v == x[i]) ++equal;
        }
        r[i] = less + (equal + 1.0) / 2.0;
    }
    return r;
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    return pearson(ranks(a), ranks(b));
}

/// Symmetric InfoNCE evaluated directly from logits.
inline double info_nce(const Eigen::MatrixXd& logits) {
    const int k = static_cast<int>(logits.rows());
    double rows = 0, cols = 0;
    for (int i = 0; i < k; ++i) {
        double sr = 0, sc = 0;
        for (int j = 0; j < k; ++j) {
            sr += std::exp(logits(i, j));
            sc += std::exp(logits(j, i));
        }
        rows += -std::log(std::exp(logits(i, i)) / sr);
        cols += -std::log(std::exp(logits(i, i)) / sc);
    }
    return rows / k + cols / k;
}

} // namespace oracle
