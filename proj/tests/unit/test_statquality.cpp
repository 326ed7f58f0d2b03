#include "oracles.hpp"
#include "sslvqa/errors.hpp"
#include "sslvqa/statquality.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

using namespace sslvqa;
using Eigen::MatrixXd;

namespace {

MvgStats random_stats(Rng& rng, int c) {
    const MatrixXd a = testutil::random_matrix(rng, c, c);
    MvgStats s;
    s.mean = testutil::random_matrix(rng, 1, c);
    s.cov = a * a.transpose() + 0.5 * MatrixXd::Identity(c, c);
    return s;
}

MatrixXd random_rotation(Rng& rng, int c) {
    Eigen::HouseholderQR<MatrixXd> qr(testutil::random_matrix(rng, c, c));
    return qr.householderQ();
}

} // namespace

TEST_CASE("fit_mvg hand cases") {
    MatrixXd two(2, 3);
    two << 1, 2, 3, 1, 2, 3;
    const MvgStats s = fit_mvg(two, 0.25);
    CHECK(s.mean == two.row(0));
    CHECK(s.cov.isApprox(0.25 * MatrixXd::Identity(3, 3)));

    MatrixXd e(2, 2);
    e << 1, 0, -1, 0;
    const MvgStats t = fit_mvg(e, 0.1);
    CHECK(t.mean.isZero(0.0));
    MatrixXd expect(2, 2);
    expect << 2.1, 0, 0, 0.1;
    CHECK((t.cov - expect).cwiseAbs().maxCoeff() < 1e-15);
    CHECK_THROWS_AS(fit_mvg(MatrixXd::Ones(1, 3)), ConfigError);
}

TEST_CASE("fit_mvg matches the two-pass oracle") {
    Rng rng(1);
    const MatrixXd z = testutil::random_matrix(rng, 50, 4, 2.0).array() + 3.0;
    MatrixXd mu, cov;
    oracle::mean_cov(z, mu, cov);
    const MvgStats s = fit_mvg(z, 0.0);
    CHECK((s.mean - mu).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((s.cov - cov).cwiseAbs().maxCoeff() < 1e-12);
    // Default ridge follows the trace rule.
    const MvgStats d = fit_mvg(z);
    CHECK((d.cov - cov).diagonal().mean() == doctest::Approx(1e-6 * cov.trace() / 4).epsilon(1e-9));
    CHECK(default_ridge(MatrixXd::Zero(3, 3)) == 1e-12);
}

TEST_CASE("diagonal analytic distance") {
    MvgStats a, b;
    a.mean = MatrixXd::Zero(1, 2);
    b.mean = MatrixXd(1, 2);
    b.mean << 2, 0;
    a.cov = b.cov = 2.0 * MatrixXd::Identity(2, 2);
    CHECK(stat_distance(a, b) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
}

TEST_CASE("distance properties over random pairs") {
    Rng rng(2);
    double worst_self = 0, worst_sym = 0, worst_rot = 0, worst_oracle = 0, min_d = 1;
    for (int i = 0; i < 1000; ++i) {
        const int c = 2 + i % 5;
        const MvgStats a = random_stats(rng, c), b = random_stats(rng, c);
        const double dab = stat_distance(a, b);
        worst_self = std::max(worst_self, stat_distance(a, a));
        worst_sym = std::max(worst_sym, std::abs(dab - stat_distance(b, a)));
        min_d = std::min(min_d, dab);
        const MatrixXd q = random_rotation(rng, c);
        MvgStats ra{a.mean * q.transpose(), q * a.cov * q.transpose()};
        MvgStats rb{b.mean * q.transpose(), q * b.cov * q.transpose()};
        worst_rot = std::max(worst_rot, std::abs(stat_distance(ra, rb) - dab));
        const double o = oracle::distance(a.mean, a.cov, b.mean, b.cov);
        worst_oracle = std::max(worst_oracle, std::abs(dab - o) / o);
    }
    CHECK(worst_self < 1e-8);
    CHECK(worst_sym < 1e-8);
    CHECK(min_d >= 0.0);
    CHECK(worst_rot < 1e-8);
    CHECK(worst_oracle < 1e-8);
}

TEST_CASE("rotating raw feature sets leaves the distance unchanged") {
    Rng rng(3);
    const MatrixXd za = testutil::random_matrix(rng, 30, 4), zb = testutil::random_matrix(rng, 25, 4, 1.5);
    const MatrixXd q = random_rotation(rng, 4);
    const double d = stat_distance(fit_mvg(za, 1e-3), fit_mvg(zb, 1e-3));
    const double r = stat_distance(fit_mvg(za * q.transpose(), 1e-3), fit_mvg(zb * q.transpose(), 1e-3));
    CHECK(std::abs(d - r) < 1e-8);
}

TEST_CASE("tape distance equals plain distance and passes grad_check") {
    Rng rng(4);
    const MatrixXd za = testutil::random_matrix(rng, 12, 3), zb = testutil::random_matrix(rng, 9, 3, 0.6);
    ad::Tape t;
    const ad::Var d = stat_distance(fit_mvg(t.parameter(za), 1e-2), fit_mvg(t.parameter(zb), 1e-2));
    CHECK(d.item() == doctest::Approx(stat_distance(fit_mvg(za, 1e-2), fit_mvg(zb, 1e-2))).epsilon(1e-12));
    auto fn = [](ad::Tape&, std::span<const ad::Var> x) { return stat_distance(fit_mvg(x[0], 1e-2), fit_mvg(x[1], 1e-2)); };
    CHECK(ad::grad_check(fn, {za, zb}, 1e-6).max_rel_error < 1e-4);
}

TEST_CASE("pristine corpus pooling") {
    Rng rng(5);
    const MatrixXd a = testutil::random_matrix(rng, 10, 3), b = testutil::random_matrix(rng, 14, 3);
    const PristineModel one = fit_pristine_corpus(std::vector<MatrixXd>{a}, 0.0);
    CHECK(one.stats.cov.isApprox(fit_mvg(a, 0.0).cov, 1e-14));

    MatrixXd pooled(24, 3);
    pooled << a, b;
    MatrixXd mu, cov;
    oracle::mean_cov(pooled, mu, cov);
    const PristineModel two = fit_pristine_corpus(std::vector<MatrixXd>{a, b}, 0.0);
    CHECK((two.stats.cov - cov).cwiseAbs().maxCoeff() < 1e-12);

    // Duplicating the corpus keeps the mean; the covariance picks up 2(n-1)/(2n-1).
    const PristineModel dup = fit_pristine_corpus(std::vector<MatrixXd>{a, a}, 0.0);
    const double n = 10;
    CHECK((dup.stats.mean - one.stats.mean).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((dup.stats.cov - one.stats.cov * (2 * (n - 1) / (2 * n - 1))).cwiseAbs().maxCoeff() < 1e-12);

    const PristineModel flat = fit_pristine_corpus(std::vector<MatrixXd>{MatrixXd::Ones(5, 3), MatrixXd::Ones(4, 3)}, 0.5);
    CHECK(flat.stats.cov.isApprox(0.5 * MatrixXd::Identity(3, 3)));
    CHECK_THROWS(fit_pristine_corpus(std::vector<MatrixXd>{}, 0.0));
}

TEST_CASE("Q_D definition and monotonicity") {
    Rng rng(6);
    const MatrixXd z = testutil::random_matrix(rng, 20, 3);
    PristineModel p;
    p.stats = fit_mvg(z, 1e-3);
    CHECK(q_distance(z, p, 10.0, 1e-3) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::exp(-2.3 / 10.0) == doctest::Approx(0.7945).epsilon(1e-4));
    double prev = 2.0;
    for (int k = 0; k < 6; ++k) {
        const MatrixXd shifted = z.array() + 0.3 * k;
        const double q = q_distance(shifted, p, 10.0, 1e-3);
        const double d = stat_distance(p.stats, fit_mvg(shifted, 1e-3));
        CHECK(q == doctest::Approx(std::exp(-d / 10.0)).epsilon(1e-12));
        CHECK(q <= 1.0);
        CHECK(q < prev);
        prev = q;
    }
    CHECK_THROWS_AS(q_distance(z, p, 0.0), ConfigError);
}

TEST_CASE("quality map projection") {
    FragmentGeometry g;
    g.config = FragmentConfig{2, 3, 4, 4};
    g.source_frames = 6;
    g.source_height = 10; // cells 5 high, residue joins the last row of cells
    g.source_width = 13;  // cells 4 wide, one residual column
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j) g.cells.push_back(PatchOrigin{i * 5, j * 4});
    std::vector<double> tokens(12);
    for (std::size_t k = 0; k < 12; ++k) tokens[k] = (k % 2 == 0) ? 1.0 : -1.0; // checkerboard
    const ScalarVolume v = project_quality_map(tokens, g, 2);
    CHECK(v.frames == 4);
    CHECK(v.height == 10);
    CHECK(v.width == 13);
    for (int t = 0; t < 4; ++t)
        for (int y = 0; y < 10; ++y)
            for (int x = 0; x < 13; ++x) {
                const int cell = std::min(y / 5, 1) * 3 + std::min(x / 4, 2);
                const float expect = static_cast<float>(tokens[static_cast<std::size_t>((t / 2) * 6 + cell)]);
                CHECK(v.data[(static_cast<std::size_t>(t) * 10 + y) * 13 + x] == expect);
            }
    const ScalarVolume c = project_quality_map(std::vector<double>(12, 0.25), g, 2);
    for (float x : c.data) CHECK(x == 0.25f);
    CHECK_THROWS_AS(project_quality_map(std::vector<double>(5, 0.0), g, 2), ConfigError);
}

TEST_CASE("graymap records its range") {
    const auto dir = testutil::scratch_dir("pgm");
    ScalarVolume v{1, 2, 2, {0.f, 1.f, 0.5f, 0.25f}};
    write_pgm(v, 0, 0.0, 1.0, dir / "m.pgm");
    std::ifstream f(dir / "m.pgm");
    std::string magic, hash, range;
    double lo, hi;
    f >> magic >> hash >> range >> lo >> hi;
    CHECK(magic == "P2");
    CHECK(range == "range");
    CHECK(lo == 0.0);
    CHECK(hi == 1.0);
    int w, h, maxv, p0, p1;
    f >> w >> h >> maxv >> p0 >> p1;
    CHECK(w == 2);
    CHECK(p0 == 0);
    CHECK(p1 == 255);
}
