#include "sslvqa/statquality.hpp"

#include "sslvqa/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace sslvqa {

double default_ridge(const Matrix& cov) {
    const double c = static_cast<double>(cov.rows());
    return std::max(1e-6 * cov.trace() / c, 1e-12);
}

MvgStats fit_mvg(const Matrix& z, std::optional<double> ridge) {
    if (z.rows() < 2) {
        throw ConfigError("fit_mvg: need at least two samples");
    }
    MvgStats s;
    s.mean = z.colwise().mean();
    const Matrix centred = z.rowwise() - s.mean.row(0);
    s.cov = centred.transpose() * centred / static_cast<double>(z.rows() - 1);
    const double r = ridge ? *ridge : default_ridge(s.cov);
    s.cov.diagonal().array() += r;
    return s;
}

MvgVars fit_mvg(ad::Var z, std::optional<double> ridge) {
    const Eigen::Index n = z.rows();
    if (n < 2) {
        throw ConfigError("fit_mvg: need at least two samples");
    }
    ad::Tape& tape = *z.tape();
    ad::Var mu = ad::mean_rows(z);
    ad::Var centred = z - ad::broadcast_rows(mu, n);
    ad::Var scatter = ad::matmul(ad::transpose(centred), centred);
    ad::Var cov = ad::scale(scatter, 1.0 / static_cast<double>(n - 1));
    const double r = ridge ? *ridge : default_ridge(cov.value());
    const Eigen::Index c = z.cols();
    cov = cov + tape.constant(Matrix::Identity(c, c) * r);
    return MvgVars{mu, cov};
}

double stat_distance(const MvgStats& a, const MvgStats& b) {
    if (a.mean.cols() != b.mean.cols()) {
        throw ConfigError("stat_distance: dimension mismatch");
    }
    const Matrix pooled = 0.5 * (a.cov + b.cov);
    const Eigen::VectorXd delta = (a.mean - b.mean).transpose();
    const Eigen::VectorXd x = ad::spd_factor(pooled).solve(delta);
    const double d2 = std::max(delta.dot(x), 0.0);
    return std::sqrt(d2);
}

ad::Var stat_distance(const MvgVars& a, const MvgVars& b) {
    return ad::guarded_sqrt(ad::mahalanobis_sq(a.mean, b.mean, a.cov, b.cov));
}

MvgVars constant_stats(ad::Tape& tape, const MvgStats& stats) {
    return MvgVars{tape.constant(stats.mean), tape.constant(stats.cov)};
}

PristineModel fit_pristine_corpus(std::span<const Matrix> feature_sets, std::optional<double> ridge) {
    if (feature_sets.empty()) {
        throw ConfigError("fit_pristine_corpus: empty corpus");
    }
    Eigen::Index rows = 0;
    const Eigen::Index cols = feature_sets.front().cols();
    for (const Matrix& z : feature_sets) {
        if (z.cols() != cols) {
            throw ConfigError("fit_pristine_corpus: feature width mismatch");
        }
        rows += z.rows();
    }
    if (rows < 2) {
        throw ConfigError("fit_pristine_corpus: fewer than two pooled samples");
    }
    Matrix pooled(rows, cols);
    Eigen::Index r = 0;
    for (const Matrix& z : feature_sets) {
        pooled.middleRows(r, z.rows()) = z;
        r += z.rows();
    }
    return PristineModel{fit_mvg(pooled, ridge), feature_sets.size()};
}

ad::Var q_distance(ad::Var z, const PristineModel& pristine, double tau, std::optional<double> ridge) {
    if (!(tau > 0.0)) {
        throw ConfigError("q_distance: tau must be positive");
    }
    ad::Tape& tape = *z.tape();
    const MvgVars x = fit_mvg(z, ridge);
    const ad::Var d = stat_distance(constant_stats(tape, pristine.stats), x);
    return ad::exp(ad::scale(d, -1.0 / tau));
}

double q_distance(const Matrix& z, const PristineModel& pristine, double tau,
                  std::optional<double> ridge) {
    if (!(tau > 0.0)) {
        throw ConfigError("q_distance: tau must be positive");
    }
    return std::exp(-stat_distance(pristine.stats, fit_mvg(z, ridge)) / tau);
}

ScalarVolume project_quality_map(std::span<const double> token_map, const FragmentGeometry& g,
                                 int t_stride) {
    const FragmentConfig& cfg = g.config;
    if (t_stride < 1 || cfg.n_frames % t_stride != 0) {
        throw ConfigError("project_quality_map: invalid temporal stride");
    }
    const int cells = cfg.cells();
    const int groups = cfg.n_frames / t_stride;
    if (static_cast<int>(token_map.size()) != groups * cells ||
        static_cast<int>(g.cells.size()) != cells) {
        throw ConfigError("project_quality_map: token count does not match geometry");
    }
    const int ch = g.cell_height();
    const int cw = g.cell_width();
    ScalarVolume out;
    out.frames = cfg.n_frames;
    out.height = g.source_height;
    out.width = g.source_width;
    out.data.resize(static_cast<std::size_t>(out.frames) * out.height * out.width);
    for (int t = 0; t < cfg.n_frames; ++t) {
        const int group = t / t_stride;
        for (int y = 0; y < out.height; ++y) {
            const int i = std::min(y / ch, cfg.grid_h - 1);
            for (int x = 0; x < out.width; ++x) {
                const int j = std::min(x / cw, cfg.grid_w - 1);
                out.data[(static_cast<std::size_t>(t) * out.height + y) * out.width + x] =
                    static_cast<float>(token_map[static_cast<std::size_t>(group) * cells +
                                                 i * cfg.grid_w + j]);
            }
        }
    }
    return out;
}

void write_pgm(const ScalarVolume& maps, int frame, double lo, double hi,
               const std::filesystem::path& path) {
    if (frame < 0 || frame >= maps.frames) {
        throw ConfigError("write_pgm: frame index out of range");
    }
    std::ofstream os(path, std::ios::trunc);
    if (!os) {
        throw FormatError("cannot open for writing: " + path.string());
    }
    os << "P2\n# range " << std::setprecision(9) << lo << ' ' << hi << '\n'
       << maps.width << ' ' << maps.height << "\n255\n";
    const double span = hi > lo ? hi - lo : 1.0;
    const std::size_t base = static_cast<std::size_t>(frame) * maps.height * maps.width;
    for (int y = 0; y < maps.height; ++y) {
        for (int x = 0; x < maps.width; ++x) {
            const double v = (maps.data[base + static_cast<std::size_t>(y) * maps.width + x] - lo) / span;
            os << static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))
               << (x + 1 == maps.width ? '\n' : ' ');
        }
    }
}

} // namespace sslvqa
