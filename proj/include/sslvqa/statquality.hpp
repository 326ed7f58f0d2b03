#pragma once

#include "sslvqa/autodiff.hpp"
#include "sslvqa/clipio.hpp"
#include "sslvqa/sampler.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>

namespace sslvqa {

using ad::Matrix;

/// Multivariate Gaussian fit of a feature set (rows are samples).
struct MvgStats {
    Matrix mean; ///< 1 x C
    Matrix cov;  ///< C x C
};

struct MvgVars {
    ad::Var mean;
    ad::Var cov;
};

/// max(1e-6 * trace(cov) / C, 1e-12).
double default_ridge(const Matrix& cov);

/// mu = column mean, Sigma = scatter / (N - 1) + ridge I. When `ridge` is empty the
/// default_ridge rule is applied to the unregularised covariance. Requires N >= 2.
MvgStats fit_mvg(const Matrix& z, std::optional<double> ridge = std::nullopt);
/// Differentiable in z; the ridge value itself is treated as a constant.
MvgVars fit_mvg(ad::Var z, std::optional<double> ridge = std::nullopt);

/// sqrt(delta^T ((Sigma_a + Sigma_b)/2)^{-1} delta), delta = mu_a - mu_b.
double stat_distance(const MvgStats& a, const MvgStats& b);
/// Same distance on the tape, with sqrt(max(d^2, 1e-12)).
ad::Var stat_distance(const MvgVars& a, const MvgVars& b);

MvgVars constant_stats(ad::Tape& tape, const MvgStats& stats);

/// Statistics pooled over all rows of a pristine corpus.
struct PristineModel {
    MvgStats stats;
    std::size_t n_source_clips = 0;
};

PristineModel fit_pristine_corpus(std::span<const Matrix> feature_sets,
                                  std::optional<double> ridge = std::nullopt);

/// exp(-d(pristine, fit(z)) / tau); pristine statistics enter as constants.
ad::Var q_distance(ad::Var z, const PristineModel& pristine, double tau,
                   std::optional<double> ridge = std::nullopt);
double q_distance(const Matrix& z, const PristineModel& pristine, double tau,
                  std::optional<double> ridge = std::nullopt);

/// Paints token values back onto the fragment's source frames. Every source pixel
/// takes the value of the grid cell containing it (border residue joins the nearest
/// cell), so each sampled rectangle carries exactly its token's value. Returns one
/// H x W map per frame of the fragment window.
ScalarVolume project_quality_map(std::span<const double> token_map,
                                 const FragmentGeometry& geometry, int t_stride);

/// Plain (P2) 8-bit graymap. `lo`/`hi` map to 0/255 and are recorded in a comment.
void write_pgm(const ScalarVolume& maps, int frame, double lo, double hi,
               const std::filesystem::path& path);

} // namespace sslvqa
