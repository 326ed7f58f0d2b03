#pragma once

#include "sslvqa/clipio.hpp"
#include "sslvqa/sampler.hpp"
#include "sslvqa/trainer.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sslvqa {

/// Pearson correlation with population moments. NaN when either input is constant.
double plcc(std::span<const double> a, std::span<const double> b);
/// 1-based ranks; tied values share their average rank.
std::vector<double> average_ranks(std::span<const double> x);
/// Pearson correlation of average ranks. Throws ConfigError for length < 2.
double srocc(std::span<const double> a, std::span<const double> b);

enum class Alternative { Less, Greater }; ///< x stochastically smaller / larger than y
enum class WilcoxonMethod { Auto, Exact, Normal };

struct WilcoxonResult {
    double statistic = 0.0; ///< rank sum of x in the pooled sample
    double p_value = 1.0;
    bool exact = false;
};

/// Auto uses full enumeration when n + m <= 12 and the tie-corrected normal
/// approximation (with continuity correction) otherwise. Exact is capped at n + m <= 24.
WilcoxonResult wilcoxon_rank_sum(std::span<const double> x, std::span<const double> y,
                                 Alternative alternative,
                                 WilcoxonMethod method = WilcoxonMethod::Auto);

struct QualityPrediction {
    double regressor = 0.0; ///< Q_R
    double distance = 0.0;  ///< Q_D
    double combined = 0.0;  ///< (Q_R + Q_D) / 2
};

/// Averages each model over `fragments` seeded fragments; both models see the same
/// fragments. Requires an SSL-stage state.
QualityPrediction infer_quality(const RawClip& clip, const TrainState& model, int fragments,
                                std::uint64_t seed);

struct ClipPrediction {
    std::string path;
    std::string scene_id;
    double label = 0.0;
    QualityPrediction q;
};

struct EvalOptions {
    int fragments = 4;
    bool znorm = false;
    std::uint64_t seed = 0;
    std::string dataset = "test";
    std::string split = "split0";
};

struct EvalReport {
    std::string dataset;
    std::string split;
    std::uint64_t seed = 0;
    double srocc = 0.0; ///< combined prediction vs label
    double plcc = 0.0;
    double srocc_regressor = 0.0;
    double srocc_distance = 0.0;
    std::vector<ClipPrediction> predictions;

    bool has_nan() const;
    /// One "clip" line per prediction followed by a "[summary]" block of key = value lines.
    std::string to_text() const;
};

/// Labels come from hidden_label when present, otherwise label. Throws ConfigError
/// when a record has neither or the set has fewer than two clips.
EvalReport evaluate(const Dataset& test, const TrainState& model, const EvalOptions& options);

struct EvalSummary {
    std::size_t reports = 0;
    double srocc = 0.0;
    double plcc = 0.0;
    double srocc_regressor = 0.0;
    double srocc_distance = 0.0;

    std::string to_text() const;
};

/// Regressor token map of one seeded fragment, painted back onto the source frames.
struct QualityMap {
    FragmentGeometry geometry;
    std::vector<double> tokens;
    double score = 0.0; ///< Q_R of this fragment
    ScalarVolume frames;
};

QualityMap quality_map(const RawClip& clip, const TrainState& model, std::uint64_t seed);

/// Lower median of an ascending sort: element (n - 1) / 2.
double lower_median(std::vector<double> values);
EvalSummary median_over_splits(std::span<const EvalReport> reports);

} // namespace sslvqa
