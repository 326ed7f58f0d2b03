#include "sslvqa/eval.hpp"

#include "sslvqa/rng.hpp"
#include "sslvqa/sampler.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

namespace sslvqa {

double plcc(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw ConfigError("plcc: need two equal-length vectors of length >= 2");
    }
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
    std::vector<double> ranks(x.size());
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double srocc(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw ConfigError("srocc: need two equal-length vectors of length >= 2");
    }
    const std::vector<double> ra = average_ranks(a), rb = average_ranks(b);
    return plcc(ra, rb);
}

WilcoxonResult wilcoxon_rank_sum(std::span<const double> x, std::span<const double> y,
                                 Alternative alternative, WilcoxonMethod method) {
    if (x.empty() || y.empty()) {
        throw ConfigError("wilcoxon_rank_sum: both samples must be nonempty");
    }
    std::vector<double> pooled(x.begin(), x.end());
    pooled.insert(pooled.end(), y.begin(), y.end());
    const std::vector<double> ranks = average_ranks(pooled);
    const std::size_t n = x.size(), total = pooled.size();
    WilcoxonResult res;
    for (std::size_t i = 0; i < n; ++i) res.statistic += ranks[i];

    bool exact = method == WilcoxonMethod::Exact || (method == WilcoxonMethod::Auto && total <= 12);
    if (exact && total > 24) {
        throw ConfigError("wilcoxon_rank_sum: exact enumeration limited to 24 observations");
    }
    res.exact = exact;
    if (exact) {
        // Every n-subset of the pooled ranks is equally likely under the null.
        const double tol = 1e-9;
        std::uint64_t hits = 0, count = 0;
        for (std::uint32_t mask = 0; mask < (1u << total); ++mask) {
            if (static_cast<std::size_t>(std::popcount(mask)) != n) continue;
            double s = 0.0;
            for (std::size_t k = 0; k < total; ++k)
                if (mask & (1u << k)) s += ranks[k];
            ++count;
            const bool extreme = alternative == Alternative::Less ? s <= res.statistic + tol
                                                                  : s >= res.statistic - tol;
            if (extreme) ++hits;
        }
        res.p_value = static_cast<double>(hits) / static_cast<double>(count);
        return res;
    }
    const double nn = static_cast<double>(n), mm = static_cast<double>(y.size());
    const double big_n = static_cast<double>(total);
    double tie_sum = 0.0;
    std::vector<double> sorted = pooled;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        const double t = static_cast<double>(j - i);
        tie_sum += t * t * t - t;
        i = j;
    }
    const double mean = nn * (big_n + 1.0) / 2.0;
    const double var = nn * mm / 12.0 * ((big_n + 1.0) - tie_sum / (big_n * (big_n - 1.0)));
    if (var <= 0.0) {
        res.p_value = 1.0;
        return res;
    }
    const double sd = std::sqrt(var);
    if (alternative == Alternative::Less) {
        const double z = (res.statistic - mean + 0.5) / sd;
        res.p_value = 0.5 * std::erfc(-z / std::sqrt(2.0));
    } else {
        const double z = (res.statistic - mean - 0.5) / sd;
        res.p_value = 0.5 * std::erfc(z / std::sqrt(2.0));
    }
    return res;
}

QualityPrediction infer_quality(const RawClip& clip, const TrainState& model, int fragments,
                                std::uint64_t seed) {
    if (model.stage != TrainStage::Ssl) {
        throw ConfigError("inference needs an SSL-stage checkpoint");
    }
    if (fragments < 1) {
        throw ConfigError("inference needs at least one fragment");
    }
    const TrainConfig& cfg = model.config;
    QualityPrediction p;
    for (int f = 0; f < fragments; ++f) {
        const Fragment frag = qcs_sample(clip, cfg.encoder.fragment,
                                         derive_seed(seed, static_cast<std::uint64_t>(f)));
        p.regressor += regress_head(encode(frag, model.regressor_encoder), model.head).score;
        p.distance += q_distance(encode(frag, model.distance_encoder), model.pristine, cfg.tau,
                                 cfg.ridge);
    }
    p.regressor /= fragments;
    p.distance /= fragments;
    p.combined = 0.5 * (p.regressor + p.distance);
    return p;
}

bool EvalReport::has_nan() const {
    return std::isnan(srocc) || std::isnan(plcc) || std::isnan(srocc_regressor) ||
           std::isnan(srocc_distance);
}

std::string EvalReport::to_text() const {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "# sslvqa-eval v1\n";
    for (const ClipPrediction& c : predictions) {
        os << "clip\t" << c.path << '\t' << c.scene_id << '\t' << c.label << '\t' << c.q.regressor
           << '\t' << c.q.distance << '\t' << c.q.combined << '\n';
    }
    os << "[summary]\n"
       << "dataset = " << dataset << '\n'
       << "split = " << split << '\n'
       << "seed = " << seed << '\n'
       << "clips = " << predictions.size() << '\n'
       << "srocc = " << srocc << '\n'
       << "plcc = " << plcc << '\n'
       << "srocc_regressor = " << srocc_regressor << '\n'
       << "srocc_distance = " << srocc_distance << '\n';
    return os.str();
}

namespace {

void znormalise(std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    s = std::sqrt(s / n);
    for (double& x : v) x = s > 0.0 ? (x - m) / s : 0.0;
}

} // namespace

EvalReport evaluate(const Dataset& test, const TrainState& model, const EvalOptions& options) {
    if (test.size() < 2) {
        throw ConfigError("evaluate: test set needs at least two clips");
    }
    EvalReport rep;
    rep.dataset = options.dataset;
    rep.split = options.split;
    rep.seed = options.seed;
    std::vector<double> labels, qr, qd;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const ManifestRecord& r = test.manifest.records[i];
        const std::optional<double> label = r.hidden_label ? r.hidden_label : r.label;
        if (!label) {
            throw ConfigError("evaluate: record " + r.clip_path + " has no label");
        }
        ClipPrediction c;
        c.path = r.clip_path;
        c.scene_id = r.scene_id;
        c.label = *label;
        c.q = infer_quality(test.clip(i), model, options.fragments, derive_seed(options.seed, i));
        labels.push_back(c.label);
        qr.push_back(c.q.regressor);
        qd.push_back(c.q.distance);
        rep.predictions.push_back(std::move(c));
    }
    if (options.znorm) {
        znormalise(qr);
        znormalise(qd);
    }
    std::vector<double> q(qr.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
        q[i] = 0.5 * (qr[i] + qd[i]);
        rep.predictions[i].q.combined = q[i];
    }
    rep.srocc = srocc(q, labels);
    rep.plcc = plcc(q, labels);
    rep.srocc_regressor = srocc(qr, labels);
    rep.srocc_distance = srocc(qd, labels);
    return rep;
}

QualityMap quality_map(const RawClip& clip, const TrainState& model, std::uint64_t seed) {
    if (model.stage != TrainStage::Ssl) {
        throw ConfigError("quality maps need an SSL-stage checkpoint");
    }
    const EncoderConfig& ec = model.config.encoder;
    const Fragment frag = qcs_sample(clip, ec.fragment, seed);
    const HeadValues h = regress_head(encode(frag, model.regressor_encoder), model.head);
    QualityMap out;
    out.geometry = frag.geometry;
    out.tokens.assign(h.token_map.data(), h.token_map.data() + h.token_map.size());
    out.score = h.score;
    out.frames = project_quality_map(out.tokens, out.geometry, ec.t_stride);
    return out;
}

double lower_median(std::vector<double> values) {
    if (values.empty()) {
        throw ConfigError("median of an empty set");
    }
    std::sort(values.begin(), values.end());
    return values[(values.size() - 1) / 2];
}

EvalSummary median_over_splits(std::span<const EvalReport> reports) {
    EvalSummary s;
    s.reports = reports.size();
    if (reports.empty()) {
        throw ConfigError("median_over_splits: no reports");
    }
    auto med = [&](double EvalReport::*field) {
        std::vector<double> v;
        for (const EvalReport& r : reports) v.push_back(r.*field);
        return lower_median(std::move(v));
    };
    s.srocc = med(&EvalReport::srocc);
    s.plcc = med(&EvalReport::plcc);
    s.srocc_regressor = med(&EvalReport::srocc_regressor);
    s.srocc_distance = med(&EvalReport::srocc_distance);
    return s;
}

std::string EvalSummary::to_text() const {
    std::ostringstream os;
    os << std::setprecision(17) << "[median]\n"
       << "reports = " << reports << '\n'
       << "srocc = " << srocc << '\n'
       << "plcc = " << plcc << '\n'
       << "srocc_regressor = " << srocc_regressor << '\n'
       << "srocc_distance = " << srocc_distance << '\n';
    return os.str();
}

} // namespace sslvqa
