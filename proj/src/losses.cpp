#include "sslvqa/losses.hpp"

#include "sslvqa/errors.hpp"
#include "sslvqa/statquality.hpp"

#include <cmath>
#include <vector>

namespace sslvqa::losses {

namespace {

void check_column_pair(ad::Var a, ad::Var b) {
    if (a.cols() != 1 || b.cols() != 1 || a.rows() != b.rows()) {
        throw ConfigError("plcc: expects two n x 1 columns of equal length");
    }
    if (a.rows() < 2) {
        throw ConfigError("plcc: length must be at least 2");
    }
}

ad::Var centred(ad::Var a) {
    return a - ad::broadcast_scalar(ad::mean(a), a.rows(), 1);
}

// Row-wise log-sum-exp with the (constant) row maximum factored out.
ad::Var row_logsumexp(ad::Var logits) {
    ad::Tape& tape = *logits.tape();
    const Matrix shift = logits.value().rowwise().maxCoeff().replicate(1, logits.cols());
    ad::Var s = tape.constant(shift);
    ad::Var lse = ad::log(ad::sum_cols(ad::exp(logits - s)));
    return lse + tape.constant(shift.col(0));
}

} // namespace

ad::Var plcc(ad::Var a, ad::Var b) {
    check_column_pair(a, b);
    ad::Var ac = centred(a);
    ad::Var bc = centred(b);
    ad::Var cov = ad::mean(ac * bc);
    ad::Var va = ad::add_scalar(ad::mean(ad::square(ac)), kPlccEpsilon);
    ad::Var vb = ad::add_scalar(ad::mean(ad::square(bc)), kPlccEpsilon);
    return cov / ad::sqrt(va * vb);
}

ad::Var plcc_loss(ad::Var a, ad::Var b) {
    return ad::add_scalar(ad::scale(plcc(a, b), -0.5), 0.5);
}

double plcc_value(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw ConfigError("plcc: expects two vectors of equal length >= 2");
    }
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    return (cov / n) / std::sqrt((va / n + kPlccEpsilon) * (vb / n + kPlccEpsilon));
}

double plcc_loss_value(std::span<const double> a, std::span<const double> b) {
    return 0.5 * (1.0 - plcc_value(a, b));
}

ad::Var contrastive_from_logits(ad::Var logits) {
    const Eigen::Index k = logits.rows();
    if (k < 1 || logits.cols() != k) {
        throw ConfigError("contrastive loss: logits must be square with K >= 1");
    }
    ad::Tape& tape = *logits.tape();
    ad::Var eye = tape.constant(Matrix::Identity(k, k));
    ad::Var positives = ad::sum_cols(logits * eye); // K x 1
    ad::Var anchor1 = ad::mean(row_logsumexp(logits) - positives);
    ad::Var anchor2 = ad::mean(row_logsumexp(ad::transpose(logits)) - positives);
    return anchor1 + anchor2;
}

ad::Var contrastive_from_distances(ad::Var distances, double tau) {
    if (!(tau > 0.0)) {
        throw ConfigError("contrastive loss: tau must be positive");
    }
    return contrastive_from_logits(ad::scale(distances, -1.0 / tau));
}

ad::Var contrastive_pretrain_loss(std::span<const ad::Var> z1, std::span<const ad::Var> z2,
                                  double tau, ContrastiveKind kind, std::optional<double> ridge) {
    if (z1.empty() || z1.size() != z2.size()) {
        throw ConfigError("contrastive loss: need K >= 1 view pairs");
    }
    const std::size_t k = z1.size();
    if (kind == ContrastiveKind::Statistical) {
        std::vector<MvgVars> s1, s2;
        for (std::size_t i = 0; i < k; ++i) {
            s1.push_back(fit_mvg(z1[i], ridge));
            s2.push_back(fit_mvg(z2[i], ridge));
        }
        std::vector<ad::Var> rows;
        for (std::size_t i = 0; i < k; ++i) {
            std::vector<ad::Var> row;
            for (std::size_t j = 0; j < k; ++j) {
                row.push_back(stat_distance(s1[i], s2[j]));
            }
            rows.push_back(ad::concat_cols(row));
        }
        return contrastive_from_distances(ad::concat_rows(rows), tau);
    }
    auto embed = [](ad::Var z) {
        ad::Var v = ad::mean_rows(z);
        ad::Var norm = ad::sqrt(ad::add_scalar(ad::sum(ad::square(v)), 1e-12));
        return v / ad::broadcast_scalar(norm, 1, v.cols());
    };
    std::vector<ad::Var> e1, e2;
    for (std::size_t i = 0; i < k; ++i) {
        e1.push_back(embed(z1[i]));
        e2.push_back(embed(z2[i]));
    }
    ad::Var sim = ad::matmul(ad::concat_rows(e1), ad::transpose(ad::concat_rows(e2)));
    return contrastive_from_logits(ad::scale(sim, 1.0 / kCosineTemperature));
}

ad::Var supervised_loss(ad::Var qr, ad::Var qd, ad::Var labels) {
    return plcc_loss(qr, labels) + plcc_loss(qd, labels);
}

ad::Var intra_consistency_loss(ad::Var qr1, ad::Var qr2, ad::Var qd1, ad::Var qd2) {
    return plcc_loss(qr1, qr2) + plcc_loss(qd1, qd2);
}

StabilityErrors stability_errors(ad::Var qr1, ad::Var qr2, ad::Var qd1, ad::Var qd2) {
    auto values = [](ad::Var v) {
        const Matrix& m = v.value();
        if (m.cols() != 1) {
            throw ConfigError("stability_errors: expects n x 1 columns");
        }
        return std::vector<double>(m.data(), m.data() + m.rows());
    };
    const auto r1 = values(qr1), r2 = values(qr2), d1 = values(qd1), d2 = values(qd2);
    return StabilityErrors{plcc_loss_value(r1, r2), plcc_loss_value(d1, d2)};
}

int transfer_mask(const StabilityErrors& eps) {
    return eps.regressor > eps.distance ? 1 : 0;
}

ad::Var knowledge_transfer_loss(ad::Var qr, ad::Var qd, const StabilityErrors& eps) {
    if (transfer_mask(eps) == 1) {
        return plcc_loss(qr, ad::stop_gradient(qd));
    }
    return plcc_loss(ad::stop_gradient(qr), qd);
}

ad::Var mutual_transfer_loss(ad::Var qr, ad::Var qd) {
    return plcc_loss(qr, qd);
}

ad::Var total_ssl_loss(ad::Var supervised, ad::Var consistency, ad::Var transfer,
                       const LossWeights& w) {
    return supervised + ad::scale(consistency, w.consistency) + ad::scale(transfer, w.transfer);
}

} // namespace sslvqa::losses
