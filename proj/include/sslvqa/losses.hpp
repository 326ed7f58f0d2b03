#pragma once

#include "sslvqa/autodiff.hpp"

#include <optional>
#include <span>

namespace sslvqa::losses {

/// Variance guard in the correlation denominator.
inline constexpr double kPlccEpsilon = 1e-8;
/// Temperature of the cosine-similarity pretraining ablation.
inline constexpr double kCosineTemperature = 0.1;

/// cov(a,b) / sqrt((var(a) + eps)(var(b) + eps)) over n x 1 columns (n >= 2).
ad::Var plcc(ad::Var a, ad::Var b);
/// (1 - plcc(a, b)) / 2, in [0, 1].
ad::Var plcc_loss(ad::Var a, ad::Var b);
/// Guarded correlation on plain values (same definition as the tape version).
double plcc_value(std::span<const double> a, std::span<const double> b);
double plcc_loss_value(std::span<const double> a, std::span<const double> b);

/// Symmetric InfoNCE over a K x K matrix of logits whose diagonal holds the
/// positive pairs: mean over rows of -log softmax(row)_ii plus the same over
/// columns.
ad::Var contrastive_from_logits(ad::Var logits);
/// Statistical contrastive loss from a K x K distance matrix, logits = -D / tau.
ad::Var contrastive_from_distances(ad::Var distances, double tau);

enum class ContrastiveKind { Statistical, Cosine };

/// z1[i], z2[i] are the two views of clip i (all N x C). Statistical: distances are
/// the MVG distance between the fitted views. Cosine: logits are cosine
/// similarities of token-mean embeddings divided by kCosineTemperature.
ad::Var contrastive_pretrain_loss(std::span<const ad::Var> z1, std::span<const ad::Var> z2,
                                  double tau, ContrastiveKind kind = ContrastiveKind::Statistical,
                                  std::optional<double> ridge = std::nullopt);

/// plcc_loss(Q_R, y) + plcc_loss(Q_D, y) on the first view of a labelled batch.
ad::Var supervised_loss(ad::Var qr, ad::Var qd, ad::Var labels);

/// plcc_loss(Q_R', Q_R'') + plcc_loss(Q_D', Q_D'').
ad::Var intra_consistency_loss(ad::Var qr1, ad::Var qr2, ad::Var qd1, ad::Var qd2);

struct StabilityErrors {
    double regressor = 0.0; ///< epsilon_r
    double distance = 0.0;  ///< epsilon_d
};

/// View-consistency errors of both models on the unlabelled batch. Values only;
/// they gate the transfer direction and are never differentiated.
StabilityErrors stability_errors(ad::Var qr1, ad::Var qr2, ad::Var qd1, ad::Var qd2);

/// m = 1 when the regressor is less stable than the distance model (eps_r > eps_d);
/// ties give m = 0.
int transfer_mask(const StabilityErrors& eps);

/// m * L(Q_R, sg(Q_D)) + (1 - m) * L(sg(Q_R), Q_D): the stable model's predictions
/// act as a fixed pseudo-label for the other one.
ad::Var knowledge_transfer_loss(ad::Var qr, ad::Var qd, const StabilityErrors& eps);

/// Unmasked variant: plcc_loss(Q_R, Q_D) with gradients into both models.
ad::Var mutual_transfer_loss(ad::Var qr, ad::Var qd);

struct LossWeights {
    double consistency = 1.0; ///< lambda_c
    double transfer = 1.0;    ///< lambda_u
};

/// L_s + lambda_c L_c + lambda_u L_u.
ad::Var total_ssl_loss(ad::Var supervised, ad::Var consistency, ad::Var transfer,
                       const LossWeights& w);

} // namespace sslvqa::losses
