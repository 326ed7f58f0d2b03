#include "oracles.hpp"
#include "sslvqa/errors.hpp"
#include "sslvqa/losses.hpp"
#include "sslvqa/statquality.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace sslvqa;
using Eigen::MatrixXd;

namespace {

MatrixXd column(std::initializer_list<double> v) {
    MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
    Eigen::Index i = 0;
    for (double x : v) m(i++, 0) = x;
    return m;
}

std::vector<double> as_vec(const MatrixXd& m) { return {m.data(), m.data() + m.size()}; }

double plain_loss(const MatrixXd& a, const MatrixXd& b) { return (1.0 - oracle::pearson(as_vec(a), as_vec(b))) / 2.0; }

} // namespace

TEST_CASE("contrastive loss hand values") {
    ad::Tape t;
    CHECK(losses::contrastive_from_distances(t.constant(column({3.7})), 10.0).item() == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(losses::contrastive_from_distances(t.constant(MatrixXd::Constant(2, 2, 1.5)), 10.0).item() ==
          doctest::Approx(2.0 * std::numbers::ln2).epsilon(1e-12));
    // Perfect separation drives the loss towards zero.
    MatrixXd sep = MatrixXd::Constant(3, 3, 500.0);
    sep.diagonal().setZero();
    CHECK(losses::contrastive_from_distances(t.constant(sep), 1.0).item() < 1e-12);
}

TEST_CASE("contrastive loss matches the softmax oracle") {
    Rng rng(11);
    for (int k = 2; k <= 6; ++k) {
        const MatrixXd d = testutil::random_matrix(rng, k, k).cwiseAbs() * 5.0;
        ad::Tape t;
        const double got = losses::contrastive_from_distances(t.constant(d), 10.0).item();
        CHECK(got == doctest::Approx(oracle::info_nce(-d / 10.0)).epsilon(1e-12));
        const MatrixXd lg = testutil::random_matrix(rng, k, k, 30.0); // large logits exercise the log-sum-exp shift
        CHECK(losses::contrastive_from_logits(t.constant(lg)).item() == doctest::Approx(oracle::info_nce(lg)).epsilon(1e-10));
    }
}

TEST_CASE("statistical pretraining loss is the InfoNCE of pairwise distances") {
    Rng rng(12);
    std::vector<MatrixXd> a, b;
    for (int i = 0; i < 3; ++i) {
        a.push_back(testutil::random_matrix(rng, 10, 3, 1.0 + i));
        b.push_back(testutil::random_matrix(rng, 10, 3, 1.0 + i));
    }
    ad::Tape t;
    std::vector<ad::Var> va, vb;
    for (int i = 0; i < 3; ++i) {
        va.push_back(t.constant(a[static_cast<std::size_t>(i)]));
        vb.push_back(t.constant(b[static_cast<std::size_t>(i)]));
    }
    MatrixXd d(3, 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            MatrixXd ma, ca, mb, cb;
            oracle::mean_cov(a[static_cast<std::size_t>(i)], ma, ca);
            oracle::mean_cov(b[static_cast<std::size_t>(j)], mb, cb);
            ca += 1e-3 * MatrixXd::Identity(3, 3);
            cb += 1e-3 * MatrixXd::Identity(3, 3);
            d(i, j) = oracle::distance(ma, ca, mb, cb);
        }
    const double got = losses::contrastive_pretrain_loss(va, vb, 10.0, losses::ContrastiveKind::Statistical, 1e-3).item();
    CHECK(got == doctest::Approx(oracle::info_nce(-d / 10.0)).epsilon(1e-10));
    CHECK_THROWS_AS(losses::contrastive_pretrain_loss(std::span(va).first(2), vb, 10.0), ConfigError);
}

TEST_CASE("plcc hand values") {
    const std::vector<double> a{1, 2, 3, 4}, b{1, 3, 2, 4};
    CHECK(losses::plcc_value(a, b) == doctest::Approx(0.8).epsilon(1e-7));
    CHECK(losses::plcc_loss_value(a, b) == doctest::Approx(0.1).epsilon(1e-7));
    CHECK(losses::plcc_loss_value(a, a) == doctest::Approx(0.0).scale(1.0).epsilon(1e-8));
    const std::vector<double> neg{4, 3, 2, 1};
    CHECK(losses::plcc_loss_value(a, neg) == doctest::Approx(1.0).epsilon(1e-8));
    // Constant input: the guard keeps the value finite and the loss at 1/2.
    const std::vector<double> flat{2, 2, 2, 2};
    CHECK(losses::plcc_loss_value(a, flat) == doctest::Approx(0.5));
    ad::Tape t;
    const ad::Var g = losses::plcc_loss(t.parameter(column({1, 2, 3, 4})), t.parameter(column({2, 2, 2, 2})));
    t.backward(g);
    CHECK(std::isfinite(g.item()));
}

TEST_CASE("plcc properties") {
    Rng rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 5 + trial % 30;
        const MatrixXd a = testutil::random_matrix(rng, n, 1), b = testutil::random_matrix(rng, n, 1);
        ad::Tape t;
        const double l = losses::plcc_loss(t.constant(a), t.constant(b)).item();
        CHECK(l >= 0.0);
        CHECK(l <= 1.0);
        CHECK(l == doctest::Approx(plain_loss(a, b)).epsilon(1e-6));
        const double s = 0.5 + rng.uniform() * 3.0, c = rng.normal() * 5.0;
        const MatrixXd a2 = (s * a).array() + c;
        const double la = losses::plcc_value(as_vec(a), as_vec(b));
        const double lb = losses::plcc_value(as_vec(a2), as_vec(b));
        // The guard depends on scale, so invariance is only up to eps / var.
        CHECK(std::abs(la - lb) < 1e-6);
    }
}

TEST_CASE("composite losses match their definitions") {
    Rng rng(14);
    const MatrixXd qr = testutil::random_matrix(rng, 8, 1), qd = testutil::random_matrix(rng, 8, 1);
    const MatrixXd qr2 = testutil::random_matrix(rng, 8, 1), qd2 = testutil::random_matrix(rng, 8, 1);
    const MatrixXd y = testutil::random_matrix(rng, 8, 1);
    ad::Tape t;
    auto c = [&](const MatrixXd& m) { return t.constant(m); };
    CHECK(losses::supervised_loss(c(qr), c(qd), c(y)).item() ==
          doctest::Approx(plain_loss(qr, y) + plain_loss(qd, y)).epsilon(1e-6));
    CHECK(losses::intra_consistency_loss(c(qr), c(qr2), c(qd), c(qd2)).item() ==
          doctest::Approx(plain_loss(qr, qr2) + plain_loss(qd, qd2)).epsilon(1e-6));
    const losses::StabilityErrors eps = losses::stability_errors(c(qr), c(qr2), c(qd), c(qd2));
    CHECK(eps.regressor == doctest::Approx(plain_loss(qr, qr2)).epsilon(1e-6));
    CHECK(eps.distance == doctest::Approx(plain_loss(qd, qd2)).epsilon(1e-6));
    CHECK(losses::mutual_transfer_loss(c(qr), c(qd)).item() == doctest::Approx(plain_loss(qr, qd)).epsilon(1e-6));
    const ad::Var total = losses::total_ssl_loss(t.constant(column({0.3})), t.constant(column({0.2})),
                                                 t.constant(column({0.1})), {2.0, 0.5});
    CHECK(total.item() == doctest::Approx(0.3 + 0.4 + 0.05).epsilon(1e-15));
}

TEST_CASE("transfer mask direction and tie") {
    CHECK(losses::transfer_mask({0.3, 0.1}) == 1);
    CHECK(losses::transfer_mask({0.1, 0.3}) == 0);
    CHECK(losses::transfer_mask({0.2, 0.2}) == 0);
}

TEST_CASE("knowledge transfer routes gradient to the less stable model only") {
    Rng rng(15);
    const MatrixXd qr = testutil::random_matrix(rng, 6, 1), qd = testutil::random_matrix(rng, 6, 1);
    for (int m = 0; m < 2; ++m) {
        const losses::StabilityErrors eps = m == 1 ? losses::StabilityErrors{0.4, 0.1} : losses::StabilityErrors{0.1, 0.4};
        ad::Tape t;
        const ad::Var a = t.parameter(qr), b = t.parameter(qd);
        const ad::Var l = losses::knowledge_transfer_loss(a, b, eps);
        CHECK(l.item() == doctest::Approx(plain_loss(qr, qd)).epsilon(1e-6));
        t.backward(l);
        const MatrixXd stopped = t.grad(m == 1 ? b : a);
        const MatrixXd active = t.grad(m == 1 ? a : b);
        CHECK(stopped.cwiseAbs().maxCoeff() == 0.0);
        CHECK(active.cwiseAbs().maxCoeff() > 0.0);
        // The active branch gets exactly the gradient of the unmasked loss w.r.t. that argument.
        ad::Tape u;
        const ad::Var a2 = u.parameter(qr), b2 = u.parameter(qd);
        u.backward(losses::mutual_transfer_loss(a2, b2));
        const MatrixXd ref = u.grad(m == 1 ? a2 : b2);
        CHECK((active - ref).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("total objective gradient is the weighted sum of component gradients") {
    Rng rng(16);
    std::vector<MatrixXd> in;
    for (int i = 0; i < 5; ++i) in.push_back(testutil::random_matrix(rng, 8, 1));
    const losses::LossWeights w{0.7, 1.9};
    const losses::StabilityErrors eps{0.4, 0.2};
    auto grads = [&](int which) {
        ad::Tape t;
        std::vector<ad::Var> v;
        for (const MatrixXd& m : in) v.push_back(t.parameter(m));
        const ad::Var s = losses::supervised_loss(v[0], v[1], t.constant(in[4]));
        const ad::Var c = losses::intra_consistency_loss(v[0], v[2], v[1], v[3]);
        const ad::Var u = losses::knowledge_transfer_loss(v[0], v[1], eps);
        const ad::Var roots[4] = {losses::total_ssl_loss(s, c, u, w), s, c, u};
        t.backward(roots[which]);
        std::vector<MatrixXd> g;
        for (int i = 0; i < 4; ++i) g.push_back(t.grad(v[static_cast<std::size_t>(i)]));
        return g;
    };
    const auto total = grads(0), gs = grads(1), gc = grads(2), gu = grads(3);
    for (std::size_t i = 0; i < 4; ++i) {
        const MatrixXd expect = gs[i] + w.consistency * gc[i] + w.transfer * gu[i];
        CHECK((total[i] - expect).cwiseAbs().maxCoeff() < 1e-14);
    }
}
