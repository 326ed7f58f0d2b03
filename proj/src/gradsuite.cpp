#include "sslvqa/gradsuite.hpp"

#include "sslvqa/encoder.hpp"
#include "sslvqa/losses.hpp"
#include "sslvqa/rng.hpp"
#include "sslvqa/sampler.hpp"
#include "sslvqa/statquality.hpp"

namespace sslvqa {

namespace {

using ad::Matrix;
using ad::Tape;
using ad::Var;

constexpr double kStep = 1e-6;

Matrix random_matrix(Rng& rng, int r, int c, double scale = 1.0) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = scale * rng.normal();
    return m;
}

EncoderConfig tiny_encoder() {
    return EncoderConfig{FragmentConfig{2, 2, 4, 4}, 2, 6, 2};
}

BoundEncoder encoder_from(std::span<const Var> xs, const EncoderConfig& cfg, std::size_t& at) {
    BoundEncoder e;
    e.config = &cfg;
    e.embed_w = xs[at++];
    e.embed_b = xs[at++];
    for (int b = 0; b < cfg.blocks; ++b) {
        e.mix_w.push_back(xs[at++]);
        e.mix_b.push_back(xs[at++]);
        e.temporal_w.push_back(xs[at++]);
    }
    return e;
}

} // namespace

std::vector<GradCase> run_gradcheck_suite(std::uint64_t seed, double tolerance) {
    Rng rng(derive_seed(seed, 0x6C4EC));
    std::vector<GradCase> out;
    auto run = [&](std::string name, const ad::ScalarFn& fn, const std::vector<Matrix>& inputs) {
        GradCase c;
        c.name = std::move(name);
        c.result = ad::grad_check(fn, inputs, kStep);
        c.passed = c.result.max_rel_error < tolerance;
        out.push_back(std::move(c));
    };

    // Distance through fit_mvg on both sides.
    run("stat_distance(fit_mvg)",
        [](Tape&, std::span<const Var> x) {
            return stat_distance(fit_mvg(x[0], 1e-2), fit_mvg(x[1], 1e-2));
        },
        {random_matrix(rng, 12, 4), random_matrix(rng, 10, 4, 0.7)});

    // Pristine-anchored Q_D.
    {
        PristineModel pristine;
        pristine.stats = fit_mvg(random_matrix(rng, 40, 4), 1e-2);
        run("q_distance",
            [pristine](Tape&, std::span<const Var> x) { return q_distance(x[0], pristine, 10.0, 1e-2); },
            {random_matrix(rng, 16, 4, 1.5)});
    }

    // Contrastive loss, statistical and cosine similarity.
    {
        std::vector<Matrix> views;
        for (int k = 0; k < 6; ++k) views.push_back(random_matrix(rng, 8, 4, 0.5 + 0.3 * k));
        for (const auto kind : {losses::ContrastiveKind::Statistical, losses::ContrastiveKind::Cosine}) {
            run(kind == losses::ContrastiveKind::Statistical ? "contrastive(statistical)"
                                                             : "contrastive(cosine)",
                [kind](Tape&, std::span<const Var> x) {
                    const std::vector<Var> z1(x.begin(), x.begin() + 3), z2(x.begin() + 3, x.end());
                    return losses::contrastive_pretrain_loss(z1, z2, 1.0, kind, 1e-2);
                },
                views);
        }
    }

    run("supervised_loss",
        [](Tape& t, std::span<const Var> x) {
            Matrix y(8, 1);
            y << 0.1, 0.9, 0.4, 0.3, 0.8, 0.5, 0.2, 0.7;
            return losses::supervised_loss(x[0], x[1], t.constant(y));
        },
        {random_matrix(rng, 8, 1), random_matrix(rng, 8, 1)});

    run("intra_consistency_loss",
        [](Tape&, std::span<const Var> x) { return losses::intra_consistency_loss(x[0], x[1], x[2], x[3]); },
        {random_matrix(rng, 8, 1), random_matrix(rng, 8, 1), random_matrix(rng, 8, 1),
         random_matrix(rng, 8, 1)});

    // Only the pseudo-labelled branch is differentiated; the stable one is a constant.
    for (const int mask : {1, 0}) {
        const losses::StabilityErrors eps = mask == 1 ? losses::StabilityErrors{0.3, 0.2}
                                                      : losses::StabilityErrors{0.2, 0.3};
        const Matrix fixed = random_matrix(rng, 8, 1);
        run(mask == 1 ? "knowledge_transfer(m=1)" : "knowledge_transfer(m=0)",
            [eps, fixed, mask](Tape& t, std::span<const Var> x) {
                const Var other = t.constant(fixed);
                return mask == 1 ? losses::knowledge_transfer_loss(x[0], other, eps)
                                 : losses::knowledge_transfer_loss(other, x[0], eps);
            },
            {random_matrix(rng, 8, 1)});
    }

    // Encoder + head + Q_D on a real fragment.
    {
        const EncoderConfig cfg = tiny_encoder();
        const RawClip clip = generate_scene(6, 12, 12, derive_seed(seed, 1));
        const Fragment frag = qcs_sample(clip, cfg.fragment, derive_seed(seed, 2));
        const EncoderParams enc = init_encoder(cfg, derive_seed(seed, 3));
        const HeadParams head = init_head(cfg.channels, 5, derive_seed(seed, 4));
        std::vector<Matrix> inputs;
        for (const Matrix* m : enc.tensors()) inputs.push_back(*m);
        for (const Matrix* m : head.tensors()) inputs.push_back(*m);
        // Nonzero biases so every path is exercised.
        for (Matrix& m : inputs)
            if (m.rows() == 1) m = random_matrix(rng, 1, static_cast<int>(m.cols()), 0.1);
        PristineModel pristine;
        pristine.stats = fit_mvg(encode(qcs_sample(clip, cfg.fragment, derive_seed(seed, 5)), enc), 1e-2);
        run("encoder+head+q_distance",
            [cfg, frag, pristine](Tape& t, std::span<const Var> x) {
                std::size_t at = 0;
                const BoundEncoder e = encoder_from(x, cfg, at);
                const BoundHead h{x[at], x[at + 1], x[at + 2], x[at + 3]};
                const Var z = encode(t, frag, e);
                return regress_head(z, h).score + q_distance(z, pristine, 10.0, 1e-2);
            },
            inputs);
    }
    return out;
}

} // namespace sslvqa
