#pragma once

// A very small synthetic world shared by the trainer, checkpoint and eval tests.

#include "sslvqa/clipio.hpp"
#include "sslvqa/config.hpp"
#include "sslvqa/rng.hpp"

#include <vector>

namespace testutil {

struct TinyWorld {
    sslvqa::TrainConfig cfg;
    sslvqa::Dataset pretrain;
    sslvqa::Dataset pristine;
    sslvqa::SslSplit split;
};

inline TinyWorld tiny_world(std::uint64_t seed) {
    using namespace sslvqa;
    TinyWorld w;
    w.cfg.seed = seed;
    w.cfg.lr = 3e-3;
    w.cfg.epochs = 2;
    w.cfg.batch_labelled = 4;
    w.cfg.batch_unlabelled = 4;
    w.cfg.pretrain_versions = 3;
    w.cfg.encoder = EncoderConfig{FragmentConfig{2, 2, 4, 4}, 2, 6, 1};
    w.cfg.head_hidden = 5;
    w.cfg.eval_fragments = 2;
    std::vector<RawClip> scenes;
    for (int s = 0; s < 4; ++s) scenes.push_back(generate_scene(6, 16, 16, derive_seed(seed, 77, s)));
    std::vector<DistortionSpec> specs;
    for (int l = 1; l <= 4; ++l) specs.push_back({DistortionKind::GaussianNoise, l});
    w.pretrain = build_pretrain_set(scenes, specs, seed);
    specs.insert(specs.begin(), DistortionSpec{DistortionKind::GaussianNoise, 0});
    const Dataset q = build_quality_set(scenes, specs, 0.0, seed);
    w.pristine = select_split(q, SplitTag::Pristine);
    w.split = build_ssl_split(q, 8, 8, seed);
    return w;
}

} // namespace testutil
