#include "sslvqa/errors.hpp"
#include "sslvqa/sampler.hpp"

#include <doctest.h>

using namespace sslvqa;

namespace {

// Direct index-mapping oracle: fragment pixel -> source pixel through the geometry.
bool matches_source(const Fragment& f, const RawClip& src) {
    const FragmentGeometry& g = f.geometry;
    const int p = g.config.patch;
    for (int t = 0; t < f.frames; ++t)
        for (int y = 0; y < f.height; ++y)
            for (int x = 0; x < f.width; ++x) {
                const PatchOrigin& o = g.cells[static_cast<std::size_t>((y / p) * g.config.grid_w + x / p)];
                for (int c = 0; c < 3; ++c)
                    if (f.at(t, y, x, c) != src.at(g.t_start + t, o.y + y % p, o.x + x % p, c)) return false;
            }
    return true;
}

} // namespace

TEST_CASE("published-scale fragment shape") {
    const RawClip c = RawClip::zeros(32, 224, 224);
    const Fragment f = qcs_sample(c, FragmentConfig{7, 7, 32, 32}, 1);
    CHECK(f.frames == 32);
    CHECK(f.height == 224);
    CHECK(f.width == 224);
    CHECK(f.geometry.cells.size() == 49u);
}

TEST_CASE("desk fragment shape") {
    const RawClip c = generate_scene(8, 64, 64, 2);
    const Fragment f = qcs_sample(c, FragmentConfig{4, 4, 16, 8}, 3);
    CHECK(f.frames == 8);
    CHECK(f.height == 64);
    CHECK(f.width == 64);
    CHECK(f.geometry.cells.size() == 16u);
    CHECK(matches_source(f, c));
}

TEST_CASE("precondition errors") {
    CHECK_THROWS_AS(qcs_sample(RawClip::zeros(8, 64, 64), FragmentConfig{4, 4, 32, 8}, 1), ConfigError);
    CHECK_THROWS_AS(qcs_sample(RawClip::zeros(4, 64, 64), FragmentConfig{4, 4, 8, 8}, 1), ConfigError);
}

TEST_CASE("fragments are bit-identical for a fixed seed and never interpolate") {
    const RawClip c = generate_scene(12, 50, 70, 4); // non-divisible sizes
    const FragmentConfig cfg{3, 4, 9, 6};
    for (std::uint64_t s = 0; s < 20; ++s) {
        const Fragment a = qcs_sample(c, cfg, s);
        const Fragment b = qcs_sample(c, cfg, s);
        CHECK(a.data == b.data);
        CHECK(a.geometry == b.geometry);
        CHECK(matches_source(a, c));
        const FragmentGeometry& g = a.geometry;
        CHECK(g.t_start + cfg.n_frames <= c.frames);
        for (int i = 0; i < cfg.grid_h; ++i)
            for (int j = 0; j < cfg.grid_w; ++j) {
                const PatchOrigin& o = g.cells[static_cast<std::size_t>(i * cfg.grid_w + j)];
                // Rectangle stays inside its own cell (floor cell sizes, border unused).
                CHECK(o.y >= i * g.cell_height());
                CHECK(o.y + cfg.patch <= (i + 1) * g.cell_height());
                CHECK(o.x >= j * g.cell_width());
                CHECK(o.x + cfg.patch <= (j + 1) * g.cell_width());
            }
    }
}

TEST_CASE("qcs_pair views use independent geometry") {
    const RawClip c = generate_scene(12, 64, 64, 5);
    const FragmentConfig cfg{4, 4, 8, 8};
    const auto p1 = qcs_pair(c, cfg, 9);
    const auto p2 = qcs_pair(c, cfg, 9);
    CHECK(p1.first.data == p2.first.data);
    CHECK(p1.second.data == p2.second.data);
    int collisions = 0;
    for (std::uint64_t s = 0; s < 1000; ++s) {
        const auto [a, b] = qcs_pair(c, cfg, s);
        if (a.geometry == b.geometry) ++collisions;
    }
    CHECK(collisions < 10);
}

TEST_CASE("patch-sized cells force identical views") {
    const RawClip c = generate_scene(8, 32, 32, 6);
    const auto [a, b] = qcs_pair(c, FragmentConfig{4, 4, 8, 8}, 3);
    CHECK(a.data == b.data);
}

TEST_CASE("content aligned sampling shares geometry") {
    const RawClip base = generate_scene(10, 48, 48, 7);
    std::vector<RawClip> versions;
    for (int l = 1; l <= 4; ++l) versions.push_back(synthesize_distortion(base, {DistortionKind::GaussianNoise, l}, 2));
    std::vector<const RawClip*> ptrs;
    for (const RawClip& v : versions) ptrs.push_back(&v);
    const FragmentConfig cfg{3, 3, 8, 6};
    const auto frags = content_aligned_sample(ptrs, cfg, 4);
    REQUIRE(frags.size() == 4u);
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(frags[k].geometry == frags[0].geometry);
        CHECK(matches_source(frags[k], versions[k]));
    }
    const std::vector<const RawClip*> same(4, &base);
    const auto copies = content_aligned_sample(same, cfg, 4);
    for (const Fragment& f : copies) CHECK(f.data == copies[0].data);

    const RawClip other = generate_scene(10, 40, 48, 1);
    const std::vector<const RawClip*> mixed{&base, &other};
    CHECK_THROWS_AS(content_aligned_sample(mixed, cfg, 1), ConfigError);
}
