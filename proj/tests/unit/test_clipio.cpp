#include "sslvqa/clipio.hpp"
#include "sslvqa/errors.hpp"
#include "sslvqa/rng.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cstring>
#include <fstream>
#include <set>

using namespace sslvqa;
namespace fs = std::filesystem;

namespace {

RawClip random_clip(int t, int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    RawClip c = RawClip::zeros(t, h, w);
    for (float& v : c.data) v = static_cast<float>(rng.uniform());
    return c;
}

double mse(const RawClip& a, const RawClip& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        s += d * d;
    }
    return s / static_cast<double>(a.data.size());
}

void write_bytes(const fs::path& p, const std::string& bytes) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string read_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

} // namespace

TEST_CASE("clip round trip is bit exact") {
    const auto dir = testutil::scratch_dir("clip_rt");
    const RawClip c = random_clip(3, 5, 7, 1);
    save_clip(c, dir / "a.clip");
    const RawClip d = load_clip(dir / "a.clip");
    CHECK(d.frames == 3);
    CHECK(d.height == 5);
    CHECK(d.width == 7);
    CHECK(std::memcmp(c.data.data(), d.data.data(), c.data.size() * sizeof(float)) == 0);
}

TEST_CASE("declared shape drives the loaded clip") {
    const auto dir = testutil::scratch_dir("clip_shape");
    save_clip(RawClip::zeros(8, 64, 64), dir / "z.clip");
    const RawClip z = load_clip(dir / "z.clip");
    CHECK(z.frames == 8);
    CHECK(z.height == 64);
    CHECK(z.width == 64);
    CHECK(fs::file_size(dir / "z.clip") == kClipHeaderBytes + 8u * 64 * 64 * 3 * 4);
}

TEST_CASE("overwrite keeps the new content") {
    const auto dir = testutil::scratch_dir("clip_over");
    save_clip(random_clip(2, 4, 4, 1), dir / "c.clip");
    const RawClip second = random_clip(1, 3, 3, 2);
    save_clip(second, dir / "c.clip");
    CHECK(load_clip(dir / "c.clip") == second);
}

TEST_CASE("malformed clip files are rejected") {
    const auto dir = testutil::scratch_dir("clip_bad");
    save_clip(random_clip(2, 4, 4, 3), dir / "ok.clip");
    const std::string good = read_bytes(dir / "ok.clip");

    write_bytes(dir / "trunc.clip", good.substr(0, good.size() - 4));
    CHECK_THROWS_AS(load_clip(dir / "trunc.clip"), FormatError);

    write_bytes(dir / "short.clip", good.substr(0, 10));
    CHECK_THROWS_AS(load_clip(dir / "short.clip"), FormatError);

    std::string magic = good;
    magic[0] = 'X';
    write_bytes(dir / "magic.clip", magic);
    CHECK_THROWS_AS(load_clip(dir / "magic.clip"), FormatError);

    std::string range = good;
    const float big = 1.5f;
    std::memcpy(range.data() + kClipHeaderBytes, &big, 4);
    write_bytes(dir / "range.clip", range);
    CHECK_THROWS(load_clip(dir / "range.clip"));

    CHECK_THROWS(load_clip(dir / "missing.clip"));
}

TEST_CASE("level 0 is the identity for every kind") {
    const RawClip c = generate_scene(10, 24, 24, 5);
    for (DistortionKind k : all_distortion_kinds()) {
        CHECK(synthesize_distortion(c, {k, 0}, 9) == c);
    }
}

TEST_CASE("distortions are deterministic, in range and shape preserving") {
    const RawClip c = generate_scene(10, 24, 24, 6);
    for (DistortionKind k : all_distortion_kinds()) {
        for (int l = 1; l <= 4; ++l) {
            const RawClip a = synthesize_distortion(c, {k, l}, 77);
            CHECK(a == synthesize_distortion(c, {k, l}, 77));
            CHECK(a.frames == c.frames);
            CHECK(a.height == c.height);
            CHECK(a.width == c.width);
            CHECK_NOTHROW(a.validate());
        }
    }
}

TEST_CASE("gaussian noise MSE strictly increases with level") {
    const RawClip c = generate_scene(6, 32, 32, 8);
    double prev = 0.0;
    for (int l = 1; l <= 4; ++l) {
        const double m = mse(c, synthesize_distortion(c, {DistortionKind::GaussianNoise, l}, 3));
        CHECK(m > prev);
        prev = m;
    }
}

TEST_CASE("degradation proxy is non-decreasing in level for every kind") {
    const RawClip c = generate_scene(12, 32, 32, 10);
    for (DistortionKind k : all_distortion_kinds()) {
        double prev = 0.0;
        for (int l = 1; l <= 4; ++l) {
            const double m = mse(c, synthesize_distortion(c, {k, l}, 4));
            INFO(to_string(k), " level ", l);
            CHECK(m >= prev);
            prev = m;
        }
    }
}

TEST_CASE("invalid distortion levels are rejected") {
    const RawClip c = generate_scene(4, 8, 8, 1);
    CHECK_THROWS_AS(synthesize_distortion(c, {DistortionKind::GaussianBlur, 5}, 0), ConfigError);
    CHECK_THROWS_AS(parse_distortion_kind("jpeg2000"), ConfigError);
    for (DistortionKind k : all_distortion_kinds()) CHECK(parse_distortion_kind(to_string(k)) == k);
}

TEST_CASE("synthetic label schedule") {
    CHECK(synthetic_label(std::nullopt) == 1.0);
    CHECK(synthetic_label(DistortionSpec{DistortionKind::GaussianBlur, 2}) == 0.5);
    CHECK(synthetic_label(DistortionSpec{DistortionKind::FrameDrop, 4}) == 0.0);
}

TEST_CASE("pretrain set counting and scene grouping") {
    std::vector<RawClip> scenes;
    for (int s = 0; s < 8; ++s) scenes.push_back(generate_scene(4, 8, 8, s));
    std::vector<DistortionSpec> specs;
    for (int l = 0; l < 4; ++l) specs.push_back({DistortionKind::GaussianNoise, l});
    const Dataset d = build_pretrain_set(scenes, specs, 1);
    CHECK(d.size() == 32u);
    std::set<std::string> ids, paths;
    for (const auto& r : d.manifest.records) {
        ids.insert(r.scene_id);
        paths.insert(r.clip_path);
    }
    CHECK(ids.size() == 8u);
    CHECK(paths.size() == 32u);
    // Level-0 spec gives every scene its clean version.
    for (std::size_t s = 0; s < 8; ++s) CHECK(d.clip(s * 4) == scenes[s]);
    const Dataset e = build_pretrain_set(scenes, specs, 1);
    CHECK(d.manifest == e.manifest);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(d.clip(i) == e.clip(i));
    CHECK_THROWS_AS(build_pretrain_set(std::vector<RawClip>{}, specs, 1), ConfigError);
}

TEST_CASE("ssl split partitions the pool") {
    std::vector<RawClip> scenes;
    for (int s = 0; s < 10; ++s) scenes.push_back(generate_scene(4, 8, 8, s));
    std::vector<DistortionSpec> specs;
    for (int l = 1; l <= 4; ++l) specs.push_back({DistortionKind::GaussianBlur, l});
    const Dataset pool = build_quality_set(scenes, specs, 0.0, 3); // 40 eligible + 10 pristine
    const SslSplit a = build_ssl_split(pool, 10, 20, 1);
    CHECK(a.labelled.size() == 10u);
    CHECK(a.unlabelled.size() == 20u);
    CHECK(a.test.size() == 10u);
    std::set<std::string> all;
    for (const Dataset* d : {&a.labelled, &a.unlabelled, &a.test})
        for (const auto& r : d->manifest.records) {
            CHECK(r.split != SplitTag::Pristine);
            all.insert(r.clip_path);
        }
    CHECK(all.size() == 40u);
    for (const auto& r : a.labelled.manifest.records) CHECK(r.label.has_value());
    for (const auto& r : a.unlabelled.manifest.records) {
        CHECK_FALSE(r.label.has_value());
        CHECK(r.hidden_label.has_value());
    }
    const SslSplit b = build_ssl_split(pool, 10, 20, 2);
    CHECK(b.labelled.size() == 10u);
    CHECK_FALSE(a.labelled.manifest == b.labelled.manifest);
    CHECK_THROWS_AS(build_ssl_split(pool, 0, 20, 1), ConfigError);
    CHECK_THROWS_AS(build_ssl_split(pool, 30, 20, 1), ConfigError);
}

TEST_CASE("manifest text round trip and dataset on disk") {
    const auto dir = testutil::scratch_dir("manifest");
    std::vector<RawClip> scenes{generate_scene(4, 8, 8, 1), generate_scene(4, 8, 8, 2)};
    const std::vector<DistortionSpec> specs{{DistortionKind::MotionBlur, 2}};
    const Dataset d = build_quality_set(scenes, specs, 0.02, 5);
    CHECK(DatasetManifest::from_text(d.manifest.to_text()) == d.manifest);
    d.write(dir);
    const Dataset r = Dataset::read(dir / "manifest.txt");
    CHECK(r.manifest == d.manifest);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(r.clip(i) == d.clip(i));
    CHECK(select_split(r, SplitTag::Pristine).size() == 2u);
}

TEST_CASE("manifest validation") {
    DatasetManifest m;
    ManifestRecord a;
    a.scene_id = "s";
    a.clip_path = "x.clip";
    a.label = 0.5;
    a.split = SplitTag::Labelled;
    m.records = {a, a};
    CHECK_THROWS(m.validate()); // duplicate path
    m.records[1].clip_path = "y.clip";
    m.records[1].label.reset();
    CHECK_THROWS(m.validate()); // labelled without label
    m.records[1].label = 0.2;
    m.records[1].split = SplitTag::Pristine;
    m.records[1].label.reset();
    m.records[1].distortion = DistortionSpec{DistortionKind::GaussianBlur, 1};
    CHECK_THROWS(m.validate()); // distorted pristine record
    m.records[1].distortion.reset();
    CHECK_NOTHROW(m.validate());
    CHECK_THROWS(DatasetManifest::from_text("# sslvqa-manifest v1\ns\tnone\n"));
}
