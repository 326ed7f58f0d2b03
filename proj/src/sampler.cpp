#include "sslvqa/sampler.hpp"

#include "sslvqa/errors.hpp"
#include "sslvqa/rng.hpp"

#include <string>

namespace sslvqa {

void check_fragment_fits(int frames, int height, int width, const FragmentConfig& cfg) {
    if (cfg.grid_h < 1 || cfg.grid_w < 1 || cfg.patch < 1 || cfg.n_frames < 1) {
        throw ConfigError("fragment config values must be positive");
    }
    if (height / cfg.grid_h < cfg.patch || width / cfg.grid_w < cfg.patch) {
        throw ConfigError("grid cell (" + std::to_string(height / cfg.grid_h) + "x" +
                          std::to_string(width / cfg.grid_w) + ") smaller than patch " +
                          std::to_string(cfg.patch));
    }
    if (frames < cfg.n_frames) {
        throw ConfigError("clip has " + std::to_string(frames) + " frames, fragment needs " +
                          std::to_string(cfg.n_frames));
    }
}

FragmentGeometry draw_geometry(int frames, int height, int width, const FragmentConfig& cfg,
                               std::uint64_t seed) {
    check_fragment_fits(frames, height, width, cfg);
    Rng rng(derive_seed(seed, 0x9C5ULL));
    FragmentGeometry g;
    g.config = cfg;
    g.source_frames = frames;
    g.source_height = height;
    g.source_width = width;
    g.t_start = rng.integer(0, frames - cfg.n_frames);
    const int ch = height / cfg.grid_h;
    const int cw = width / cfg.grid_w;
    g.cells.reserve(static_cast<std::size_t>(cfg.cells()));
    for (int i = 0; i < cfg.grid_h; ++i) {
        for (int j = 0; j < cfg.grid_w; ++j) {
            PatchOrigin o;
            o.y = i * ch + rng.integer(0, ch - cfg.patch);
            o.x = j * cw + rng.integer(0, cw - cfg.patch);
            g.cells.push_back(o);
        }
    }
    return g;
}

Fragment extract_fragment(const RawClip& clip, const FragmentGeometry& g) {
    const FragmentConfig& cfg = g.config;
    if (clip.frames != g.source_frames || clip.height != g.source_height ||
        clip.width != g.source_width) {
        throw ConfigError("fragment geometry does not match clip shape");
    }
    if (static_cast<int>(g.cells.size()) != cfg.cells()) {
        throw ConfigError("fragment geometry cell count mismatch");
    }
    Fragment f;
    f.frames = cfg.n_frames;
    f.height = cfg.height();
    f.width = cfg.width();
    f.geometry = g;
    f.data.resize(static_cast<std::size_t>(f.frames) * f.height * f.width * 3);
    const std::size_t row = static_cast<std::size_t>(cfg.patch) * 3;
    for (int t = 0; t < f.frames; ++t) {
        const int st = g.t_start + t;
        for (int i = 0; i < cfg.grid_h; ++i) {
            for (int j = 0; j < cfg.grid_w; ++j) {
                const PatchOrigin& o = g.cells[static_cast<std::size_t>(i * cfg.grid_w + j)];
                for (int dy = 0; dy < cfg.patch; ++dy) {
                    const float* src = &clip.data[clip.index(st, o.y + dy, o.x, 0)];
                    float* dst = &f.data[((static_cast<std::size_t>(t) * f.height +
                                           i * cfg.patch + dy) *
                                              f.width +
                                          j * cfg.patch) *
                                         3];
                    std::copy(src, src + row, dst);
                }
            }
        }
    }
    return f;
}

Fragment qcs_sample(const RawClip& clip, const FragmentConfig& cfg, std::uint64_t seed) {
    return extract_fragment(clip, draw_geometry(clip.frames, clip.height, clip.width, cfg, seed));
}

std::pair<Fragment, Fragment> qcs_pair(const RawClip& clip, const FragmentConfig& cfg,
                                       std::uint64_t seed) {
    return {qcs_sample(clip, cfg, derive_seed(seed, 1)), qcs_sample(clip, cfg, derive_seed(seed, 2))};
}

std::vector<Fragment> content_aligned_sample(std::span<const RawClip* const> clips,
                                             const FragmentConfig& cfg, std::uint64_t seed) {
    std::vector<Fragment> out;
    if (clips.empty()) {
        return out;
    }
    const RawClip& first = *clips.front();
    for (const RawClip* c : clips) {
        if (c->frames != first.frames || c->height != first.height || c->width != first.width) {
            throw ConfigError("content_aligned_sample: clips differ in shape");
        }
    }
    const FragmentGeometry g = draw_geometry(first.frames, first.height, first.width, cfg, seed);
    out.reserve(clips.size());
    for (const RawClip* c : clips) {
        out.push_back(extract_fragment(*c, g));
    }
    return out;
}

} // namespace sslvqa
