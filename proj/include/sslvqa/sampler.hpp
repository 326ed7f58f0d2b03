#pragma once

#include "sslvqa/clipio.hpp"

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace sslvqa {

struct FragmentConfig {
    int grid_h = 7;
    int grid_w = 7;
    int patch = 32;
    int n_frames = 32;

    int height() const { return grid_h * patch; }
    int width() const { return grid_w * patch; }
    int cells() const { return grid_h * grid_w; }
    bool operator==(const FragmentConfig&) const = default;
};

/// Top-left corner of one sampled patch in source coordinates.
struct PatchOrigin {
    int y = 0;
    int x = 0;
    bool operator==(const PatchOrigin&) const = default;
};

/// Where a fragment came from: the temporal window and one patch origin per grid
/// cell (row-major over the grid). Patch locations are shared by all frames.
struct FragmentGeometry {
    FragmentConfig config;
    int t_start = 0;
    int source_frames = 0;
    int source_height = 0;
    int source_width = 0;
    std::vector<PatchOrigin> cells;

    int cell_height() const { return source_height / config.grid_h; }
    int cell_width() const { return source_width / config.grid_w; }
    bool operator==(const FragmentGeometry&) const = default;
};

struct Fragment {
    int frames = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data; ///< [t][y][x][c]
    FragmentGeometry geometry;

    float at(int t, int y, int x, int c) const {
        return data[((static_cast<std::size_t>(t) * height + y) * width + x) * 3 + c];
    }
};

/// Throws ConfigError unless cells hold a patch and the clip has enough frames.
void check_fragment_fits(int frames, int height, int width, const FragmentConfig& cfg);

/// Draws a temporal window and one patch location per cell.
FragmentGeometry draw_geometry(int frames, int height, int width, const FragmentConfig& cfg,
                               std::uint64_t seed);

/// Copies the patches described by `geometry` out of `clip` and stitches them in
/// grid order.
Fragment extract_fragment(const RawClip& clip, const FragmentGeometry& geometry);

/// Quality-consistent sample: one random view of a clip.
Fragment qcs_sample(const RawClip& clip, const FragmentConfig& cfg, std::uint64_t seed);

/// Two views drawn from independent sub-seeds of `seed`.
std::pair<Fragment, Fragment> qcs_pair(const RawClip& clip, const FragmentConfig& cfg,
                                       std::uint64_t seed);

/// One fragment per clip, all sharing the same window and patch locations. All
/// clips must share T, H, W.
std::vector<Fragment> content_aligned_sample(std::span<const RawClip* const> clips,
                                             const FragmentConfig& cfg, std::uint64_t seed);

} // namespace sslvqa
