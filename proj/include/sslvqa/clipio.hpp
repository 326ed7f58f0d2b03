#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sslvqa {

/// Decoded video segment. Values are stored row-major as [t][y][x][c] with
/// three channels, each in [0, 1].
struct RawClip {
    int frames = 0;
    int height = 0;
    int width = 0;
    double frame_rate = 30.0;
    std::vector<float> data;

    static RawClip zeros(int frames, int height, int width);

    std::size_t index(int t, int y, int x, int c) const {
        return ((static_cast<std::size_t>(t) * height + y) * width + x) * 3 + c;
    }
    float& at(int t, int y, int x, int c) { return data[index(t, y, x, c)]; }
    float at(int t, int y, int x, int c) const { return data[index(t, y, x, c)]; }
    std::size_t frame_size() const { return static_cast<std::size_t>(height) * width * 3; }

    /// Throws ConfigError if the shape is empty, the payload size mismatches, or a
    /// value lies outside [0, 1].
    void validate() const;

    bool operator==(const RawClip& other) const {
        return frames == other.frames && height == other.height && width == other.width &&
               data == other.data;
    }
};

/// Single-channel T x H x W volume (quality maps).
struct ScalarVolume {
    int frames = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;
};

// Clip file layout (all little-endian):
//   4 bytes magic "VQC3" (clips) or "VQC1" (single-channel volumes)
//   u32 T, u32 H, u32 W
//   T*H*W*channels float32 values, row-major [t][y][x][c]
inline constexpr std::size_t kClipHeaderBytes = 16;

RawClip load_clip(const std::filesystem::path& path);
void save_clip(const RawClip& clip, const std::filesystem::path& path);
ScalarVolume load_volume(const std::filesystem::path& path);
void save_volume(const ScalarVolume& volume, const std::filesystem::path& path);

enum class DistortionKind : std::uint8_t {
    GaussianBlur,
    GaussianNoise,
    ImpulseNoise,
    ContrastReduction,
    BrightnessShift,
    ColorDesaturation,
    BlockQuantization,
    ResampleBlur,
    MotionBlur,
    FrameStutter,
    TemporalFlicker,
    FrameDrop,
};

inline constexpr int kDistortionKindCount = 12;
inline constexpr int kMaxDistortionLevel = 4;

std::string_view to_string(DistortionKind kind);
/// Throws ConfigError on unknown names.
DistortionKind parse_distortion_kind(std::string_view name);
std::array<DistortionKind, kDistortionKindCount> all_distortion_kinds();
bool is_temporal(DistortionKind kind);

struct DistortionSpec {
    DistortionKind kind = DistortionKind::GaussianBlur;
    int level = 0;

    bool operator==(const DistortionSpec&) const = default;
};

/// Applies one catalog distortion. Level 0 is the identity. Stochastic kinds are a
/// deterministic function of (clip, spec, seed); their random draws are shared
/// across levels so that damage is nested as the level increases.
RawClip synthesize_distortion(const RawClip& clip, const DistortionSpec& spec, std::uint64_t seed);

/// Seeded procedural scene: panning texture, a drifting gradient, moving gratings
/// and translating discs.
RawClip generate_scene(int frames, int height, int width, std::uint64_t seed);

/// Synthetic ground-truth quality: 1 - level/4.
double synthetic_label(const std::optional<DistortionSpec>& spec);

enum class SplitTag : std::uint8_t { Pretrain, Labelled, Unlabelled, Pristine, Test };

std::string_view to_string(SplitTag tag);
SplitTag parse_split_tag(std::string_view name);

struct ManifestRecord {
    std::string scene_id;
    std::optional<DistortionSpec> distortion;
    std::string clip_path;
    std::optional<double> label;
    /// Label withheld from training (unlabelled/test records), kept for evaluation.
    std::optional<double> hidden_label;
    SplitTag split = SplitTag::Pretrain;

    bool operator==(const ManifestRecord&) const = default;
};

/// Line-delimited manifest. Format:
///   # sslvqa-manifest v1
///   scene_id <TAB> kind|none <TAB> level <TAB> clip_path <TAB> label|- <TAB> hidden|- <TAB> split
struct DatasetManifest {
    std::vector<ManifestRecord> records;

    void validate() const;
    std::string to_text() const;
    static DatasetManifest from_text(std::string_view text);
    void save(const std::filesystem::path& path) const;
    static DatasetManifest load(const std::filesystem::path& path);

    bool operator==(const DatasetManifest&) const = default;
};

/// Manifest plus the clips it refers to, index-aligned with the records. Clip
/// payloads are shared between datasets produced by splitting.
struct Dataset {
    DatasetManifest manifest;
    std::vector<std::shared_ptr<const RawClip>> clips;

    std::size_t size() const { return manifest.records.size(); }
    const RawClip& clip(std::size_t i) const { return *clips[i]; }

    /// Writes every clip under `dir` at its record path plus `dir/manifest.txt`.
    void write(const std::filesystem::path& dir) const;
    /// Loads a manifest and resolves clip paths relative to the manifest's directory.
    static Dataset read(const std::filesystem::path& manifest_path);
};

/// One record per (scene, spec); all versions of scene s share scene_id.
/// Records are tagged Pretrain and carry the synthetic label.
Dataset build_pretrain_set(std::span<const RawClip> scenes, std::span<const DistortionSpec> specs,
                           std::uint64_t seed);

/// Like build_pretrain_set but additionally emits one Pristine record (the clean
/// scene, no label) per scene. Quality records are tagged Labelled.
Dataset build_quality_set(std::span<const RawClip> scenes, std::span<const DistortionSpec> specs,
                          double label_noise, std::uint64_t seed);

struct SslSplit {
    Dataset labelled;
    Dataset unlabelled;
    Dataset test;
};

/// Partitions label-carrying, non-pristine records into labelled / unlabelled /
/// test. Unlabelled and test records have their label moved to hidden_label.
SslSplit build_ssl_split(const Dataset& pool, std::size_t n_labelled, std::size_t n_unlabelled,
                         std::uint64_t seed);

/// Records tagged Pristine.
Dataset select_split(const Dataset& dataset, SplitTag tag);

} // namespace sslvqa
