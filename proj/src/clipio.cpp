#include "sslvqa/clipio.hpp"

#include "sslvqa/errors.hpp"
#include "sslvqa/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace sslvqa {

namespace {

constexpr char kClipMagic[4] = {'V', 'Q', 'C', '3'};
constexpr char kVolumeMagic[4] = {'V', 'Q', 'C', '1'};

void put_u32(std::vector<char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    }
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_payload(const std::filesystem::path& path, const char magic[4], int t, int h, int w,
                   const std::vector<float>& values) {
    std::vector<char> bytes;
    bytes.reserve(kClipHeaderBytes + values.size() * 4);
    bytes.insert(bytes.end(), magic, magic + 4);
    put_u32(bytes, static_cast<std::uint32_t>(t));
    put_u32(bytes, static_cast<std::uint32_t>(h));
    put_u32(bytes, static_cast<std::uint32_t>(w));
    for (float f : values) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(bytes, bits);
    }
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw FormatError("cannot open for writing: " + path.string());
    }
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) {
        throw FormatError("write failed: " + path.string());
    }
}

struct Payload {
    int t, h, w;
    std::vector<float> values;
};

Payload read_payload(const std::filesystem::path& path, const char magic[4], int channels) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw FormatError("cannot open: " + path.string());
    }
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < kClipHeaderBytes) {
        throw FormatError("malformed header: " + path.string());
    }
    if (std::memcmp(bytes.data(), magic, 4) != 0) {
        throw FormatError("bad magic: " + path.string());
    }
    Payload p{};
    const std::uint32_t t = get_u32(bytes.data() + 4);
    const std::uint32_t h = get_u32(bytes.data() + 8);
    const std::uint32_t w = get_u32(bytes.data() + 12);
    if (t == 0 || h == 0 || w == 0 || t > (1u << 20) || h > (1u << 16) || w > (1u << 16)) {
        throw FormatError("malformed header dimensions: " + path.string());
    }
    const std::uint64_t count = std::uint64_t{t} * h * w * static_cast<std::uint64_t>(channels);
    const std::uint64_t expected = kClipHeaderBytes + count * 4;
    if (bytes.size() < expected) {
        throw FormatError("truncated payload: " + path.string());
    }
    if (bytes.size() > expected) {
        throw FormatError("trailing bytes after payload: " + path.string());
    }
    p.t = static_cast<int>(t);
    p.h = static_cast<int>(h);
    p.w = static_cast<int>(w);
    p.values.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint32_t bits = get_u32(bytes.data() + kClipHeaderBytes + 4 * i);
        std::memcpy(&p.values[i], &bits, 4);
    }
    return p;
}

float clamp01(double v) {
    return static_cast<float>(std::clamp(v, 0.0, 1.0));
}

// Parameter schedules, indexed by level - 1.
constexpr std::array<double, 4> kBlurSigma = {0.7, 1.2, 1.8, 2.6};
constexpr std::array<double, 4> kNoiseStd = {0.02, 0.045, 0.08, 0.12};
constexpr std::array<double, 4> kImpulseFraction = {0.01, 0.03, 0.06, 0.10};
constexpr std::array<double, 4> kContrastGain = {0.8, 0.6, 0.42, 0.25};
constexpr std::array<double, 4> kBrightnessShift = {0.08, 0.16, 0.25, 0.35};
constexpr std::array<double, 4> kSaturation = {0.7, 0.45, 0.2, 0.0};
constexpr std::array<double, 4> kBlockWeight = {0.3, 0.55, 0.8, 1.0};
constexpr std::array<int, 4> kResampleFactor = {2, 3, 4, 6};
constexpr std::array<int, 4> kMotionWindow = {2, 3, 5, 8};
constexpr std::array<int, 4> kStutterHold = {2, 3, 4, 6};
constexpr std::array<double, 4> kFlickerAmplitude = {0.06, 0.12, 0.2, 0.3};
constexpr std::array<double, 4> kDropProbability = {0.15, 0.3, 0.45, 0.6};
constexpr int kBlockSize = 8;

RawClip gaussian_blur(const RawClip& in, double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double total = 0.0;
    for (int k = -radius; k <= radius; ++k) {
        kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
        total += kernel[k + radius];
    }
    for (double& k : kernel) {
        k /= total;
    }
    RawClip tmp = in;
    RawClip out = in;
    for (int t = 0; t < in.frames; ++t) {
        for (int y = 0; y < in.height; ++y) {
            for (int x = 0; x < in.width; ++x) {
                for (int c = 0; c < 3; ++c) {
                    double acc = 0.0;
                    for (int k = -radius; k <= radius; ++k) {
                        const int xx = std::clamp(x + k, 0, in.width - 1);
                        acc += kernel[k + radius] * in.at(t, y, xx, c);
                    }
                    tmp.at(t, y, x, c) = static_cast<float>(acc);
                }
            }
        }
        for (int y = 0; y < in.height; ++y) {
            for (int x = 0; x < in.width; ++x) {
                for (int c = 0; c < 3; ++c) {
                    double acc = 0.0;
                    for (int k = -radius; k <= radius; ++k) {
                        const int yy = std::clamp(y + k, 0, in.height - 1);
                        acc += kernel[k + radius] * tmp.at(t, yy, x, c);
                    }
                    out.at(t, y, x, c) = clamp01(acc);
                }
            }
        }
    }
    return out;
}

RawClip resample(const RawClip& in, int factor) {
    const int sh = (in.height + factor - 1) / factor;
    const int sw = (in.width + factor - 1) / factor;
    RawClip out = in;
    std::vector<double> small(static_cast<std::size_t>(sh) * sw * 3);
    for (int t = 0; t < in.frames; ++t) {
        for (int by = 0; by < sh; ++by) {
            for (int bx = 0; bx < sw; ++bx) {
                const int y1 = std::min(in.height, (by + 1) * factor);
                const int x1 = std::min(in.width, (bx + 1) * factor);
                for (int c = 0; c < 3; ++c) {
                    double acc = 0.0;
                    int n = 0;
                    for (int y = by * factor; y < y1; ++y) {
                        for (int x = bx * factor; x < x1; ++x) {
                            acc += in.at(t, y, x, c);
                            ++n;
                        }
                    }
                    small[(static_cast<std::size_t>(by) * sw + bx) * 3 + c] = acc / n;
                }
            }
        }
        // Bilinear upsampling from block centres.
        for (int y = 0; y < in.height; ++y) {
            const double fy = std::clamp((y + 0.5) / factor - 0.5, 0.0, sh - 1.0);
            const int y0 = static_cast<int>(fy);
            const int y1 = std::min(y0 + 1, sh - 1);
            const double wy = fy - y0;
            for (int x = 0; x < in.width; ++x) {
                const double fx = std::clamp((x + 0.5) / factor - 0.5, 0.0, sw - 1.0);
                const int x0 = static_cast<int>(fx);
                const int x1 = std::min(x0 + 1, sw - 1);
                const double wx = fx - x0;
                for (int c = 0; c < 3; ++c) {
                    auto s = [&](int yy, int xx) {
                        return small[(static_cast<std::size_t>(yy) * sw + xx) * 3 + c];
                    };
                    const double v = (1 - wy) * ((1 - wx) * s(y0, x0) + wx * s(y0, x1)) +
                                     wy * ((1 - wx) * s(y1, x0) + wx * s(y1, x1));
                    out.at(t, y, x, c) = clamp01(v);
                }
            }
        }
    }
    return out;
}

RawClip block_quantize(const RawClip& in, double weight) {
    RawClip out = in;
    for (int t = 0; t < in.frames; ++t) {
        for (int by = 0; by < in.height; by += kBlockSize) {
            for (int bx = 0; bx < in.width; bx += kBlockSize) {
                const int y1 = std::min(in.height, by + kBlockSize);
                const int x1 = std::min(in.width, bx + kBlockSize);
                for (int c = 0; c < 3; ++c) {
                    double mean = 0.0;
                    for (int y = by; y < y1; ++y) {
                        for (int x = bx; x < x1; ++x) {
                            mean += in.at(t, y, x, c);
                        }
                    }
                    mean /= static_cast<double>((y1 - by) * (x1 - bx));
                    for (int y = by; y < y1; ++y) {
                        for (int x = bx; x < x1; ++x) {
                            const double v = in.at(t, y, x, c);
                            out.at(t, y, x, c) = clamp01(v + weight * (mean - v));
                        }
                    }
                }
            }
        }
    }
    return out;
}

void copy_frame(const RawClip& src, int from, RawClip& dst, int to) {
    const std::size_t n = src.frame_size();
    std::copy_n(src.data.begin() + static_cast<std::ptrdiff_t>(from * n), n,
                dst.data.begin() + static_cast<std::ptrdiff_t>(to * n));
}

} // namespace

RawClip RawClip::zeros(int frames, int height, int width) {
    if (frames < 1 || height < 1 || width < 1) {
        throw ConfigError("RawClip::zeros: dimensions must be positive");
    }
    RawClip c;
    c.frames = frames;
    c.height = height;
    c.width = width;
    c.data.assign(static_cast<std::size_t>(frames) * height * width * 3, 0.0f);
    return c;
}

void RawClip::validate() const {
    if (frames < 1 || height < 1 || width < 1) {
        throw ConfigError("clip dimensions must be positive");
    }
    if (data.size() != static_cast<std::size_t>(frames) * height * width * 3) {
        throw ConfigError("clip payload size does not match its shape");
    }
    for (float v : data) {
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw ConfigError("clip value out of range [0,1]");
        }
    }
}

RawClip load_clip(const std::filesystem::path& path) {
    Payload p = read_payload(path, kClipMagic, 3);
    RawClip clip;
    clip.frames = p.t;
    clip.height = p.h;
    clip.width = p.w;
    clip.data = std::move(p.values);
    for (float v : clip.data) {
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw FormatError("value out of range [0,1] in " + path.string());
        }
    }
    return clip;
}

void save_clip(const RawClip& clip, const std::filesystem::path& path) {
    clip.validate();
    write_payload(path, kClipMagic, clip.frames, clip.height, clip.width, clip.data);
}

ScalarVolume load_volume(const std::filesystem::path& path) {
    Payload p = read_payload(path, kVolumeMagic, 1);
    return ScalarVolume{p.t, p.h, p.w, std::move(p.values)};
}

void save_volume(const ScalarVolume& volume, const std::filesystem::path& path) {
    if (volume.data.size() !=
        static_cast<std::size_t>(volume.frames) * volume.height * volume.width) {
        throw ConfigError("volume payload size does not match its shape");
    }
    write_payload(path, kVolumeMagic, volume.frames, volume.height, volume.width, volume.data);
}

std::string_view to_string(DistortionKind kind) {
    switch (kind) {
    case DistortionKind::GaussianBlur: return "gaussian_blur";
    case DistortionKind::GaussianNoise: return "gaussian_noise";
    case DistortionKind::ImpulseNoise: return "impulse_noise";
    case DistortionKind::ContrastReduction: return "contrast_reduction";
    case DistortionKind::BrightnessShift: return "brightness_shift";
    case DistortionKind::ColorDesaturation: return "color_desaturation";
    case DistortionKind::BlockQuantization: return "block_quantization";
    case DistortionKind::ResampleBlur: return "resample_blur";
    case DistortionKind::MotionBlur: return "motion_blur";
    case DistortionKind::FrameStutter: return "frame_stutter";
    case DistortionKind::TemporalFlicker: return "temporal_flicker";
    case DistortionKind::FrameDrop: return "frame_drop";
    }
    return "unknown";
}

std::array<DistortionKind, kDistortionKindCount> all_distortion_kinds() {
    std::array<DistortionKind, kDistortionKindCount> kinds{};
    for (int i = 0; i < kDistortionKindCount; ++i) {
        kinds[i] = static_cast<DistortionKind>(i);
    }
    return kinds;
}

DistortionKind parse_distortion_kind(std::string_view name) {
    for (DistortionKind k : all_distortion_kinds()) {
        if (to_string(k) == name) {
            return k;
        }
    }
    throw ConfigError("unknown distortion kind: " + std::string(name));
}

bool is_temporal(DistortionKind kind) {
    return kind == DistortionKind::MotionBlur || kind == DistortionKind::FrameStutter ||
           kind == DistortionKind::TemporalFlicker || kind == DistortionKind::FrameDrop;
}

RawClip synthesize_distortion(const RawClip& clip, const DistortionSpec& spec, std::uint64_t seed) {
    const int kind_index = static_cast<int>(spec.kind);
    if (kind_index < 0 || kind_index >= kDistortionKindCount) {
        throw ConfigError("unknown distortion kind");
    }
    if (spec.level < 0 || spec.level > kMaxDistortionLevel) {
        throw ConfigError("distortion level must be in 0..4");
    }
    if (spec.level == 0) {
        return clip;
    }
    const std::size_t li = static_cast<std::size_t>(spec.level - 1);
    RawClip out = clip;
    Rng rng(derive_seed(seed, 0xD157ULL, static_cast<std::uint64_t>(kind_index)));

    switch (spec.kind) {
    case DistortionKind::GaussianBlur:
        return gaussian_blur(clip, kBlurSigma[li]);
    case DistortionKind::GaussianNoise:
        for (std::size_t i = 0; i < out.data.size(); ++i) {
            out.data[i] = clamp01(clip.data[i] + kNoiseStd[li] * rng.normal());
        }
        return out;
    case DistortionKind::ImpulseNoise:
        for (int t = 0; t < clip.frames; ++t) {
            for (int y = 0; y < clip.height; ++y) {
                for (int x = 0; x < clip.width; ++x) {
                    const double u = rng.uniform();
                    const float v = rng.uniform() < 0.5 ? 0.0f : 1.0f;
                    if (u < kImpulseFraction[li]) {
                        for (int c = 0; c < 3; ++c) {
                            out.at(t, y, x, c) = v;
                        }
                    }
                }
            }
        }
        return out;
    case DistortionKind::ContrastReduction:
        for (std::size_t i = 0; i < out.data.size(); ++i) {
            out.data[i] = clamp01(0.5 + kContrastGain[li] * (clip.data[i] - 0.5));
        }
        return out;
    case DistortionKind::BrightnessShift:
        for (std::size_t i = 0; i < out.data.size(); ++i) {
            out.data[i] = clamp01(clip.data[i] + kBrightnessShift[li]);
        }
        return out;
    case DistortionKind::ColorDesaturation:
        for (std::size_t p = 0; p < out.data.size(); p += 3) {
            const double luma = 0.299 * clip.data[p] + 0.587 * clip.data[p + 1] +
                                0.114 * clip.data[p + 2];
            for (int c = 0; c < 3; ++c) {
                out.data[p + c] = clamp01(luma + kSaturation[li] * (clip.data[p + c] - luma));
            }
        }
        return out;
    case DistortionKind::BlockQuantization:
        return block_quantize(clip, kBlockWeight[li]);
    case DistortionKind::ResampleBlur:
        return resample(clip, kResampleFactor[li]);
    case DistortionKind::MotionBlur: {
        const int window = kMotionWindow[li];
        for (int t = 0; t < clip.frames; ++t) {
            const int t0 = std::max(0, t - window + 1);
            for (std::size_t i = 0; i < clip.frame_size(); ++i) {
                double acc = 0.0;
                for (int s = t0; s <= t; ++s) {
                    acc += clip.data[s * clip.frame_size() + i];
                }
                out.data[t * clip.frame_size() + i] = clamp01(acc / (t - t0 + 1));
            }
        }
        return out;
    }
    case DistortionKind::FrameStutter: {
        const int hold = kStutterHold[li];
        for (int t = 0; t < clip.frames; ++t) {
            copy_frame(clip, (t / hold) * hold, out, t);
        }
        return out;
    }
    case DistortionKind::TemporalFlicker:
        for (int t = 0; t < clip.frames; ++t) {
            const double gain = 1.0 + ((t % 2 == 0) ? 1.0 : -1.0) * kFlickerAmplitude[li];
            for (std::size_t i = 0; i < clip.frame_size(); ++i) {
                const std::size_t j = t * clip.frame_size() + i;
                out.data[j] = clamp01(gain * clip.data[j]);
            }
        }
        return out;
    case DistortionKind::FrameDrop: {
        int last_kept = 0;
        for (int t = 0; t < clip.frames; ++t) {
            const double u = rng.uniform();
            if (t > 0 && u < kDropProbability[li]) {
                copy_frame(clip, last_kept, out, t);
            } else {
                last_kept = t;
            }
        }
        return out;
    }
    }
    throw ConfigError("unknown distortion kind");
}

RawClip generate_scene(int frames, int height, int width, std::uint64_t seed) {
    RawClip clip = RawClip::zeros(frames, height, width);
    Rng rng(derive_seed(seed, 0x5CE7EULL));

    std::array<double, 3> c0{}, c1{};
    for (int c = 0; c < 3; ++c) {
        c0[c] = rng.uniform(0.15, 0.85);
        c1[c] = rng.uniform(0.15, 0.85);
    }
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double grad_freq = rng.uniform(0.02, 0.08);
    const double grad_speed = rng.uniform(0.05, 0.2);

    // Panning fine texture: a seeded random field sampled with a drifting offset.
    const int tex_h = height + 64;
    const int tex_w = width + 64;
    std::vector<double> texture(static_cast<std::size_t>(tex_h) * tex_w);
    for (double& v : texture) {
        v = rng.uniform(-1.0, 1.0);
    }
    // Light smoothing so the texture is band-limited rather than white.
    std::vector<double> smooth(texture.size());
    for (int y = 0; y < tex_h; ++y) {
        for (int x = 0; x < tex_w; ++x) {
            double acc = 0.0;
            int n = 0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int yy = std::clamp(y + dy, 0, tex_h - 1);
                    const int xx = std::clamp(x + dx, 0, tex_w - 1);
                    acc += texture[static_cast<std::size_t>(yy) * tex_w + xx];
                    ++n;
                }
            }
            smooth[static_cast<std::size_t>(y) * tex_w + x] = acc / n;
        }
    }
    const double tex_amp = rng.uniform(0.08, 0.2);
    const double pan_x = rng.uniform(-2.0, 2.0);
    const double pan_y = rng.uniform(-1.0, 1.0);

    struct Grating {
        double y0, x0, h, w, fy, fx, phase_speed, amp;
    };
    std::vector<Grating> gratings(3);
    for (Grating& g : gratings) {
        g.h = rng.uniform(0.25, 0.5) * height;
        g.w = rng.uniform(0.25, 0.5) * width;
        g.y0 = rng.uniform(0.0, height - g.h);
        g.x0 = rng.uniform(0.0, width - g.w);
        g.fy = rng.uniform(-1.2, 1.2);
        g.fx = rng.uniform(-1.2, 1.2);
        g.phase_speed = rng.uniform(0.2, 0.8);
        g.amp = rng.uniform(0.08, 0.2);
    }

    struct Disc {
        double cy, cx, vy, vx, r;
        std::array<double, 3> color;
    };
    std::vector<Disc> discs(3);
    for (Disc& d : discs) {
        d.r = rng.uniform(0.06, 0.15) * std::min(height, width);
        d.cy = rng.uniform(0.0, height);
        d.cx = rng.uniform(0.0, width);
        d.vy = rng.uniform(-2.0, 2.0);
        d.vx = rng.uniform(-2.5, 2.5);
        for (double& c : d.color) {
            c = rng.uniform(0.05, 0.95);
        }
    }

    const double ca = std::cos(angle);
    const double sa = std::sin(angle);
    for (int t = 0; t < frames; ++t) {
        const double ox = 32.0 + pan_x * t;
        const double oy = 32.0 + pan_y * t;
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const double s = 0.5 + 0.5 * std::sin(grad_freq * (x * ca + y * sa) + grad_speed * t);
                const int ty = std::clamp(static_cast<int>(std::lround(y + oy)), 0, tex_h - 1);
                const int tx = std::clamp(static_cast<int>(std::lround(x + ox)), 0, tex_w - 1);
                const double tex = tex_amp * smooth[static_cast<std::size_t>(ty) * tex_w + tx];
                double grating = 0.0;
                for (const Grating& g : gratings) {
                    if (y >= g.y0 && y < g.y0 + g.h && x >= g.x0 && x < g.x0 + g.w) {
                        grating += g.amp * std::sin(g.fy * y + g.fx * x + g.phase_speed * t);
                    }
                }
                std::array<double, 3> px{};
                for (int c = 0; c < 3; ++c) {
                    px[c] = (1 - s) * c0[c] + s * c1[c] + tex + grating;
                }
                for (const Disc& d : discs) {
                    const double dy = y - (d.cy + d.vy * t);
                    const double dx = x - (d.cx + d.vx * t);
                    const double dist = std::sqrt(dy * dy + dx * dx);
                    const double alpha = std::clamp(d.r - dist + 0.5, 0.0, 1.0);
                    for (int c = 0; c < 3; ++c) {
                        px[c] = (1 - alpha) * px[c] + alpha * d.color[c];
                    }
                }
                for (int c = 0; c < 3; ++c) {
                    clip.at(t, y, x, c) = clamp01(px[c]);
                }
            }
        }
    }
    return clip;
}

double synthetic_label(const std::optional<DistortionSpec>& spec) {
    const int level = spec ? spec->level : 0;
    return 1.0 - static_cast<double>(level) / kMaxDistortionLevel;
}

std::string_view to_string(SplitTag tag) {
    switch (tag) {
    case SplitTag::Pretrain: return "pretrain";
    case SplitTag::Labelled: return "labelled";
    case SplitTag::Unlabelled: return "unlabelled";
    case SplitTag::Pristine: return "pristine";
    case SplitTag::Test: return "test";
    }
    return "unknown";
}

SplitTag parse_split_tag(std::string_view name) {
    for (SplitTag t : {SplitTag::Pretrain, SplitTag::Labelled, SplitTag::Unlabelled,
                       SplitTag::Pristine, SplitTag::Test}) {
        if (to_string(t) == name) {
            return t;
        }
    }
    throw FormatError("unknown split tag: " + std::string(name));
}

void DatasetManifest::validate() const {
    std::set<std::string> paths;
    for (const ManifestRecord& r : records) {
        if (r.clip_path.empty()) {
            throw FormatError("manifest record with empty clip path");
        }
        if (!paths.insert(r.clip_path).second) {
            throw FormatError("duplicate clip path in manifest: " + r.clip_path);
        }
        if (r.split == SplitTag::Labelled && !(r.label && std::isfinite(*r.label))) {
            throw FormatError("labelled record without a finite label: " + r.clip_path);
        }
        if (r.split == SplitTag::Pristine && r.distortion) {
            throw FormatError("pristine record carries a distortion: " + r.clip_path);
        }
        if (r.distortion && (r.distortion->level < 0 || r.distortion->level > kMaxDistortionLevel)) {
            throw FormatError("distortion level out of range: " + r.clip_path);
        }
    }
}

namespace {

std::string format_optional(const std::optional<double>& v) {
    if (!v) {
        return "-";
    }
    std::ostringstream os;
    os << std::setprecision(17) << *v;
    return os.str();
}

std::optional<double> parse_optional(const std::string& field) {
    if (field == "-") {
        return std::nullopt;
    }
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(field, &used);
    } catch (const std::exception&) {
        throw FormatError("bad numeric field in manifest: " + field);
    }
    if (used != field.size()) {
        throw FormatError("bad numeric field in manifest: " + field);
    }
    return v;
}

} // namespace

std::string DatasetManifest::to_text() const {
    std::ostringstream os;
    os << "# sslvqa-manifest v1\n";
    os << "# scene_id\tkind\tlevel\tclip_path\tlabel\thidden_label\tsplit\n";
    for (const ManifestRecord& r : records) {
        os << r.scene_id << '\t' << (r.distortion ? to_string(r.distortion->kind) : "none") << '\t'
           << (r.distortion ? r.distortion->level : 0) << '\t' << r.clip_path << '\t'
           << format_optional(r.label) << '\t' << format_optional(r.hidden_label) << '\t'
           << to_string(r.split) << '\n';
    }
    return os.str();
}

DatasetManifest DatasetManifest::from_text(std::string_view text) {
    DatasetManifest m;
    std::istringstream is{std::string(text)};
    std::string line;
    bool header_seen = false;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        if (line[0] == '#') {
            if (line.rfind("# sslvqa-manifest v1", 0) == 0) {
                header_seen = true;
            }
            continue;
        }
        if (!header_seen) {
            throw FormatError("manifest header missing");
        }
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) {
                break;
            }
            start = tab + 1;
        }
        if (fields.size() != 7) {
            throw FormatError("manifest line " + std::to_string(lineno) + ": expected 7 fields");
        }
        ManifestRecord r;
        r.scene_id = fields[0];
        if (fields[1] != "none") {
            DistortionSpec spec;
            try {
                spec.kind = parse_distortion_kind(fields[1]);
                spec.level = std::stoi(fields[2]);
            } catch (const std::exception& e) {
                throw FormatError("manifest line " + std::to_string(lineno) + ": " + e.what());
            }
            r.distortion = spec;
        }
        r.clip_path = fields[3];
        r.label = parse_optional(fields[4]);
        r.hidden_label = parse_optional(fields[5]);
        r.split = parse_split_tag(fields[6]);
        m.records.push_back(std::move(r));
    }
    if (!header_seen) {
        throw FormatError("manifest header missing");
    }
    m.validate();
    return m;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) {
        throw FormatError("cannot open for writing: " + path.string());
    }
    os << to_text();
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw FormatError("cannot open manifest: " + path.string());
    }
    std::stringstream ss;
    ss << is.rdbuf();
    return from_text(ss.str());
}

void Dataset::write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < size(); ++i) {
        const std::filesystem::path p = dir / manifest.records[i].clip_path;
        std::filesystem::create_directories(p.parent_path());
        save_clip(*clips[i], p);
    }
    manifest.save(dir / "manifest.txt");
}

Dataset Dataset::read(const std::filesystem::path& manifest_path) {
    Dataset d;
    d.manifest = DatasetManifest::load(manifest_path);
    const std::filesystem::path root = manifest_path.parent_path();
    for (const ManifestRecord& r : d.manifest.records) {
        d.clips.push_back(std::make_shared<const RawClip>(load_clip(root / r.clip_path)));
    }
    return d;
}

namespace {

std::string scene_name(std::size_t s) {
    std::ostringstream os;
    os << "scene" << std::setw(4) << std::setfill('0') << s;
    return os.str();
}

std::string clip_name(std::size_t s, const std::optional<DistortionSpec>& spec, std::size_t k) {
    std::ostringstream os;
    os << scene_name(s) << '_';
    if (spec) {
        os << std::setw(2) << std::setfill('0') << k << '_';
        if (spec->level == 0) {
            os << "clean";
        } else {
            os << to_string(spec->kind) << '_' << spec->level;
        }
    } else {
        os << "pristine";
    }
    os << ".clip";
    return os.str();
}

} // namespace

Dataset build_pretrain_set(std::span<const RawClip> scenes, std::span<const DistortionSpec> specs,
                           std::uint64_t seed) {
    if (scenes.empty()) {
        throw ConfigError("build_pretrain_set: empty scene list");
    }
    if (specs.empty()) {
        throw ConfigError("build_pretrain_set: empty distortion list");
    }
    Dataset d;
    for (std::size_t s = 0; s < scenes.size(); ++s) {
        for (std::size_t k = 0; k < specs.size(); ++k) {
            ManifestRecord r;
            r.scene_id = scene_name(s);
            r.distortion = specs[k];
            r.clip_path = clip_name(s, specs[k], k);
            r.label = synthetic_label(specs[k]);
            r.split = SplitTag::Pretrain;
            d.manifest.records.push_back(std::move(r));
            d.clips.push_back(std::make_shared<const RawClip>(
                synthesize_distortion(scenes[s], specs[k], derive_seed(seed, s, k))));
        }
    }
    return d;
}

Dataset build_quality_set(std::span<const RawClip> scenes, std::span<const DistortionSpec> specs,
                          double label_noise, std::uint64_t seed) {
    Dataset d = build_pretrain_set(scenes, specs, seed);
    Rng rng(derive_seed(seed, 0x1AB31ULL));
    for (ManifestRecord& r : d.manifest.records) {
        r.split = SplitTag::Labelled;
        if (label_noise > 0.0) {
            *r.label += label_noise * rng.normal();
        }
    }
    for (std::size_t s = 0; s < scenes.size(); ++s) {
        ManifestRecord r;
        r.scene_id = scene_name(s);
        r.clip_path = clip_name(s, std::nullopt, 0);
        r.split = SplitTag::Pristine;
        d.manifest.records.push_back(std::move(r));
        d.clips.push_back(std::make_shared<const RawClip>(scenes[s]));
    }
    return d;
}

SslSplit build_ssl_split(const Dataset& pool, std::size_t n_labelled, std::size_t n_unlabelled,
                         std::uint64_t seed) {
    if (n_labelled == 0) {
        throw ConfigError("build_ssl_split: n_labelled must be positive (supervised loss undefined)");
    }
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const ManifestRecord& r = pool.manifest.records[i];
        const bool has_label = r.label.has_value() || r.hidden_label.has_value();
        if (has_label && r.split != SplitTag::Pristine) {
            eligible.push_back(i);
        }
    }
    if (n_labelled + n_unlabelled > eligible.size()) {
        throw ConfigError("build_ssl_split: insufficient eligible records");
    }
    Rng rng(derive_seed(seed, 0x5B117ULL));
    rng.shuffle(eligible);

    SslSplit split;
    auto emit = [&](Dataset& dst, std::size_t idx, SplitTag tag) {
        ManifestRecord r = pool.manifest.records[idx];
        const std::optional<double> y = r.label ? r.label : r.hidden_label;
        r.split = tag;
        if (tag == SplitTag::Labelled) {
            r.label = y;
            r.hidden_label.reset();
        } else {
            r.label.reset();
            r.hidden_label = y;
        }
        dst.manifest.records.push_back(std::move(r));
        dst.clips.push_back(pool.clips[idx]);
    };
    for (std::size_t k = 0; k < eligible.size(); ++k) {
        if (k < n_labelled) {
            emit(split.labelled, eligible[k], SplitTag::Labelled);
        } else if (k < n_labelled + n_unlabelled) {
            emit(split.unlabelled, eligible[k], SplitTag::Unlabelled);
        } else {
            emit(split.test, eligible[k], SplitTag::Test);
        }
    }
    return split;
}

Dataset select_split(const Dataset& dataset, SplitTag tag) {
    Dataset d;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (dataset.manifest.records[i].split == tag) {
            d.manifest.records.push_back(dataset.manifest.records[i]);
            d.clips.push_back(dataset.clips[i]);
        }
    }
    return d;
}

} // namespace sslvqa
