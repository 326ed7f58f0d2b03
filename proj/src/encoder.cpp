#include "sslvqa/encoder.hpp"

#include "sslvqa/errors.hpp"
#include "sslvqa/rng.hpp"

#include <cmath>

namespace sslvqa {

namespace {

Matrix normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) {
            m(i, j) = stddev * rng.normal();
        }
    }
    return m;
}

} // namespace

void EncoderConfig::validate() const {
    if (t_stride < 1 || channels < 1 || blocks < 0) {
        throw ConfigError("encoder: t_stride, channels must be positive");
    }
    if (fragment.n_frames % t_stride != 0) {
        throw ConfigError("encoder: n_frames must be a multiple of t_stride");
    }
    if (fragment.grid_h < 1 || fragment.grid_w < 1 || fragment.patch < 1) {
        throw ConfigError("encoder: invalid fragment geometry");
    }
}

std::vector<Matrix*> EncoderParams::tensors() {
    std::vector<Matrix*> out{&embed_w, &embed_b};
    for (EncoderBlock& b : blocks) {
        out.push_back(&b.mix_w);
        out.push_back(&b.mix_b);
        out.push_back(&b.temporal_w);
    }
    return out;
}

std::vector<const Matrix*> EncoderParams::tensors() const {
    std::vector<const Matrix*> out{&embed_w, &embed_b};
    for (const EncoderBlock& b : blocks) {
        out.push_back(&b.mix_w);
        out.push_back(&b.mix_b);
        out.push_back(&b.temporal_w);
    }
    return out;
}

std::vector<Matrix*> HeadParams::tensors() {
    return {&w1, &b1, &w2, &b2};
}

std::vector<const Matrix*> HeadParams::tensors() const {
    return {&w1, &b1, &w2, &b2};
}

EncoderParams init_encoder(const EncoderConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(derive_seed(seed, 0xE4C0DEULL));
    const int c = cfg.channels;
    const int d = cfg.token_dim();
    EncoderParams p;
    p.config = cfg;
    p.embed_w = normal_matrix(rng, d, c, 4.0 / std::sqrt(static_cast<double>(d)));
    p.embed_b = Matrix::Zero(1, c);
    for (int b = 0; b < cfg.blocks; ++b) {
        EncoderBlock blk;
        blk.mix_w = normal_matrix(rng, c, c, 1.0 / std::sqrt(static_cast<double>(c)));
        blk.mix_b = Matrix::Zero(1, c);
        blk.temporal_w = normal_matrix(rng, c, c, 0.5 / std::sqrt(static_cast<double>(c)));
        p.blocks.push_back(std::move(blk));
    }
    return p;
}

HeadParams init_head(int channels, int hidden, std::uint64_t seed) {
    if (channels < 1 || hidden < 1) {
        throw ConfigError("head: channels and hidden must be positive");
    }
    Rng rng(derive_seed(seed, 0x4EADULL));
    HeadParams h;
    h.w1 = normal_matrix(rng, channels, hidden, 1.0 / std::sqrt(static_cast<double>(channels)));
    h.b1 = Matrix::Zero(1, hidden);
    h.w2 = normal_matrix(rng, hidden, 1, 1.0 / std::sqrt(static_cast<double>(hidden)));
    h.b2 = Matrix::Zero(1, 1);
    return h;
}

std::vector<ad::Var> BoundEncoder::vars() const {
    std::vector<ad::Var> out{embed_w, embed_b};
    for (std::size_t b = 0; b < mix_w.size(); ++b) {
        out.push_back(mix_w[b]);
        out.push_back(mix_b[b]);
        out.push_back(temporal_w[b]);
    }
    return out;
}

std::vector<ad::Var> BoundHead::vars() const {
    return {w1, b1, w2, b2};
}

BoundEncoder bind(ad::Tape& tape, const EncoderParams& params, bool trainable) {
    auto leaf = [&](const Matrix& m) { return trainable ? tape.parameter(m) : tape.constant(m); };
    BoundEncoder e;
    e.config = &params.config;
    e.embed_w = leaf(params.embed_w);
    e.embed_b = leaf(params.embed_b);
    for (const EncoderBlock& b : params.blocks) {
        e.mix_w.push_back(leaf(b.mix_w));
        e.mix_b.push_back(leaf(b.mix_b));
        e.temporal_w.push_back(leaf(b.temporal_w));
    }
    return e;
}

BoundHead bind(ad::Tape& tape, const HeadParams& params, bool trainable) {
    auto leaf = [&](const Matrix& m) { return trainable ? tape.parameter(m) : tape.constant(m); };
    return BoundHead{leaf(params.w1), leaf(params.b1), leaf(params.w2), leaf(params.b2)};
}

Matrix fragment_tokens(const Fragment& fragment, const EncoderConfig& cfg) {
    const FragmentConfig& fc = cfg.fragment;
    if (fragment.frames != fc.n_frames || fragment.height != fc.height() ||
        fragment.width != fc.width()) {
        throw ConfigError("encoder: fragment shape does not match encoder config");
    }
    const int groups = cfg.time_groups();
    const int cells = fc.cells();
    Matrix x(static_cast<Eigen::Index>(groups) * cells, cfg.token_dim());
    for (int g = 0; g < groups; ++g) {
        for (int i = 0; i < fc.grid_h; ++i) {
            for (int j = 0; j < fc.grid_w; ++j) {
                const Eigen::Index row = static_cast<Eigen::Index>(g) * cells + i * fc.grid_w + j;
                Eigen::Index col = 0;
                for (int dt = 0; dt < cfg.t_stride; ++dt) {
                    const int t = g * cfg.t_stride + dt;
                    for (int dy = 0; dy < fc.patch; ++dy) {
                        for (int dx = 0; dx < fc.patch; ++dx) {
                            for (int c = 0; c < 3; ++c) {
                                x(row, col++) =
                                    fragment.at(t, i * fc.patch + dy, j * fc.patch + dx, c) - 0.5;
                            }
                        }
                    }
                }
            }
        }
    }
    return x;
}

std::vector<Eigen::Index> temporal_partners(const EncoderConfig& cfg, int block) {
    const int groups = cfg.time_groups();
    const int cells = cfg.fragment.cells();
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(groups) * cells);
    for (int g = 0; g < groups; ++g) {
        int partner;
        if (block % 2 == 0) {
            partner = g ^ 1;
            if (partner >= groups) {
                partner = g;
            }
        } else {
            partner = (g + 1) % groups;
        }
        for (int c = 0; c < cells; ++c) {
            idx[static_cast<std::size_t>(g) * cells + c] =
                static_cast<Eigen::Index>(partner) * cells + c;
        }
    }
    return idx;
}

ad::Var encode(ad::Tape& tape, const Fragment& fragment, const BoundEncoder& enc) {
    const EncoderConfig& cfg = *enc.config;
    ad::Var x = tape.constant(fragment_tokens(fragment, cfg));
    ad::Var h = ad::silu(ad::affine(x, enc.embed_w, enc.embed_b));
    for (std::size_t b = 0; b < enc.mix_w.size(); ++b) {
        h = h + ad::silu(ad::affine(h, enc.mix_w[b], enc.mix_b[b]));
        ad::Var partner = ad::gather_rows(h, temporal_partners(cfg, static_cast<int>(b)));
        h = h + ad::matmul(partner - h, enc.temporal_w[b]);
    }
    return h;
}

Matrix encode(const Fragment& fragment, const EncoderParams& params) {
    ad::Tape tape;
    return encode(tape, fragment, bind(tape, params, false)).value();
}

HeadOutput regress_head(ad::Var z, const BoundHead& head) {
    ad::Var hidden = ad::silu(ad::affine(z, head.w1, head.b1));
    ad::Var map = ad::affine(hidden, head.w2, head.b2);
    return HeadOutput{map, ad::mean(map)};
}

HeadValues regress_head(const Matrix& z, const HeadParams& head) {
    ad::Tape tape;
    HeadOutput out = regress_head(tape.constant(z), bind(tape, head, false));
    return HeadValues{out.token_map.value().col(0), out.score.item()};
}

} // namespace sslvqa
