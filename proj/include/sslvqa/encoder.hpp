#pragma once

#include "sslvqa/autodiff.hpp"
#include "sslvqa/sampler.hpp"

#include <cstdint>
#include <vector>

namespace sslvqa {

using ad::Matrix;

/// Backbone shape. Tokens are tubelets of `t_stride` frames over one grid cell,
/// so N = (n_frames / t_stride) * grid_h * grid_w.
struct EncoderConfig {
    FragmentConfig fragment;
    int t_stride = 2;
    int channels = 16;
    int blocks = 2;

    int time_groups() const { return fragment.n_frames / t_stride; }
    int tokens() const { return time_groups() * fragment.cells(); }
    int token_dim() const { return t_stride * fragment.patch * fragment.patch * 3; }
    void validate() const;
    bool operator==(const EncoderConfig&) const = default;
};

struct EncoderBlock {
    Matrix mix_w;      ///< C x C channel mixing
    Matrix mix_b;      ///< 1 x C
    Matrix temporal_w; ///< C x C applied to the temporal-partner difference
};

/// Weights of the backbone f_theta.
struct EncoderParams {
    EncoderConfig config;
    Matrix embed_w; ///< token_dim x C
    Matrix embed_b; ///< 1 x C
    std::vector<EncoderBlock> blocks;

    std::vector<Matrix*> tensors();
    std::vector<const Matrix*> tensors() const;
};

/// Pointwise regressor head g_phi: two 1x1x1 layers with a SiLU between them.
struct HeadParams {
    Matrix w1; ///< C x hidden
    Matrix b1; ///< 1 x hidden
    Matrix w2; ///< hidden x 1
    Matrix b2; ///< 1 x 1

    std::vector<Matrix*> tensors();
    std::vector<const Matrix*> tensors() const;
};

/// Scaled normal initialisation: embedding weights ~ N(0, 16/token_dim) (pixels are
/// centred at 0.5 and have roughly quarter-unit spread), mixing weights ~ N(0, 1/C),
/// temporal weights ~ N(0, 0.25/C), biases zero.
EncoderParams init_encoder(const EncoderConfig& cfg, std::uint64_t seed);
/// w1 ~ N(0, 1/C), w2 ~ N(0, 1/hidden), biases zero.
HeadParams init_head(int channels, int hidden, std::uint64_t seed);

/// Parameters bound to a tape, either as trainable leaves or constants.
struct BoundEncoder {
    const EncoderConfig* config = nullptr;
    ad::Var embed_w, embed_b;
    std::vector<ad::Var> mix_w, mix_b, temporal_w;

    std::vector<ad::Var> vars() const;
};

struct BoundHead {
    ad::Var w1, b1, w2, b2;

    std::vector<ad::Var> vars() const;
};

BoundEncoder bind(ad::Tape& tape, const EncoderParams& params, bool trainable);
BoundHead bind(ad::Tape& tape, const HeadParams& params, bool trainable);

/// N x token_dim matrix of centred tubelet voxels.
Matrix fragment_tokens(const Fragment& fragment, const EncoderConfig& cfg);

/// Temporal partner of every token for block `block`: even blocks pair groups
/// (0,1),(2,3),..., odd blocks pair each group with the next one (cyclic).
std::vector<Eigen::Index> temporal_partners(const EncoderConfig& cfg, int block);

/// Feature set z (N x C).
ad::Var encode(ad::Tape& tape, const Fragment& fragment, const BoundEncoder& enc);
Matrix encode(const Fragment& fragment, const EncoderParams& params);

struct HeadOutput {
    ad::Var token_map; ///< N x 1
    ad::Var score;     ///< 1 x 1, mean of token_map
};

HeadOutput regress_head(ad::Var z, const BoundHead& head);

struct HeadValues {
    Eigen::VectorXd token_map;
    double score = 0.0;
};

HeadValues regress_head(const Matrix& z, const HeadParams& head);

} // namespace sslvqa
