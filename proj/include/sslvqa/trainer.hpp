#pragma once

#include "sslvqa/clipio.hpp"
#include "sslvqa/config.hpp"
#include "sslvqa/encoder.hpp"
#include "sslvqa/errors.hpp"
#include "sslvqa/optim.hpp"
#include "sslvqa/statquality.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace sslvqa {

/// Thrown when training hits too many consecutive non-finite steps.
class TrainingAborted : public NumericError {
public:
    using NumericError::NumericError;
};

enum class TrainStage : std::uint32_t { Pretrain = 0, Ssl = 1 };

/// One optimisation step as written to the training log.
struct StepRecord {
    int epoch = 0;
    std::int64_t step = 0;
    double total = 0.0;
    double supervised = 0.0;
    double consistency = 0.0;
    double transfer = 0.0;
    double eps_r = 0.0;
    double eps_d = 0.0;
    int mask = -1; ///< -1 when no transfer term was evaluated
    bool skipped = false;
};

/// Complete resumable training state. For pretraining only `regressor_encoder`
/// (the shared backbone theta) and `opt_regressor` are used.
struct TrainState {
    TrainStage stage = TrainStage::Pretrain;
    TrainConfig config;
    EncoderParams regressor_encoder; ///< theta' (or theta during pretraining)
    EncoderParams distance_encoder;  ///< theta''
    HeadParams head;                 ///< phi
    PristineModel pristine;
    AdamWState opt_regressor; ///< over theta' and phi
    AdamWState opt_distance;  ///< over theta''
    int epoch = 0;            ///< completed epochs
    std::int64_t global_step = 0;
    int consecutive_rejected = 0;
    std::string rng_state;
    std::vector<double> epoch_loss;
    std::vector<StepRecord> log;
};

using EpochCallback = std::function<void(const TrainState&)>;

std::string format_step_record(const StepRecord& r);

/// Stage 1: statistical contrastive pretraining over scene groups of `data`
/// (non-pristine records grouped by scene_id).
TrainState pretrain_stvqrl(const Dataset& data, const TrainConfig& cfg,
                           const EpochCallback& on_epoch = {});
/// Continues a pretraining state until state.config.epochs are complete.
TrainState resume_pretrain(TrainState state, const Dataset& data,
                           const EpochCallback& on_epoch = {});

/// Stage 2: dual-model SSL. Both encoders start from `init`.
TrainState train_sslvqa(const Dataset& labelled, const Dataset& unlabelled, const Dataset& pristine,
                        const EncoderParams& init, const TrainConfig& cfg,
                        const EpochCallback& on_epoch = {});
TrainState resume_sslvqa(TrainState state, const Dataset& labelled, const Dataset& unlabelled,
                         const Dataset& pristine, const EpochCallback& on_epoch = {});

/// Labels-only variant: supervised + consistency losses, no unlabelled data.
TrainState train_labels_only(const Dataset& labelled, const Dataset& pristine,
                             const EncoderParams& init, const TrainConfig& cfg,
                             const EpochCallback& on_epoch = {});

/// Continues an SSL state for `epochs` more epochs with the labels-only losses on
/// a small labelled set. Optimiser moments carry over.
TrainState finetune(TrainState state, const Dataset& small_labelled, const Dataset& pristine,
                    int epochs, const EpochCallback& on_epoch = {});

/// Pools `cfg.pristine_fragments` seeded fragments per pristine clip, encoded with
/// `encoder`, into one MVG fit.
PristineModel fit_pristine_model(const Dataset& pristine, const EncoderParams& encoder,
                                 const TrainConfig& cfg, std::uint64_t seed);

} // namespace sslvqa
