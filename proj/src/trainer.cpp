#include "sslvqa/trainer.hpp"

#include "sslvqa/losses.hpp"
#include "sslvqa/rng.hpp"
#include "sslvqa/sampler.hpp"

#include <algorithm>
#include <iomanip>
#include <map>
#include <sstream>

namespace sslvqa {

namespace {

// Stream labels for derive_seed.
constexpr std::uint64_t kStreamStep = 0x57E9ULL;
constexpr std::uint64_t kStreamPristine = 0x9215ULL;
constexpr std::uint64_t kStreamShuffle = 0x5FF1ULL;

AdamWConfig optimiser_config(const TrainConfig& cfg) {
    AdamWConfig a;
    a.lr = cfg.lr;
    a.weight_decay = cfg.weight_decay;
    return a;
}

std::vector<Matrix*> regressor_tensors(TrainState& s) {
    std::vector<Matrix*> out = s.regressor_encoder.tensors();
    if (s.stage == TrainStage::Ssl) {
        for (Matrix* m : s.head.tensors()) {
            out.push_back(m);
        }
    }
    return out;
}

std::vector<const Matrix*> const_view(const std::vector<Matrix*>& v) {
    return {v.begin(), v.end()};
}

/// Applies one optimiser update per model; returns false when the step was rejected.
bool apply_update(TrainState& s, std::vector<Matrix>& reg_grads, std::vector<Matrix>& dist_grads) {
    const AdamWConfig oc = optimiser_config(s.config);
    std::vector<Matrix*> reg = regressor_tensors(s);
    for (const Matrix& g : reg_grads) {
        if (!g.allFinite()) return false;
    }
    for (const Matrix& g : dist_grads) {
        if (!g.allFinite()) return false;
    }
    adamw_step(reg, reg_grads, s.opt_regressor, oc);
    if (s.stage == TrainStage::Ssl) {
        std::vector<Matrix*> dist = s.distance_encoder.tensors();
        adamw_step(dist, dist_grads, s.opt_distance, oc);
    }
    return true;
}

void note_rejected(TrainState& s, StepRecord& rec) {
    rec.skipped = true;
    ++s.consecutive_rejected;
    if (s.consecutive_rejected >= s.config.max_rejected_steps) {
        throw TrainingAborted("training aborted after " + std::to_string(s.consecutive_rejected) +
                              " consecutive non-finite steps");
    }
}

// ---------------------------------------------------------------- pretraining

std::vector<std::vector<std::size_t>> scene_groups(const Dataset& data) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const ManifestRecord& r = data.manifest.records[i];
        if (r.split == SplitTag::Pristine) {
            continue;
        }
        auto [it, inserted] = groups.try_emplace(r.scene_id);
        if (inserted) {
            order.push_back(r.scene_id);
        }
        it->second.push_back(i);
    }
    std::vector<std::vector<std::size_t>> out;
    for (const std::string& id : order) {
        out.push_back(groups[id]);
    }
    return out;
}

void pretrain_epoch(TrainState& s, const Dataset& data) {
    const TrainConfig& cfg = s.config;
    const auto groups = scene_groups(data);
    if (groups.empty()) {
        throw ConfigError("pretraining: no distorted records");
    }
    const std::size_t k_versions = static_cast<std::size_t>(cfg.pretrain_versions);
    Rng rng(0);
    rng.deserialize(s.rng_state);
    std::vector<std::size_t> order(groups.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    const std::size_t per_batch = static_cast<std::size_t>(cfg.pretrain_scenes);
    const auto kind = cfg.cosine_contrastive ? losses::ContrastiveKind::Cosine
                                             : losses::ContrastiveKind::Statistical;
    double epoch_total = 0.0;
    int epoch_steps = 0;
    for (std::size_t start = 0; start + per_batch <= order.size(); start += per_batch) {
        const std::uint64_t step_seed = derive_seed(cfg.seed, kStreamStep, s.global_step);
        std::vector<std::vector<const RawClip*>> batch_groups;
        for (std::size_t g = start; g < start + per_batch; ++g) {
            std::vector<std::size_t> members = groups[order[g]];
            rng.shuffle(members);
            if (members.size() > k_versions) {
                members.resize(k_versions);
            }
            std::sort(members.begin(), members.end());
            std::vector<const RawClip*> clips;
            for (std::size_t m : members) clips.push_back(&data.clip(m));
            batch_groups.push_back(std::move(clips));
        }

        ad::Tape tape;
        const BoundEncoder enc = bind(tape, s.regressor_encoder, true);
        std::vector<ad::Var> z1, z2;
        for (std::size_t g = 0; g < batch_groups.size(); ++g) {
            // Views are content aligned across the versions of one scene.
            const auto v1 = content_aligned_sample(batch_groups[g], cfg.encoder.fragment,
                                                   derive_seed(step_seed, 1, g));
            const auto v2 = content_aligned_sample(batch_groups[g], cfg.encoder.fragment,
                                                   derive_seed(step_seed, 2, g));
            for (std::size_t i = 0; i < v1.size(); ++i) {
                z1.push_back(encode(tape, v1[i], enc));
                z2.push_back(encode(tape, v2[i], enc));
            }
        }
        StepRecord rec;
        rec.epoch = s.epoch;
        rec.step = s.global_step;
        try {
            ad::Var loss = losses::contrastive_pretrain_loss(z1, z2, cfg.tau, kind, cfg.ridge);
            tape.backward(loss);
            std::vector<Matrix> grads;
            for (ad::Var v : enc.vars()) grads.push_back(tape.grad(v));
            std::vector<Matrix> none;
            rec.total = loss.item();
            if (apply_update(s, grads, none)) {
                s.consecutive_rejected = 0;
                epoch_total += rec.total;
                ++epoch_steps;
            } else {
                note_rejected(s, rec);
            }
        } catch (const NumericError& e) {
            if (dynamic_cast<const TrainingAborted*>(&e) != nullptr) throw;
            note_rejected(s, rec);
        }
        s.log.push_back(rec);
        ++s.global_step;
    }
    s.epoch_loss.push_back(epoch_steps > 0 ? epoch_total / epoch_steps : 0.0);
    s.rng_state = rng.serialize();
    ++s.epoch;
}

// ------------------------------------------------------------------------ SSL

struct SampleOutputs {
    std::vector<ad::Var> qr1, qr2, qd1, qd2;
};

ad::Var column(const std::vector<ad::Var>& xs, std::size_t begin, std::size_t end) {
    return ad::concat_rows(std::vector<ad::Var>(xs.begin() + static_cast<std::ptrdiff_t>(begin),
                                                xs.begin() + static_cast<std::ptrdiff_t>(end)));
}

void ssl_epoch(TrainState& s, const Dataset& labelled, const Dataset& unlabelled,
               const Dataset& pristine) {
    const TrainConfig& cfg = s.config;
    const FragmentConfig& fc = cfg.encoder.fragment;
    if (labelled.size() < 2) {
        throw ConfigError("SSL training needs at least two labelled clips");
    }
    Rng rng(0);
    rng.deserialize(s.rng_state);
    std::vector<std::size_t> lab_order(labelled.size());
    for (std::size_t i = 0; i < lab_order.size(); ++i) lab_order[i] = i;
    rng.shuffle(lab_order);

    const bool use_unlabelled = cfg.batch_unlabelled > 0 && unlabelled.size() > 0;
    std::vector<std::size_t> unl_order;
    if (use_unlabelled) {
        unl_order.resize(unlabelled.size());
        for (std::size_t i = 0; i < unl_order.size(); ++i) unl_order[i] = i;
        rng.shuffle(unl_order);
    }
    std::size_t unl_cursor = 0;

    const std::size_t bl = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_labelled),
                                                 labelled.size());
    const std::size_t bu = use_unlabelled ? static_cast<std::size_t>(cfg.batch_unlabelled) : 0;
    const bool want_consistency = !cfg.no_consistency && cfg.lambda_c > 0.0;
    const bool want_transfer = !cfg.no_knowledge && cfg.lambda_u > 0.0 && bu >= 2;
    const bool need_second_view = want_consistency || (want_transfer && !cfg.no_consistency);
    const double tau = cfg.tau;

    double epoch_total = 0.0;
    int epoch_steps = 0;
    for (std::size_t start = 0; start + bl <= lab_order.size(); start += bl) {
        const std::uint64_t step_seed = derive_seed(cfg.seed, kStreamStep, s.global_step);
        std::vector<const RawClip*> clips;
        std::vector<double> labels;
        for (std::size_t i = start; i < start + bl; ++i) {
            clips.push_back(&labelled.clip(lab_order[i]));
            labels.push_back(*labelled.manifest.records[lab_order[i]].label);
        }
        for (std::size_t i = 0; i < bu; ++i) {
            clips.push_back(&unlabelled.clip(unl_order[unl_cursor]));
            unl_cursor = (unl_cursor + 1) % unl_order.size();
        }

        ad::Tape tape;
        const BoundEncoder enc_r = bind(tape, s.regressor_encoder, true);
        const BoundHead head = bind(tape, s.head, true);
        const BoundEncoder enc_d = bind(tape, s.distance_encoder, true);
        StepRecord rec;
        rec.epoch = s.epoch;
        rec.step = s.global_step;
        try {
            SampleOutputs out;
            for (std::size_t i = 0; i < clips.size(); ++i) {
                const bool is_labelled = i < bl;
                const std::uint64_t sample_seed =
                    derive_seed(step_seed, is_labelled ? 0 : 1, is_labelled ? i : i - bl);
                const auto [f1, f2] = qcs_pair(*clips[i], fc, sample_seed);
                out.qr1.push_back(regress_head(encode(tape, f1, enc_r), head).score);
                out.qd1.push_back(q_distance(encode(tape, f1, enc_d), s.pristine, tau, cfg.ridge));
                if (need_second_view) {
                    out.qr2.push_back(regress_head(encode(tape, f2, enc_r), head).score);
                    out.qd2.push_back(q_distance(encode(tape, f2, enc_d), s.pristine, tau, cfg.ridge));
                }
            }
            const std::size_t b = clips.size();
            Matrix y(static_cast<Eigen::Index>(bl), 1);
            for (std::size_t i = 0; i < bl; ++i) y(static_cast<Eigen::Index>(i), 0) = labels[i];
            ad::Var ls = losses::supervised_loss(column(out.qr1, 0, bl), column(out.qd1, 0, bl),
                                                 tape.constant(y));
            ad::Var total = ls;
            rec.supervised = ls.item();
            if (want_consistency) {
                ad::Var lc = losses::intra_consistency_loss(column(out.qr1, 0, b), column(out.qr2, 0, b),
                                                            column(out.qd1, 0, b), column(out.qd2, 0, b));
                rec.consistency = lc.item();
                total = total + ad::scale(lc, cfg.lambda_c);
            }
            if (want_transfer) {
                ad::Var qr = column(out.qr1, bl, b);
                ad::Var qd = column(out.qd1, bl, b);
                ad::Var lu;
                if (cfg.no_consistency) {
                    lu = losses::mutual_transfer_loss(qr, qd);
                } else {
                    const losses::StabilityErrors eps = losses::stability_errors(
                        qr, column(out.qr2, bl, b), qd, column(out.qd2, bl, b));
                    rec.eps_r = eps.regressor;
                    rec.eps_d = eps.distance;
                    rec.mask = losses::transfer_mask(eps);
                    lu = losses::knowledge_transfer_loss(qr, qd, eps);
                }
                rec.transfer = lu.item();
                total = total + ad::scale(lu, cfg.lambda_u);
            }
            rec.total = total.item();
            tape.backward(total);
            std::vector<Matrix> reg_grads, dist_grads;
            for (ad::Var v : enc_r.vars()) reg_grads.push_back(tape.grad(v));
            for (ad::Var v : head.vars()) reg_grads.push_back(tape.grad(v));
            for (ad::Var v : enc_d.vars()) dist_grads.push_back(tape.grad(v));
            if (apply_update(s, reg_grads, dist_grads)) {
                s.consecutive_rejected = 0;
                epoch_total += rec.total;
                ++epoch_steps;
            } else {
                note_rejected(s, rec);
            }
        } catch (const NumericError& e) {
            if (dynamic_cast<const TrainingAborted*>(&e) != nullptr) throw;
            note_rejected(s, rec);
        }
        s.log.push_back(rec);
        ++s.global_step;
    }
    s.epoch_loss.push_back(epoch_steps > 0 ? epoch_total / epoch_steps : 0.0);
    s.rng_state = rng.serialize();
    ++s.epoch;
    try {
        s.pristine = fit_pristine_model(pristine, s.distance_encoder, cfg,
                                        derive_seed(cfg.seed, kStreamPristine, s.epoch));
    } catch (const NumericError& e) {
        // No step can recover a distance model whose pristine features overflow.
        throw TrainingAborted(std::string("pristine refit failed: ") + e.what());
    }
}

TrainState init_ssl_state(const Dataset& pristine, const EncoderParams& init, const TrainConfig& cfg) {
    cfg.validate();
    if (!(init.config == cfg.encoder)) {
        throw ConfigError("initial backbone does not match the encoder config");
    }
    TrainState s;
    s.stage = TrainStage::Ssl;
    s.config = cfg;
    s.regressor_encoder = init;
    s.distance_encoder = init;
    s.head = init_head(cfg.encoder.channels, cfg.head_hidden, derive_seed(cfg.seed, 0x4EAD));
    s.opt_regressor = make_adamw_state(const_view(regressor_tensors(s)));
    s.opt_distance = make_adamw_state(const_view(s.distance_encoder.tensors()));
    s.rng_state = Rng(derive_seed(cfg.seed, kStreamShuffle)).serialize();
    s.pristine = fit_pristine_model(pristine, s.distance_encoder, cfg,
                                    derive_seed(cfg.seed, kStreamPristine, 0));
    return s;
}

} // namespace

std::string format_step_record(const StepRecord& r) {
    std::ostringstream os;
    os << std::setprecision(10) << "epoch=" << r.epoch << " step=" << r.step << " total=" << r.total
       << " supervised=" << r.supervised << " consistency=" << r.consistency
       << " transfer=" << r.transfer << " eps_r=" << r.eps_r << " eps_d=" << r.eps_d
       << " mask=" << r.mask << " skipped=" << (r.skipped ? 1 : 0);
    return os.str();
}

PristineModel fit_pristine_model(const Dataset& pristine, const EncoderParams& encoder,
                                 const TrainConfig& cfg, std::uint64_t seed) {
    if (pristine.size() == 0) {
        throw ConfigError("pristine corpus is empty");
    }
    std::vector<Matrix> features;
    for (std::size_t i = 0; i < pristine.size(); ++i) {
        for (int f = 0; f < cfg.pristine_fragments; ++f) {
            const Fragment frag = qcs_sample(pristine.clip(i), cfg.encoder.fragment,
                                             derive_seed(seed, i, static_cast<std::uint64_t>(f)));
            features.push_back(encode(frag, encoder));
        }
    }
    PristineModel model = fit_pristine_corpus(features, cfg.ridge);
    model.n_source_clips = pristine.size();
    return model;
}

TrainState pretrain_stvqrl(const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    TrainState s;
    s.stage = TrainStage::Pretrain;
    s.config = cfg;
    s.regressor_encoder = init_encoder(cfg.encoder, derive_seed(cfg.seed, 0xE4C));
    s.opt_regressor = make_adamw_state(const_view(s.regressor_encoder.tensors()));
    s.rng_state = Rng(derive_seed(cfg.seed, kStreamShuffle)).serialize();
    const auto groups = scene_groups(data);
    if (groups.empty()) {
        throw ConfigError("pretraining: manifest has no distorted records");
    }
    if (cfg.pretrain_versions >= 2) {
        for (const auto& g : groups) {
            if (g.size() < 2) {
                throw ConfigError("pretraining: every scene needs at least two distorted versions");
            }
        }
    }
    if (static_cast<std::size_t>(cfg.pretrain_scenes) > groups.size()) {
        throw ConfigError("pretraining: pretrain_scenes exceeds the number of scenes");
    }
    return resume_pretrain(std::move(s), data, on_epoch);
}

TrainState resume_pretrain(TrainState s, const Dataset& data, const EpochCallback& on_epoch) {
    if (s.stage != TrainStage::Pretrain) {
        throw ConfigError("resume_pretrain: checkpoint is not a pretraining state");
    }
    while (s.epoch < s.config.epochs) {
        pretrain_epoch(s, data);
        if (on_epoch) on_epoch(s);
    }
    return s;
}

TrainState train_sslvqa(const Dataset& labelled, const Dataset& unlabelled, const Dataset& pristine,
                        const EncoderParams& init, const TrainConfig& cfg,
                        const EpochCallback& on_epoch) {
    if (labelled.size() == 0) {
        throw ConfigError("SSL training: empty labelled set");
    }
    return resume_sslvqa(init_ssl_state(pristine, init, cfg), labelled, unlabelled, pristine,
                         on_epoch);
}

TrainState resume_sslvqa(TrainState s, const Dataset& labelled, const Dataset& unlabelled,
                         const Dataset& pristine, const EpochCallback& on_epoch) {
    if (s.stage != TrainStage::Ssl) {
        throw ConfigError("resume_sslvqa: checkpoint is not an SSL state");
    }
    while (s.epoch < s.config.epochs) {
        ssl_epoch(s, labelled, unlabelled, pristine);
        if (on_epoch) on_epoch(s);
    }
    return s;
}

TrainState train_labels_only(const Dataset& labelled, const Dataset& pristine,
                             const EncoderParams& init, const TrainConfig& cfg,
                             const EpochCallback& on_epoch) {
    TrainConfig c = cfg;
    c.batch_unlabelled = 0;
    return train_sslvqa(labelled, Dataset{}, pristine, init, c, on_epoch);
}

TrainState finetune(TrainState s, const Dataset& small_labelled, const Dataset& pristine, int epochs,
                    const EpochCallback& on_epoch) {
    if (s.stage != TrainStage::Ssl) {
        throw ConfigError("finetune: checkpoint is not an SSL state");
    }
    if (epochs < 0) {
        throw ConfigError("finetune: epochs must be non-negative");
    }
    if (epochs == 0) {
        return s;
    }
    if (small_labelled.size() < 2) {
        throw ConfigError("finetune: need at least two labelled clips");
    }
    s.config.batch_unlabelled = 0;
    s.config.epochs = s.epoch + epochs;
    return resume_sslvqa(std::move(s), small_labelled, Dataset{}, pristine, on_epoch);
}

} // namespace sslvqa
