// sslvqa: command-line driver for data synthesis, training, evaluation and maps.

#include "sslvqa/checkpoint.hpp"
#include "sslvqa/clipio.hpp"
#include "sslvqa/config.hpp"
#include "sslvqa/errors.hpp"
#include "sslvqa/eval.hpp"
#include "sslvqa/gradsuite.hpp"
#include "sslvqa/rng.hpp"
#include "sslvqa/trainer.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace sslvqa;

namespace {

enum ExitCode { kOk = 0, kConfigError = 1, kNumericAbort = 2, kVerificationFailure = 3 };

// Stream label for split seeds.
constexpr std::uint64_t kSplitStream = 0x5B1;

struct Options {
    std::string profile = "published";
    std::string config_file;
    std::vector<std::string> sets;
    std::vector<std::string> ablations;
    std::string out;
    std::string clip;
    bool resume = false;
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

RunConfig effective_config(const Options& o) {
    if (o.profile != "published" && o.profile != "desk") {
        throw ConfigError("unknown profile: " + o.profile);
    }
    RunConfig rc = RunConfig::defaults(o.profile == "published" ? Profile::Published : Profile::Desk);
    if (const char* env = std::getenv("SSLVQA_SEED")) {
        rc.set("seed", env);
    }
    if (!o.config_file.empty()) {
        rc.merge_file(o.config_file);
    }
    for (const std::string& kv : o.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        }
        rc.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    for (const std::string& a : o.ablations) {
        if (a != "no_consistency" && a != "no_knowledge" && a != "cosine_contrastive") {
            throw ConfigError("unknown ablation: " + a);
        }
        rc.set(a, "true");
    }
    if (!o.out.empty()) {
        rc.set("out_dir", o.out);
    }
    rc.train_config(); // validates every training key up front
    return rc;
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw FormatError("cannot write " + path.string());
    f << text;
}

std::string training_log(const TrainState& s) {
    std::string out;
    for (const StepRecord& r : s.log) {
        out += format_step_record(r);
        out += '\n';
    }
    return out;
}

/// Checkpoint + log after every epoch so that an interrupted run can resume.
EpochCallback epoch_writer(const fs::path& dir) {
    return [dir](const TrainState& s) {
        save_checkpoint(s, dir / "checkpoint.bin");
        write_text(dir / "train.log", training_log(s));
        std::cerr << "epoch " << s.epoch << " loss " << std::setprecision(6)
                  << (s.epoch_loss.empty() ? 0.0 : s.epoch_loss.back()) << '\n';
    };
}

fs::path manifest_path(const RunConfig& rc) {
    const fs::path p = fs::path(rc.get("data_dir")) / "manifest.txt";
    if (!fs::exists(p)) {
        throw ConfigError("dataset manifest not found: " + p.string() + " (run synth first)");
    }
    return p;
}

fs::path require_file(const std::string& key, const std::string& value) {
    if (value.empty()) throw ConfigError("config key " + key + " must be set");
    if (!fs::exists(value)) throw ConfigError(key + " not found: " + value);
    return value;
}

/// Writes `data` as a manifest under `dir` with clip paths relative to `dir`.
void write_manifest_view(const Dataset& data, const fs::path& data_dir, const fs::path& path) {
    fs::create_directories(path.parent_path());
    DatasetManifest m = data.manifest;
    for (ManifestRecord& r : m.records) {
        r.clip_path = fs::relative(fs::absolute(data_dir / r.clip_path), fs::absolute(path.parent_path()))
                          .generic_string();
    }
    m.save(path);
}

// ---------------------------------------------------------------- commands

int cmd_synth(const RunConfig& rc) {
    const fs::path dir = rc.get("data_dir");
    const std::uint64_t seed = rc.get_u64("seed");
    std::vector<DistortionKind> kinds;
    if (rc.get("distortion_kinds") == "all") {
        for (DistortionKind k : all_distortion_kinds()) kinds.push_back(k);
    } else {
        for (const std::string& k : split_list(rc.get("distortion_kinds"))) kinds.push_back(parse_distortion_kind(k));
    }
    std::vector<DistortionSpec> specs;
    if (rc.get_bool("include_clean")) specs.push_back({DistortionKind::GaussianBlur, 0});
    for (DistortionKind k : kinds) {
        for (const std::string& l : split_list(rc.get("distortion_levels"))) {
            const int level = std::stoi(l);
            if (level < 1 || level > kMaxDistortionLevel) throw ConfigError("distortion level out of range: " + l);
            specs.push_back({k, level});
        }
    }
    std::vector<RawClip> scenes;
    for (int s = 0; s < rc.get_int("scenes"); ++s) {
        scenes.push_back(generate_scene(rc.get_int("clip_frames"), rc.get_int("clip_height"),
                                        rc.get_int("clip_width"), derive_seed(seed, 0x5CE, static_cast<std::uint64_t>(s))));
    }
    const Dataset data = build_quality_set(scenes, specs, rc.get_double("label_noise"), seed);
    data.write(dir);
    write_text(dir / "config.txt", rc.to_text());
    std::cout << "wrote " << data.size() << " records to " << (dir / "manifest.txt").string() << '\n';
    return kOk;
}

int cmd_pretrain(const RunConfig& rc, bool resume) {
    const Dataset data = Dataset::read(manifest_path(rc));
    const fs::path out = rc.get("out_dir");
    const TrainConfig cfg = rc.train_config();
    write_text(out / "config.txt", rc.to_text());
    TrainState s;
    if (resume && fs::exists(out / "checkpoint.bin")) {
        TrainState prev = load_checkpoint(out / "checkpoint.bin");
        prev.config.epochs = cfg.epochs;
        s = resume_pretrain(std::move(prev), data, epoch_writer(out));
    } else {
        s = pretrain_stvqrl(data, cfg, epoch_writer(out));
    }
    save_checkpoint(s, out / "checkpoint.bin");
    write_text(out / "train.log", training_log(s));
    std::cout << "pretraining done: " << (out / "checkpoint.bin").string() << '\n';
    return kOk;
}

EncoderParams initial_backbone(const RunConfig& rc, const TrainConfig& cfg) {
    const std::string init = rc.get("init_checkpoint");
    if (init.empty()) {
        return init_encoder(cfg.encoder, derive_seed(cfg.seed, 0xE4C));
    }
    const TrainState pre = load_checkpoint(require_file("init_checkpoint", init));
    if (!(pre.config.encoder == cfg.encoder)) {
        throw ConfigError("init_checkpoint encoder shape differs from the configured encoder");
    }
    return pre.regressor_encoder;
}

int cmd_train(const RunConfig& rc, bool labels_only, bool resume) {
    const fs::path data_dir = rc.get("data_dir");
    const Dataset data = Dataset::read(manifest_path(rc));
    const Dataset pristine = select_split(data, SplitTag::Pristine);
    const TrainConfig cfg = rc.train_config();
    const EncoderParams backbone = initial_backbone(rc, cfg);
    const fs::path out = rc.get("out_dir");
    write_text(out / "config.txt", rc.to_text());
    for (int i = 0; i < rc.get_int("splits"); ++i) {
        const fs::path dir = out / ("split" + std::to_string(i));
        const SslSplit split = build_ssl_split(data, static_cast<std::size_t>(rc.get_int("n_labelled")),
                                               static_cast<std::size_t>(rc.get_int("n_unlabelled")),
                                               derive_seed(cfg.seed, kSplitStream, static_cast<std::uint64_t>(i)));
        write_manifest_view(split.labelled, data_dir, dir / "labelled.txt");
        write_manifest_view(split.unlabelled, data_dir, dir / "unlabelled.txt");
        write_manifest_view(split.test, data_dir, dir / "test.txt");
        write_manifest_view(pristine, data_dir, dir / "pristine.txt");
        write_text(dir / "config.txt", rc.to_text());
        const Dataset& unlabelled = labels_only ? Dataset{} : split.unlabelled;
        TrainState s;
        if (resume && fs::exists(dir / "checkpoint.bin")) {
            TrainState prev = load_checkpoint(dir / "checkpoint.bin");
            prev.config.epochs = cfg.epochs;
            s = resume_sslvqa(std::move(prev), split.labelled, unlabelled, pristine, epoch_writer(dir));
        } else if (labels_only) {
            s = train_labels_only(split.labelled, pristine, backbone, cfg, epoch_writer(dir));
        } else {
            s = train_sslvqa(split.labelled, split.unlabelled, pristine, backbone, cfg, epoch_writer(dir));
        }
        save_checkpoint(s, dir / "checkpoint.bin");
        write_text(dir / "train.log", training_log(s));
        std::cout << "split " << i << " done: " << (dir / "checkpoint.bin").string() << '\n';
    }
    return kOk;
}

int cmd_finetune(const RunConfig& rc) {
    const fs::path ckpt = require_file("checkpoint", rc.get("checkpoint"));
    TrainState s = load_checkpoint(ckpt);
    const Dataset data = Dataset::read(manifest_path(rc));
    const Dataset pristine = select_split(data, SplitTag::Pristine);
    const double fraction = rc.get_double("finetune_fraction");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("finetune_fraction must lie in (0, 1]");
    std::size_t eligible = 0;
    for (const ManifestRecord& r : data.manifest.records) {
        if (r.split != SplitTag::Pristine && (r.label || r.hidden_label)) ++eligible;
    }
    const auto n = static_cast<std::size_t>(fraction * static_cast<double>(eligible));
    const SslSplit small = build_ssl_split(data, n, 0, derive_seed(rc.get_u64("seed"), 0xF17E));
    const fs::path out = rc.get("out_dir");
    write_text(out / "config.txt", rc.to_text());
    write_manifest_view(small.labelled, rc.get("data_dir"), out / "finetune.txt");
    write_manifest_view(small.test, rc.get("data_dir"), out / "test.txt");
    s = finetune(std::move(s), small.labelled, pristine, rc.get_int("finetune_epochs"), epoch_writer(out));
    save_checkpoint(s, out / "checkpoint.bin");
    write_text(out / "train.log", training_log(s));
    std::cout << "finetune done: " << (out / "checkpoint.bin").string() << '\n';
    return kOk;
}

int cmd_eval(const RunConfig& rc) {
    std::vector<fs::path> ckpts;
    if (!rc.get("checkpoint").empty()) {
        for (const std::string& c : split_list(rc.get("checkpoint"))) ckpts.push_back(require_file("checkpoint", c));
    } else {
        for (int i = 0; i < rc.get_int("splits"); ++i) {
            const fs::path p = fs::path(rc.get("out_dir")) / ("split" + std::to_string(i)) / "checkpoint.bin";
            ckpts.push_back(require_file("checkpoint", p.string()));
        }
    }
    std::vector<EvalReport> reports;
    bool nan = false;
    for (std::size_t i = 0; i < ckpts.size(); ++i) {
        const TrainState s = load_checkpoint(ckpts[i]);
        const fs::path dir = ckpts[i].parent_path();
        const fs::path test_manifest = dir / "test.txt";
        if (!fs::exists(test_manifest)) throw ConfigError("test manifest not found next to checkpoint: " + test_manifest.string());
        EvalOptions eo;
        eo.fragments = s.config.eval_fragments;
        eo.znorm = rc.get_bool("eval_znorm");
        eo.seed = rc.get_u64("seed");
        eo.dataset = rc.get("data_dir");
        eo.split = dir.filename().string();
        EvalReport r = evaluate(Dataset::read(test_manifest), s, eo);
        write_text(dir / "report.txt", r.to_text());
        std::cout << eo.split << ": srocc " << r.srocc << " plcc " << r.plcc << '\n';
        nan = nan || r.has_nan();
        reports.push_back(std::move(r));
    }
    const EvalSummary summary = median_over_splits(reports);
    write_text(fs::path(rc.get("out_dir")) / "median.txt", summary.to_text());
    std::cout << summary.to_text();
    return nan ? kVerificationFailure : kOk;
}

int cmd_quality_map(const RunConfig& rc, const std::string& clip_path) {
    const TrainState s = load_checkpoint(require_file("checkpoint", rc.get("checkpoint")));
    const RawClip clip = load_clip(require_file("--clip", clip_path));
    const QualityMap map = quality_map(clip, s, rc.get_u64("seed"));
    const fs::path out = rc.get("out_dir");
    fs::create_directories(out);
    write_text(out / "config.txt", rc.to_text());
    save_volume(map.frames, out / "quality_map.vol");
    const auto [lo, hi] = std::minmax_element(map.tokens.begin(), map.tokens.end());
    for (int t = 0; t < map.frames.frames; ++t) {
        std::ostringstream name;
        name << "frame_" << std::setw(3) << std::setfill('0') << (map.geometry.t_start + t) << ".pgm";
        write_pgm(map.frames, t, *lo, *hi, out / name.str());
    }
    std::cout << "Q_R " << map.score << ", " << map.frames.frames << " frames written to " << out.string() << '\n';
    return kOk;
}

int cmd_gradcheck(const RunConfig& rc) {
    const auto cases = run_gradcheck_suite(rc.get_u64("seed"));
    bool ok = true;
    std::cout << std::left << std::setw(30) << "case" << std::setw(14) << "max rel err" << "result\n";
    for (const GradCase& c : cases) {
        std::cout << std::setw(30) << c.name << std::setw(14) << std::scientific << std::setprecision(3)
                  << c.result.max_rel_error << (c.passed ? "pass" : "FAIL") << '\n';
        ok = ok && c.passed;
    }
    return ok ? kOk : kVerificationFailure;
}

std::string keys_help() {
    std::ostringstream os;
    os << "\nConfiguration keys (published default / desk default):\n";
    for (const ConfigKey& k : config_schema()) {
        os << "  " << std::left << std::setw(20) << k.name << std::setw(12) << (k.published_default.empty() ? "\"\"" : k.published_default)
           << std::setw(12) << (k.desk_default.empty() ? "\"\"" : k.desk_default) << k.help << '\n';
    }
    os << "\nEnvironment: SSLVQA_SEED sets the default seed.\n"
          "Exit codes: 0 ok, 1 config error, 2 numeric abort, 3 verification failure.\n";
    return os.str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semi-supervised video quality assessment toolkit"};
    app.footer(keys_help());
    app.require_subcommand(1);
    Options o;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--profile", o.profile, "default set: published or desk")->capture_default_str();
        sub->add_option("--config", o.config_file, "key = value config file");
        sub->add_option("--set", o.sets, "override one key (key=value), repeatable");
        sub->add_option("--out", o.out, "output directory (overrides out_dir)");
    };
    auto training = [&](CLI::App* sub) {
        sub->add_option("--ablate", o.ablations, "no_consistency | no_knowledge | cosine_contrastive");
        sub->add_flag("--resume", o.resume, "continue from the checkpoint in the output directory");
    };
    CLI::App* synth = app.add_subcommand("synth", "generate the procedural dataset");
    CLI::App* pretrain = app.add_subcommand("pretrain", "contrastive backbone pretraining");
    CLI::App* train = app.add_subcommand("train", "dual-model semi-supervised training");
    CLI::App* labels = app.add_subcommand("train-labels-only", "labels-only training (no unlabelled data)");
    CLI::App* ft = app.add_subcommand("finetune", "continue training on a small labelled subset");
    CLI::App* ev = app.add_subcommand("eval", "SROCC/PLCC reports and median over splits");
    CLI::App* qm = app.add_subcommand("quality-map", "per-frame quality maps of one clip");
    CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    for (CLI::App* sub : {synth, pretrain, train, labels, ft, ev, qm, gc}) common(sub);
    for (CLI::App* sub : {pretrain, train, labels, ft}) training(sub);
    qm->add_option("--clip", o.clip, "clip file")->required();
    CLI11_PARSE(app, argc, argv);

    try {
        const RunConfig rc = effective_config(o);
        if (*synth) return cmd_synth(rc);
        if (*pretrain) return cmd_pretrain(rc, o.resume);
        if (*train) return cmd_train(rc, false, o.resume);
        if (*labels) return cmd_train(rc, true, o.resume);
        if (*ft) return cmd_finetune(rc);
        if (*ev) return cmd_eval(rc);
        if (*qm) return cmd_quality_map(rc, o.clip);
        if (*gc) return cmd_gradcheck(rc);
    } catch (const NumericError& e) {
        std::cerr << "numeric abort: " << e.what() << '\n';
        return kNumericAbort;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    }
    return kOk;
}
