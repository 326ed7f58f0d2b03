#include "sslvqa/config.hpp"

#include "sslvqa/errors.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace sslvqa {

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (batch_labelled < 2) throw ConfigError("batch_labelled must be at least 2");
    if (batch_unlabelled < 0) throw ConfigError("batch_unlabelled must be non-negative");
    if (!(tau > 0.0)) throw ConfigError("tau must be positive");
    if (lambda_c < 0.0 || lambda_u < 0.0) throw ConfigError("loss weights must be non-negative");
    if (ridge && *ridge < 0.0) throw ConfigError("ridge must be non-negative");
    if (pretrain_versions < 1 || pretrain_scenes < 1) {
        throw ConfigError("pretrain_versions and pretrain_scenes must be positive");
    }
    if (pristine_fragments < 1 || eval_fragments < 1) {
        throw ConfigError("fragment counts must be positive");
    }
    if (head_hidden < 1) throw ConfigError("head_hidden must be positive");
    encoder.validate();
}

const std::vector<ConfigKey>& config_schema() {
    static const std::vector<ConfigKey> schema = {
        {"lr", "1e-4", "3e-3", "AdamW learning rate (constant schedule)"},
        {"weight_decay", "0.05", "0.05", "decoupled weight decay"},
        {"epochs", "30", "30", "training epochs"},
        {"batch_labelled", "8", "8", "labelled clips per batch (B_l)"},
        {"batch_unlabelled", "24", "16", "unlabelled clips per batch (B_u)"},
        {"tau", "10", "10", "temperature of the contrastive loss and of Q_D"},
        {"lambda_c", "1", "1", "weight of the intra-model consistency loss"},
        {"lambda_u", "1", "1", "weight of the knowledge-transfer loss"},
        {"ridge", "auto", "auto", "covariance ridge; auto = 1e-6 trace(Sigma)/C"},
        {"seed", "0", "0", "run seed (env SSLVQA_SEED overrides the default)"},
        {"no_consistency", "false", "false", "ablation: drop consistency loss and mask"},
        {"no_knowledge", "false", "false", "ablation: drop knowledge-transfer loss"},
        {"cosine_contrastive", "false", "false", "ablation: cosine-similarity pretraining loss"},
        {"pretrain_versions", "4", "4", "distorted versions per contrastive batch (K)"},
        {"pretrain_scenes", "1", "1", "scenes per contrastive batch"},
        {"pristine_fragments", "1", "2", "fragments per pristine clip when fitting Q_D statistics"},
        {"eval_fragments", "4", "4", "fragments averaged per clip at inference"},
        {"eval_znorm", "false", "false", "z-normalise Q_R and Q_D over the test set before averaging"},
        {"max_rejected_steps", "10", "10", "abort after this many consecutive non-finite steps"},
        {"grid_h", "7", "4", "fragment grid rows"},
        {"grid_w", "7", "4", "fragment grid columns"},
        {"patch", "32", "8", "patch side in pixels"},
        {"n_frames", "32", "8", "frames per fragment"},
        {"t_stride", "2", "2", "frames per token"},
        {"channels", "64", "16", "feature channels C"},
        {"blocks", "2", "2", "token-mixing blocks"},
        {"head_hidden", "64", "16", "regressor head hidden width"},
        {"data_dir", "data", "data", "dataset directory (synth output, manifest.txt inside)"},
        {"out_dir", "runs", "runs", "output directory for checkpoints, logs and reports"},
        {"scenes", "200", "60", "procedural scenes generated by synth"},
        {"clip_frames", "40", "12", "frames per synthesized clip"},
        {"clip_height", "256", "64", "synthesized clip height"},
        {"clip_width", "256", "64", "synthesized clip width"},
        {"distortion_kinds", "all", "gaussian_noise",
         "comma-separated catalog kinds, or all"},
        {"distortion_levels", "1,2,3,4", "1,2,3,4", "comma-separated levels per kind"},
        {"include_clean", "true", "true", "add a level-0 (clean, label 1) record per scene"},
        {"label_noise", "0", "0.02", "stddev of seeded noise added to synthetic labels"},
        {"n_labelled", "500", "40", "labelled clips per split"},
        {"n_unlabelled", "1500", "160", "unlabelled clips per split"},
        {"splits", "3", "3", "random splits evaluated (median reported)"},
        {"checkpoint", "", "", "checkpoint to read (eval, finetune, quality-map, resume)"},
        {"init_checkpoint", "", "", "pretrained backbone checkpoint for train / train-labels-only"},
        {"finetune_epochs", "30", "10", "epochs of finetuning"},
        {"finetune_fraction", "0.2", "0.2", "fraction of labelled records used for finetuning and for testing"},
    };
    return schema;
}

namespace {

const ConfigKey& find_key(const std::string& key) {
    for (const ConfigKey& k : config_schema()) {
        if (k.name == key) {
            return k;
        }
    }
    throw ConfigError("unknown config key: " + key);
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size()) {
            return d;
        }
    } catch (const std::exception&) {
    }
    throw ConfigError("config key " + key + ": not a number: '" + v + "'");
}

long long parse_integer(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long long i = std::stoll(v, &used);
        if (used == v.size()) {
            return i;
        }
    } catch (const std::exception&) {
    }
    throw ConfigError("config key " + key + ": not an integer: '" + v + "'");
}

std::string format_double(double d) {
    std::ostringstream os;
    os << std::setprecision(17) << d;
    return os.str();
}

} // namespace

RunConfig RunConfig::defaults(Profile profile) {
    RunConfig c;
    for (const ConfigKey& k : config_schema()) {
        c.values_[k.name] = profile == Profile::Published ? k.published_default : k.desk_default;
    }
    return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    find_key(key);
    values_[key] = value;
}

void RunConfig::merge_text(std::string_view text) {
    std::istringstream is{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        const std::string t = trim(line);
        if (t.empty()) {
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        set(trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
    }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw ConfigError("cannot open config file: " + path.string());
    }
    std::stringstream ss;
    ss << is.rdbuf();
    merge_text(ss.str());
}

const std::string& RunConfig::get(const std::string& key) const {
    find_key(key);
    return values_.at(key);
}

double RunConfig::get_double(const std::string& key) const {
    return parse_double(key, get(key));
}

int RunConfig::get_int(const std::string& key) const {
    return static_cast<int>(parse_integer(key, get(key)));
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
    const std::string& v = get(key);
    try {
        std::size_t used = 0;
        const unsigned long long u = std::stoull(v, &used);
        if (used == v.size() && v.find('-') == std::string::npos) {
            return u;
        }
    } catch (const std::exception&) {
    }
    throw ConfigError("config key " + key + ": not an unsigned integer: '" + v + "'");
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key " + key + ": not a boolean: '" + v + "'");
}

TrainConfig RunConfig::train_config() const {
    TrainConfig c;
    c.lr = get_double("lr");
    c.weight_decay = get_double("weight_decay");
    c.epochs = get_int("epochs");
    c.batch_labelled = get_int("batch_labelled");
    c.batch_unlabelled = get_int("batch_unlabelled");
    c.tau = get_double("tau");
    c.lambda_c = get_double("lambda_c");
    c.lambda_u = get_double("lambda_u");
    if (get("ridge") != "auto") {
        c.ridge = get_double("ridge");
    }
    c.seed = get_u64("seed");
    c.no_consistency = get_bool("no_consistency");
    c.no_knowledge = get_bool("no_knowledge");
    c.cosine_contrastive = get_bool("cosine_contrastive");
    c.pretrain_versions = get_int("pretrain_versions");
    c.pretrain_scenes = get_int("pretrain_scenes");
    c.pristine_fragments = get_int("pristine_fragments");
    c.eval_fragments = get_int("eval_fragments");
    c.eval_znorm = get_bool("eval_znorm");
    c.max_rejected_steps = get_int("max_rejected_steps");
    c.encoder.fragment.grid_h = get_int("grid_h");
    c.encoder.fragment.grid_w = get_int("grid_w");
    c.encoder.fragment.patch = get_int("patch");
    c.encoder.fragment.n_frames = get_int("n_frames");
    c.encoder.t_stride = get_int("t_stride");
    c.encoder.channels = get_int("channels");
    c.encoder.blocks = get_int("blocks");
    c.head_hidden = get_int("head_hidden");
    c.validate();
    return c;
}

std::string RunConfig::to_text() const {
    std::ostringstream os;
    for (const ConfigKey& k : config_schema()) {
        os << k.name << " = " << values_.at(k.name) << '\n';
    }
    return os.str();
}

std::string to_text(const TrainConfig& c) {
    std::ostringstream os;
    auto b = [](bool v) { return v ? "true" : "false"; };
    os << "lr = " << format_double(c.lr) << '\n'
       << "weight_decay = " << format_double(c.weight_decay) << '\n'
       << "epochs = " << c.epochs << '\n'
       << "batch_labelled = " << c.batch_labelled << '\n'
       << "batch_unlabelled = " << c.batch_unlabelled << '\n'
       << "tau = " << format_double(c.tau) << '\n'
       << "lambda_c = " << format_double(c.lambda_c) << '\n'
       << "lambda_u = " << format_double(c.lambda_u) << '\n'
       << "ridge = " << (c.ridge ? format_double(*c.ridge) : std::string("auto")) << '\n'
       << "seed = " << c.seed << '\n'
       << "no_consistency = " << b(c.no_consistency) << '\n'
       << "no_knowledge = " << b(c.no_knowledge) << '\n'
       << "cosine_contrastive = " << b(c.cosine_contrastive) << '\n'
       << "pretrain_versions = " << c.pretrain_versions << '\n'
       << "pretrain_scenes = " << c.pretrain_scenes << '\n'
       << "pristine_fragments = " << c.pristine_fragments << '\n'
       << "eval_fragments = " << c.eval_fragments << '\n'
       << "eval_znorm = " << b(c.eval_znorm) << '\n'
       << "max_rejected_steps = " << c.max_rejected_steps << '\n'
       << "grid_h = " << c.encoder.fragment.grid_h << '\n'
       << "grid_w = " << c.encoder.fragment.grid_w << '\n'
       << "patch = " << c.encoder.fragment.patch << '\n'
       << "n_frames = " << c.encoder.fragment.n_frames << '\n'
       << "t_stride = " << c.encoder.t_stride << '\n'
       << "channels = " << c.encoder.channels << '\n'
       << "blocks = " << c.encoder.blocks << '\n'
       << "head_hidden = " << c.head_hidden << '\n';
    return os.str();
}

TrainConfig train_config_from_text(std::string_view text) {
    RunConfig rc = RunConfig::defaults(Profile::Published);
    rc.merge_text(text);
    return rc.train_config();
}

} // namespace sslvqa
