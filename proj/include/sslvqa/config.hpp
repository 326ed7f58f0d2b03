#pragma once

#include "sslvqa/encoder.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sslvqa {

/// Everything the training loops and inference read.
struct TrainConfig {
    double lr = 1e-4;
    double weight_decay = 0.05;
    int epochs = 30;
    int batch_labelled = 8;
    int batch_unlabelled = 24;
    double tau = 10.0;
    double lambda_c = 1.0;
    double lambda_u = 1.0;
    std::optional<double> ridge; ///< empty: 1e-6 trace(Sigma)/C
    std::uint64_t seed = 0;

    bool no_consistency = false;
    bool no_knowledge = false;
    bool cosine_contrastive = false;

    int pretrain_versions = 4; ///< K distorted versions per contrastive batch
    int pretrain_scenes = 1;   ///< scenes per contrastive batch (>1 adds cross-scene negatives)
    int pristine_fragments = 1;
    int eval_fragments = 4;
    bool eval_znorm = false;
    int max_rejected_steps = 10;

    EncoderConfig encoder{FragmentConfig{7, 7, 32, 32}, 2, 16, 2};
    int head_hidden = 16;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

enum class Profile { Published, Desk };

/// One documented configuration key.
struct ConfigKey {
    std::string name;
    std::string published_default;
    std::string desk_default;
    std::string help;
};

const std::vector<ConfigKey>& config_schema();

/// Flat key=value configuration. Unknown keys are rejected with the key name.
class RunConfig {
public:
    static RunConfig defaults(Profile profile);

    /// Applies `key = value` lines ('#' comments, blank lines allowed).
    void merge_text(std::string_view text);
    void merge_file(const std::filesystem::path& path);
    void set(const std::string& key, const std::string& value);

    const std::string& get(const std::string& key) const;
    double get_double(const std::string& key) const;
    int get_int(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    TrainConfig train_config() const;
    /// Every key in schema order, one `key = value` line each.
    std::string to_text() const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

/// Round-trippable text form of a TrainConfig (used inside checkpoints).
std::string to_text(const TrainConfig& cfg);
TrainConfig train_config_from_text(std::string_view text);

} // namespace sslvqa
