#pragma once

#include <map>
#include <string>
#include <vector>

#include "chainhoi/losses.hpp"
#include "chainhoi/model.hpp"

namespace chainhoi {

// `key = value` text files; '#' starts a comment. Unknown keys are reported
// with file and line context.
class KeyValueFile {
public:
    static KeyValueFile parse_file(const std::string& path);
    static KeyValueFile parse_text(const std::string& text, const std::string& origin = "<text>");

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback);
    int get_int(const std::string& key, int fallback);
    double get_double(const std::string& key, double fallback);
    bool get_bool(const std::string& key, bool fallback);
    std::vector<std::string> get_words(const std::string& key);  // comma separated

    // throws ConfigError listing unread keys (typo guard)
    void check_all_consumed() const;

private:
    struct Entry {
        std::string value;
        int line = 0;
        bool consumed = false;
    };
    std::string origin_;
    std::map<std::string, Entry> entries_;
};

struct RunConfig {
    std::string model_config_path;
    std::string dataset_path;
    std::string mesh_dir;
    int timesteps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    int ddim_steps = 50;
    double guidance_scale = 2.0;
    double lambda_h = 2.0;
    double lambda_o = 1.0;
    double lr = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 1e-2;
    int batch_size = 32;
    int epochs = 200;
    int checkpoint_every = 0;  // epochs; 0 = only at the end
    uint64_t seed = 0;

    LossWeights loss_weights() const { return LossWeights{lambda_h, lambda_o}; }
};

RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& cfg, const std::string& path);

ModelConfig load_model_config(const std::string& path);
void save_model_config(const ModelConfig& cfg, const std::string& path);

}  // namespace chainhoi
