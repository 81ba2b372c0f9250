#include "chainhoi/config.hpp"

#include <fstream>
#include <sstream>

namespace chainhoi {

namespace {
std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}
}  // namespace

KeyValueFile KeyValueFile::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config: " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    return parse_text(buf.str(), path);
}

KeyValueFile KeyValueFile::parse_text(const std::string& text, const std::string& origin) {
    KeyValueFile kv;
    kv.origin_ = origin;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::string t = trim(line);
        if (t.empty()) continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        if (kv.entries_.count(key))
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
        kv.entries_[key] = Entry{value, lineno, false};
    }
    return kv;
}

bool KeyValueFile::has(const std::string& key) const { return entries_.count(key) > 0; }

std::string KeyValueFile::get_string(const std::string& key, const std::string& fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.consumed = true;
    return it->second.value;
}

int KeyValueFile::get_int(const std::string& key, int fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.consumed = true;
    try {
        return std::stoi(it->second.value);
    } catch (...) {
        throw ConfigError(origin_ + ":" + std::to_string(it->second.line) + ": '" + key +
                          "' is not an integer");
    }
}

double KeyValueFile::get_double(const std::string& key, double fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.consumed = true;
    try {
        return std::stod(it->second.value);
    } catch (...) {
        throw ConfigError(origin_ + ":" + std::to_string(it->second.line) + ": '" + key +
                          "' is not a number");
    }
}

bool KeyValueFile::get_bool(const std::string& key, bool fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.consumed = true;
    const std::string& v = it->second.value;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(origin_ + ":" + std::to_string(it->second.line) + ": '" + key +
                      "' is not a boolean");
}

std::vector<std::string> KeyValueFile::get_words(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return {};
    it->second.consumed = true;
    std::vector<std::string> out;
    std::istringstream is(it->second.value);
    std::string word;
    while (std::getline(is, word, ',')) {
        std::string t = trim(word);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

void KeyValueFile::check_all_consumed() const {
    for (const auto& [key, entry] : entries_) {
        if (!entry.consumed)
            throw ConfigError(origin_ + ":" + std::to_string(entry.line) + ": unknown key '" + key +
                              "'");
    }
}

RunConfig load_run_config(const std::string& path) {
    KeyValueFile kv = KeyValueFile::parse_file(path);
    RunConfig cfg;
    cfg.model_config_path = kv.get_string("model_config", cfg.model_config_path);
    cfg.dataset_path = kv.get_string("dataset", cfg.dataset_path);
    cfg.mesh_dir = kv.get_string("mesh_dir", cfg.mesh_dir);
    cfg.timesteps = kv.get_int("timesteps", cfg.timesteps);
    cfg.beta_start = kv.get_double("beta_start", cfg.beta_start);
    cfg.beta_end = kv.get_double("beta_end", cfg.beta_end);
    cfg.ddim_steps = kv.get_int("ddim_steps", cfg.ddim_steps);
    cfg.guidance_scale = kv.get_double("guidance_scale", cfg.guidance_scale);
    cfg.lambda_h = kv.get_double("lambda_h", cfg.lambda_h);
    cfg.lambda_o = kv.get_double("lambda_o", cfg.lambda_o);
    cfg.lr = kv.get_double("lr", cfg.lr);
    cfg.adam_beta1 = kv.get_double("adam_beta1", cfg.adam_beta1);
    cfg.adam_beta2 = kv.get_double("adam_beta2", cfg.adam_beta2);
    cfg.adam_eps = kv.get_double("adam_eps", cfg.adam_eps);
    cfg.weight_decay = kv.get_double("weight_decay", cfg.weight_decay);
    cfg.batch_size = kv.get_int("batch_size", cfg.batch_size);
    cfg.epochs = kv.get_int("epochs", cfg.epochs);
    cfg.checkpoint_every = kv.get_int("checkpoint_every", cfg.checkpoint_every);
    cfg.seed = static_cast<uint64_t>(kv.get_int("seed", static_cast<int>(cfg.seed)));
    kv.check_all_consumed();
    return cfg;
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write config: " + path);
    os.precision(17);
    os << "model_config = " << cfg.model_config_path << '\n'
       << "dataset = " << cfg.dataset_path << '\n'
       << "mesh_dir = " << cfg.mesh_dir << '\n'
       << "timesteps = " << cfg.timesteps << '\n'
       << "beta_start = " << cfg.beta_start << '\n'
       << "beta_end = " << cfg.beta_end << '\n'
       << "ddim_steps = " << cfg.ddim_steps << '\n'
       << "guidance_scale = " << cfg.guidance_scale << '\n'
       << "lambda_h = " << cfg.lambda_h << '\n'
       << "lambda_o = " << cfg.lambda_o << '\n'
       << "lr = " << cfg.lr << '\n'
       << "adam_beta1 = " << cfg.adam_beta1 << '\n'
       << "adam_beta2 = " << cfg.adam_beta2 << '\n'
       << "adam_eps = " << cfg.adam_eps << '\n'
       << "weight_decay = " << cfg.weight_decay << '\n'
       << "batch_size = " << cfg.batch_size << '\n'
       << "epochs = " << cfg.epochs << '\n'
       << "checkpoint_every = " << cfg.checkpoint_every << '\n'
       << "seed = " << cfg.seed << '\n';
}

ModelConfig load_model_config(const std::string& path) {
    KeyValueFile kv = KeyValueFile::parse_file(path);
    ModelConfig cfg;
    cfg.n_blocks = kv.get_int("n_blocks", cfg.n_blocks);
    cfg.d_m = kv.get_int("d_m", cfg.d_m);
    cfg.d_t = kv.get_int("d_t", cfg.d_t);
    cfg.heads = kv.get_int("heads", cfg.heads);
    cfg.joint_count = kv.get_int("joint_count", cfg.joint_count);
    cfg.object_point_tokens = kv.get_int("object_point_tokens", cfg.object_point_tokens);
    cfg.text_encoder_layers = kv.get_int("text_encoder_layers", cfg.text_encoder_layers);
    cfg.max_timesteps = kv.get_int("max_timesteps", cfg.max_timesteps);
    cfg.max_len = kv.get_int("max_len", cfg.max_len);
    cfg.dropout = kv.get_double("dropout", cfg.dropout);
    cfg.cfg_text_dropout = kv.get_double("cfg_text_dropout", cfg.cfg_text_dropout);
    cfg.vocab = kv.get_words("vocab");
    cfg.kim_mask_enabled = kv.get_bool("kim_mask_enabled", cfg.kim_mask_enabled);
    cfg.use_kim = kv.get_bool("use_kim", cfg.use_kim);
    cfg.use_scm = kv.get_bool("use_scm", cfg.use_scm);
    cfg.object_connect_all = kv.get_bool("object_connect_all", cfg.object_connect_all);
    kv.check_all_consumed();
    cfg.validate();
    return cfg;
}

void save_model_config(const ModelConfig& cfg, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write config: " + path);
    os.precision(17);
    os << "n_blocks = " << cfg.n_blocks << '\n'
       << "d_m = " << cfg.d_m << '\n'
       << "d_t = " << cfg.d_t << '\n'
       << "heads = " << cfg.heads << '\n'
       << "joint_count = " << cfg.joint_count << '\n'
       << "object_point_tokens = " << cfg.object_point_tokens << '\n'
       << "text_encoder_layers = " << cfg.text_encoder_layers << '\n'
       << "max_timesteps = " << cfg.max_timesteps << '\n'
       << "max_len = " << cfg.max_len << '\n'
       << "dropout = " << cfg.dropout << '\n'
       << "cfg_text_dropout = " << cfg.cfg_text_dropout << '\n';
    os << "vocab = ";
    for (size_t i = 0; i < cfg.vocab.size(); ++i) os << (i ? "," : "") << cfg.vocab[i];
    os << '\n';
    os << "kim_mask_enabled = " << (cfg.kim_mask_enabled ? "true" : "false") << '\n'
       << "use_kim = " << (cfg.use_kim ? "true" : "false") << '\n'
       << "use_scm = " << (cfg.use_scm ? "true" : "false") << '\n'
       << "object_connect_all = " << (cfg.object_connect_all ? "true" : "false") << '\n';
}

}  // namespace chainhoi
