#pragma once

// Flat key-value configuration files ("key = value", '#' comments) plus
// --set key=value overrides. Unknown keys are rejected against the schema of
// the consuming command.

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "simlab/common.hpp"
#include "simlab/encoder.hpp"
#include "simlab/loss.hpp"
#include "simlab/trainer.hpp"

namespace simlab {

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace detail

class KvConfig {
public:
    static KvConfig from_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw ConfigError("cannot open config file: " + path);
        KvConfig cfg;
        std::string line;
        std::int64_t line_no = 0;
        while (std::getline(is, line)) {
            ++line_no;
            std::string t = detail::trim(line);
            if (t.empty() || t[0] == '#') continue;
            std::size_t eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError(path + ": line " + std::to_string(line_no) +
                                  ": expected key = value");
            cfg.set(detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
        }
        return cfg;
    }

    // "key=value" override; applied after file parsing.
    void apply_override(const std::string& kv) {
        std::size_t eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("override must be key=value, got '" + kv + "'");
        set(detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_str(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }
    std::string require_str(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("missing required key '" + key + "'");
        return it->second;
    }
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
        if (!has(key)) return fallback;
        return parse_int(key, values_.at(key));
    }
    double get_double(const std::string& key, double fallback) const {
        if (!has(key)) return fallback;
        return parse_double(key, values_.at(key));
    }

    // Reject keys outside the schema; dynamic prefixes (dataset.*) allowed.
    void check_known(const std::set<std::string>& known,
                     const std::vector<std::string>& prefixes = {}) const {
        for (const auto& [key, _] : values_) {
            if (known.count(key)) continue;
            bool matched = false;
            for (const auto& p : prefixes)
                if (key.rfind(p, 0) == 0) matched = true;
            if (!matched) throw ConfigError("unknown key '" + key + "'");
        }
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

    static std::int64_t parse_int(const std::string& key, const std::string& v) {
        try {
            std::size_t used = 0;
            std::int64_t out = std::stoll(v, &used);
            if (used != v.size()) throw std::invalid_argument("junk");
            return out;
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "': expected integer, got '" + v + "'");
        }
    }
    static double parse_double(const std::string& key, const std::string& v) {
        try {
            std::size_t used = 0;
            double out = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument("junk");
            return out;
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "': expected number, got '" + v + "'");
        }
    }

    static std::vector<std::string> split_list(const std::string& v) {
        std::vector<std::string> out;
        std::stringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ',')) {
            std::string t = detail::trim(item);
            if (!t.empty()) out.push_back(t);
        }
        return out;
    }

private:
    std::map<std::string, std::string> values_;
};

inline TokenizerMode parse_tokenizer(const std::string& v) {
    if (v == "character") return TokenizerMode::Character;
    if (v == "whitespace") return TokenizerMode::Whitespace;
    throw ConfigError("tokenizer must be 'character' or 'whitespace', got '" + v + "'");
}

inline Pooling parse_pooling(const std::string& v) {
    if (v == "cls") return Pooling::Cls;
    if (v == "mean") return Pooling::Mean;
    throw ConfigError("pooling must be 'cls' or 'mean', got '" + v + "'");
}

inline LossVariant parse_variant(const std::string& v) {
    if (v == "unsupervised") return LossVariant::Unsupervised;
    if (v == "supervised") return LossVariant::Supervised;
    throw ConfigError("variant must be 'unsupervised' or 'supervised', got '" + v + "'");
}

// One training run, fully resolved.
struct RunSpec {
    EncoderConfig encoder;
    LossConfig loss;
    TrainConfig train;
    Pooling pooling = Pooling::Cls;
    std::string train_file;
    std::string dev_file;
};

inline const std::set<std::string>& run_config_keys() {
    static const std::set<std::string> keys{
        "variant", "train_file", "dev_file", "pooling",
        "tokenizer", "max_vocab", "d_model", "n_layers", "n_heads", "d_ff", "dropout_rate",
        "max_seq_len",
        "temperature",
        "batch_size", "peak_lr", "total_examples", "n_evaluations", "warmup_fraction", "seed",
        "weight_decay", "beta1", "beta2", "adam_eps"};
    return keys;
}

inline void fill_encoder_config(const KvConfig& cfg, EncoderConfig& e) {
    e.tokenizer = parse_tokenizer(cfg.get_str("tokenizer", to_string(e.tokenizer)));
    e.max_vocab = cfg.get_int("max_vocab", e.max_vocab);
    e.d_model = cfg.get_int("d_model", e.d_model);
    e.n_layers = cfg.get_int("n_layers", e.n_layers);
    e.n_heads = cfg.get_int("n_heads", e.n_heads);
    e.d_ff = cfg.get_int("d_ff", e.d_ff);
    e.dropout_rate = cfg.get_double("dropout_rate", e.dropout_rate);
    e.max_seq_len = cfg.get_int("max_seq_len", e.max_seq_len);
}

inline void fill_train_config(const KvConfig& cfg, TrainConfig& t) {
    t.batch_size = cfg.get_int("batch_size", t.batch_size);
    t.peak_lr = cfg.get_double("peak_lr", t.peak_lr);
    t.total_examples = cfg.get_int("total_examples", t.total_examples);
    t.n_evaluations = cfg.get_int("n_evaluations", t.n_evaluations);
    t.warmup_fraction = cfg.get_double("warmup_fraction", t.warmup_fraction);
    t.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<std::int64_t>(t.seed)));
    t.weight_decay = cfg.get_double("weight_decay", t.weight_decay);
    t.beta1 = cfg.get_double("beta1", t.beta1);
    t.beta2 = cfg.get_double("beta2", t.beta2);
    t.adam_eps = cfg.get_double("adam_eps", t.adam_eps);
}

inline RunSpec parse_run_spec(const KvConfig& cfg) {
    cfg.check_known(run_config_keys());
    RunSpec spec;
    fill_encoder_config(cfg, spec.encoder);
    fill_train_config(cfg, spec.train);
    spec.loss.variant = parse_variant(cfg.get_str("variant", "unsupervised"));
    spec.loss.temperature = cfg.get_double("temperature", spec.loss.temperature);
    spec.pooling = parse_pooling(cfg.get_str("pooling", "cls"));
    spec.train_file = cfg.require_str("train_file");
    spec.dev_file = cfg.require_str("dev_file");
    spec.encoder.validate();
    spec.train.validate();
    spec.loss.validate();
    return spec;
}

// Resolved-config echo; together with the code version this reproduces a run.
inline nlohmann::json run_spec_json(const RunSpec& spec) {
    nlohmann::json j;
    j["variant"] = to_string(spec.loss.variant);
    j["temperature"] = spec.loss.temperature;
    j["pooling"] = to_string(spec.pooling);
    j["train_file"] = spec.train_file;
    j["dev_file"] = spec.dev_file;
    j["tokenizer"] = to_string(spec.encoder.tokenizer);
    j["max_vocab"] = spec.encoder.max_vocab;
    j["d_model"] = spec.encoder.d_model;
    j["n_layers"] = spec.encoder.n_layers;
    j["n_heads"] = spec.encoder.n_heads;
    j["d_ff"] = spec.encoder.d_ff;
    j["dropout_rate"] = spec.encoder.dropout_rate;
    j["max_seq_len"] = spec.encoder.max_seq_len;
    j["batch_size"] = spec.train.batch_size;
    j["peak_lr"] = spec.train.peak_lr;
    j["total_examples"] = spec.train.total_examples;
    j["n_evaluations"] = spec.train.n_evaluations;
    j["warmup_fraction"] = spec.train.warmup_fraction;
    j["seed"] = spec.train.seed;
    j["weight_decay"] = spec.train.weight_decay;
    j["beta1"] = spec.train.beta1;
    j["beta2"] = spec.train.beta2;
    j["adam_eps"] = spec.train.adam_eps;
    j["rng_algorithm"] = kRngAlgorithm;
    return j;
}

}  // namespace simlab
