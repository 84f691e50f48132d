#pragma once

// Checkpoint file: text header (magic, version, config key-values), then the
// vocabulary token-per-line, then named parameter blocks with little-endian
// 64-bit float payloads. Round-trips bit-exactly.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "simlab/common.hpp"
#include "simlab/encoder.hpp"

namespace simlab {

inline constexpr const char* kCheckpointMagic = "SIMLAB-CKPT";
inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline void write_f64_le(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(buf), 8);
}

inline double read_f64_le(std::istream& is) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace detail

inline void save_checkpoint(const EncoderModel& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open checkpoint for writing: " + path);
    const EncoderConfig& c = model.config;
    os << kCheckpointMagic << '\n' << "version " << kCheckpointVersion << '\n';
    os << "tokenizer " << to_string(c.tokenizer) << '\n';
    os << "max_vocab " << c.max_vocab << '\n';
    os << "d_model " << c.d_model << '\n';
    os << "n_layers " << c.n_layers << '\n';
    os << "n_heads " << c.n_heads << '\n';
    os << "d_ff " << c.d_ff << '\n';
    char drop[64];
    std::snprintf(drop, sizeof drop, "%.17g", c.dropout_rate);
    os << "dropout_rate " << drop << '\n';
    os << "max_seq_len " << c.max_seq_len << '\n';
    os << "vocab " << model.vocab.size() - 4 << '\n';
    for (std::int64_t id = 4; id < model.vocab.size(); ++id)
        os << model.vocab.id_to_token[static_cast<std::size_t>(id)] << '\t' << id << '\n';
    for (const auto& [name, t] : model.params) {
        os << "param " << name << ' ' << t.shape.size();
        for (std::int64_t d : t.shape) os << ' ' << d;
        os << '\n';
        for (double v : t.values) detail::write_f64_le(os, v);
        os << '\n';
    }
    os << "end\n";
    if (!os) throw DataError("write failure on checkpoint: " + path);
}

inline EncoderModel load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    std::string line;
    auto next_line = [&](const char* what) {
        if (!std::getline(is, line)) throw DataError(std::string("checkpoint truncated at ") + what);
        return line;
    };
    if (next_line("magic") != kCheckpointMagic)
        throw DataError("not a checkpoint file (bad magic): " + path);
    auto kv = [&](const char* key) {
        next_line(key);
        std::istringstream ls(line);
        std::string k, v;
        ls >> k >> v;
        if (k != key) throw DataError("checkpoint: expected key '" + std::string(key) + "', got '" + k + "'");
        return v;
    };
    if (std::stoi(kv("version")) != kCheckpointVersion)
        throw DataError("unsupported checkpoint version in " + path);

    EncoderModel model;
    EncoderConfig& c = model.config;
    std::string tok = kv("tokenizer");
    if (tok == "character") c.tokenizer = TokenizerMode::Character;
    else if (tok == "whitespace") c.tokenizer = TokenizerMode::Whitespace;
    else throw DataError("checkpoint: unknown tokenizer '" + tok + "'");
    c.max_vocab = std::stoll(kv("max_vocab"));
    c.d_model = std::stoll(kv("d_model"));
    c.n_layers = std::stoll(kv("n_layers"));
    c.n_heads = std::stoll(kv("n_heads"));
    c.d_ff = std::stoll(kv("d_ff"));
    c.dropout_rate = std::stod(kv("dropout_rate"));
    c.max_seq_len = std::stoll(kv("max_seq_len"));
    c.validate();

    std::int64_t n_tokens = std::stoll(kv("vocab"));
    for (std::int64_t i = 0; i < n_tokens; ++i) {
        next_line("vocab entry");
        std::size_t tab = line.find('\t');
        if (tab == std::string::npos) throw DataError("checkpoint: malformed vocab line");
        std::string token = line.substr(0, tab);
        std::int64_t id = std::stoll(line.substr(tab + 1));
        if (id != model.vocab.size())
            throw DataError("checkpoint: vocab ids out of order at token '" + token + "'");
        model.vocab.add_token(token);
    }

    while (true) {
        next_line("param header");
        if (line == "end") break;
        std::istringstream ls(line);
        std::string tag, name;
        std::size_t ndims;
        ls >> tag >> name >> ndims;
        if (tag != "param") throw DataError("checkpoint: expected param block, got '" + line + "'");
        std::vector<std::int64_t> shape(ndims);
        for (auto& d : shape) ls >> d;
        Tensor t = Tensor::zeros(shape);
        for (double& v : t.values) v = detail::read_f64_le(is);
        if (!is) throw DataError("checkpoint truncated inside param " + name);
        is.get();  // trailing newline
        model.params[name] = std::move(t);
    }
    return model;
}

}  // namespace simlab
