#pragma once

// Tokenization, a compact pre-norm transformer encoder, and CLS/Mean pooling.
// Character mode splits on Unicode scalar values so CJK text needs no word
// segmentation; whitespace mode splits on ASCII/Unicode whitespace.

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "simlab/autograd.hpp"
#include "simlab/common.hpp"
#include "simlab/rng.hpp"
#include "simlab/tensor.hpp"

namespace simlab {

enum class TokenizerMode { Character, Whitespace };
enum class Pooling { Cls, Mean };

inline const char* to_string(TokenizerMode m) {
    return m == TokenizerMode::Character ? "character" : "whitespace";
}
inline const char* to_string(Pooling p) { return p == Pooling::Cls ? "cls" : "mean"; }

struct EncoderConfig {
    TokenizerMode tokenizer = TokenizerMode::Character;
    std::int64_t max_vocab = 8000;
    std::int64_t d_model = 128;
    std::int64_t n_layers = 2;
    std::int64_t n_heads = 4;
    std::int64_t d_ff = 512;
    double dropout_rate = 0.1;
    std::int64_t max_seq_len = 64;

    void validate() const {
        if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0 || max_vocab <= 0 ||
            max_seq_len < 3)
            throw ConfigError("encoder dimensions must be positive (max_seq_len >= 3)");
        if (d_model % n_heads != 0)
            throw ConfigError("d_model (" + std::to_string(d_model) +
                              ") must be divisible by n_heads (" + std::to_string(n_heads) + ")");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw ConfigError("dropout_rate must be in [0,1)");
    }
};

// Split a UTF-8 string into Unicode scalar values (as UTF-8 substrings).
inline std::vector<std::string> utf8_chars(const std::string& s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        unsigned char c = static_cast<unsigned char>(s[i]);
        std::size_t len = 1;
        if (c >= 0xF0) len = 4;
        else if (c >= 0xE0) len = 3;
        else if (c >= 0xC0) len = 2;
        len = std::min(len, s.size() - i);
        out.push_back(s.substr(i, len));
        i += len;
    }
    return out;
}

inline std::vector<std::string> tokenize(const std::string& s, TokenizerMode mode) {
    if (mode == TokenizerMode::Character) {
        std::vector<std::string> chars = utf8_chars(s);
        std::vector<std::string> out;
        for (auto& c : chars)
            if (!(c.size() == 1 && std::isspace(static_cast<unsigned char>(c[0])))) out.push_back(c);
        return out;
    }
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

struct Vocabulary {
    static constexpr std::int64_t kPad = 0;
    static constexpr std::int64_t kUnk = 1;
    static constexpr std::int64_t kCls = 2;
    static constexpr std::int64_t kSep = 3;

    std::unordered_map<std::string, std::int64_t> token_to_id;
    std::vector<std::string> id_to_token{"[PAD]", "[UNK]", "[CLS]", "[SEP]"};

    std::int64_t size() const { return static_cast<std::int64_t>(id_to_token.size()); }

    std::int64_t id_of(const std::string& tok) const {
        auto it = token_to_id.find(tok);
        return it == token_to_id.end() ? kUnk : it->second;
    }

    void add_token(const std::string& tok) {
        token_to_id.emplace(tok, size());
        id_to_token.push_back(tok);
    }
};

// Deterministic vocabulary: tokens sorted by (frequency desc, token lex asc),
// truncated to max_vocab content tokens; ids start at 4 after the reserved set.
template <typename SentenceRange>
Vocabulary build_vocab(const SentenceRange& corpus, const EncoderConfig& config) {
    std::map<std::string, std::int64_t> counts;
    bool any = false;
    for (const std::string& sentence : corpus) {
        any = true;
        for (const std::string& tok : tokenize(sentence, config.tokenizer)) ++counts[tok];
    }
    if (!any) throw DataError("build_vocab: empty corpus");

    std::vector<std::pair<std::string, std::int64_t>> items(counts.begin(), counts.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (static_cast<std::int64_t>(items.size()) > config.max_vocab)
        items.resize(static_cast<std::size_t>(config.max_vocab));

    Vocabulary vocab;
    for (const auto& [tok, _] : items) vocab.add_token(tok);
    return vocab;
}

struct EncodedBatch {
    std::int64_t batch = 0;
    std::int64_t seq_len = 0;
    std::vector<std::int64_t> token_ids;  // [batch x seq_len]
    std::vector<std::int64_t> mask;       // 1 on non-PAD positions

    std::int64_t id(std::int64_t b, std::int64_t p) const { return token_ids[b * seq_len + p]; }
    std::int64_t m(std::int64_t b, std::int64_t p) const { return mask[b * seq_len + p]; }
};

inline EncodedBatch encode_batch(const std::vector<std::string>& sentences, const Vocabulary& vocab,
                                 TokenizerMode mode, std::int64_t max_seq_len) {
    EncodedBatch out;
    out.batch = static_cast<std::int64_t>(sentences.size());
    out.seq_len = max_seq_len;
    out.token_ids.assign(static_cast<std::size_t>(out.batch * max_seq_len), Vocabulary::kPad);
    out.mask.assign(static_cast<std::size_t>(out.batch * max_seq_len), 0);
    for (std::int64_t b = 0; b < out.batch; ++b) {
        std::vector<std::string> toks = tokenize(sentences[static_cast<std::size_t>(b)], mode);
        std::int64_t keep = std::min<std::int64_t>(static_cast<std::int64_t>(toks.size()),
                                                   max_seq_len - 2);
        std::int64_t p = 0;
        auto put = [&](std::int64_t id) {
            out.token_ids[b * max_seq_len + p] = id;
            out.mask[b * max_seq_len + p] = 1;
            ++p;
        };
        put(Vocabulary::kCls);
        for (std::int64_t i = 0; i < keep; ++i) put(vocab.id_of(toks[static_cast<std::size_t>(i)]));
        put(Vocabulary::kSep);
    }
    return out;
}

struct EncoderModel {
    EncoderConfig config;
    Vocabulary vocab;
    std::map<std::string, Tensor> params;  // ordered: deterministic iteration

    Tensor& p(const std::string& name) {
        auto it = params.find(name);
        if (it == params.end()) throw ContractError("unknown parameter " + name);
        return it->second;
    }
    const Tensor& p(const std::string& name) const {
        auto it = params.find(name);
        if (it == params.end()) throw ContractError("unknown parameter " + name);
        return it->second;
    }

    void set_requires_grad(bool on) {
        for (auto& [_, t] : params) t.set_requires_grad(on);
    }
    void zero_grad() {
        for (auto& [_, t] : params)
            if (t.requires_grad) t.zero_grad();
    }
    bool all_finite() const {
        for (const auto& [_, t] : params)
            if (!t.all_finite()) return false;
        return true;
    }
};

// Embeddings and linear weights ~ N(0, 0.02^2); layer-norm gain 1, bias 0.
inline EncoderModel init_model(EncoderConfig config, Vocabulary vocab, RngState& rng) {
    config.validate();
    EncoderModel m;
    m.config = config;
    m.vocab = std::move(vocab);

    auto normal = [&rng](std::vector<std::int64_t> shape) {
        Tensor t = Tensor::zeros(std::move(shape));
        for (double& v : t.values) v = rng.next_normal() * 0.02;
        return t;
    };
    std::int64_t d = config.d_model, dh = d / config.n_heads;

    m.params["tok_emb"] = normal({m.vocab.size(), d});
    m.params["pos_emb"] = normal({config.max_seq_len, d});
    for (std::int64_t l = 0; l < config.n_layers; ++l) {
        std::string pre = "layer" + std::to_string(l) + ".";
        m.params[pre + "ln1.gain"] = Tensor::full({d}, 1.0);
        m.params[pre + "ln1.bias"] = Tensor::zeros({d});
        for (std::int64_t h = 0; h < config.n_heads; ++h) {
            std::string hp = pre + "head" + std::to_string(h) + ".";
            m.params[hp + "wq"] = normal({d, dh});
            m.params[hp + "wk"] = normal({d, dh});
            m.params[hp + "wv"] = normal({d, dh});
        }
        m.params[pre + "wo"] = normal({d, d});
        m.params[pre + "bo"] = Tensor::zeros({d});
        m.params[pre + "ln2.gain"] = Tensor::full({d}, 1.0);
        m.params[pre + "ln2.bias"] = Tensor::zeros({d});
        m.params[pre + "w1"] = normal({d, config.d_ff});
        m.params[pre + "b1"] = Tensor::zeros({config.d_ff});
        m.params[pre + "w2"] = normal({config.d_ff, d});
        m.params[pre + "b2"] = Tensor::zeros({d});
    }
    m.params["ln_f.gain"] = Tensor::full({d}, 1.0);
    m.params["ln_f.bias"] = Tensor::zeros({d});
    m.params["pooler.w"] = normal({d, d});
    m.params["pooler.b"] = Tensor::zeros({d});
    return m;
}

// Token embeddings for the whole batch, flattened to [batch*seq x d_model].
// PAD columns carry a -1e9 additive attention bias so they are never attended
// to; dropout sits after the embeddings, the attention weights, and the FFN
// output, active only in training mode.
inline Tape::NodeId encoder_forward(Tape& tape, EncoderModel& model, const EncodedBatch& batch,
                                    RngState& rng, bool training) {
    const EncoderConfig& cfg = model.config;
    std::int64_t B = batch.batch, S = batch.seq_len, d = cfg.d_model;
    std::int64_t dh = d / cfg.n_heads;
    if (S > cfg.max_seq_len) throw ContractError("batch seq_len exceeds max_seq_len");

    std::vector<std::int64_t> positions(static_cast<std::size_t>(B * S));
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t s = 0; s < S; ++s) {
            std::int64_t id = batch.id(b, s);
            if (id < 0 || id >= model.vocab.size())
                throw ContractError("token id " + std::to_string(id) + " out of vocab range");
            positions[static_cast<std::size_t>(b * S + s)] = s;
        }

    auto x = tape.add(tape.gather_rows(tape.leaf(model.p("tok_emb")), batch.token_ids),
                      tape.gather_rows(tape.leaf(model.p("pos_emb")), positions));
    x = tape.dropout(x, cfg.dropout_rate, rng, training);

    double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::int64_t l = 0; l < cfg.n_layers; ++l) {
        std::string pre = "layer" + std::to_string(l) + ".";
        auto normed = tape.layer_norm(x, tape.leaf(model.p(pre + "ln1.gain")),
                                      tape.leaf(model.p(pre + "ln1.bias")), 1e-5);
        // per-head projections over the flattened batch
        std::vector<Tape::NodeId> q(static_cast<std::size_t>(cfg.n_heads));
        std::vector<Tape::NodeId> k(static_cast<std::size_t>(cfg.n_heads));
        std::vector<Tape::NodeId> v(static_cast<std::size_t>(cfg.n_heads));
        for (std::int64_t h = 0; h < cfg.n_heads; ++h) {
            std::string hp = pre + "head" + std::to_string(h) + ".";
            q[h] = tape.matmul(normed, tape.leaf(model.p(hp + "wq")));
            k[h] = tape.matmul(normed, tape.leaf(model.p(hp + "wk")));
            v[h] = tape.matmul(normed, tape.leaf(model.p(hp + "wv")));
        }
        std::vector<Tape::NodeId> sentence_outs;
        sentence_outs.reserve(static_cast<std::size_t>(B));
        for (std::int64_t b = 0; b < B; ++b) {
            std::vector<std::int64_t> rows(static_cast<std::size_t>(S));
            for (std::int64_t s = 0; s < S; ++s) rows[static_cast<std::size_t>(s)] = b * S + s;
            Tensor bias = Tensor::zeros({S, S});
            for (std::int64_t j = 0; j < S; ++j)
                if (batch.m(b, j) == 0)
                    for (std::int64_t i = 0; i < S; ++i) bias.at(i, j) = -1e9;
            auto bias_node = tape.constant(std::move(bias));
            std::vector<Tape::NodeId> heads;
            heads.reserve(static_cast<std::size_t>(cfg.n_heads));
            for (std::int64_t h = 0; h < cfg.n_heads; ++h) {
                auto qs = tape.gather_rows(q[h], rows);
                auto ks = tape.gather_rows(k[h], rows);
                auto vs = tape.gather_rows(v[h], rows);
                auto scores = tape.add(tape.scale(tape.matmul(qs, tape.transpose(ks)), attn_scale),
                                       bias_node);
                auto attn = tape.dropout(tape.softmax_rows(scores), cfg.dropout_rate, rng, training);
                heads.push_back(tape.matmul(attn, vs));
            }
            sentence_outs.push_back(tape.concat_cols(heads));
        }
        auto attn_out = tape.add_rowvec(
            tape.matmul(tape.concat_rows(sentence_outs), tape.leaf(model.p(pre + "wo"))),
            tape.leaf(model.p(pre + "bo")));
        x = tape.add(x, attn_out);

        auto normed2 = tape.layer_norm(x, tape.leaf(model.p(pre + "ln2.gain")),
                                       tape.leaf(model.p(pre + "ln2.bias")), 1e-5);
        auto hidden = tape.relu(tape.add_rowvec(tape.matmul(normed2, tape.leaf(model.p(pre + "w1"))),
                                                tape.leaf(model.p(pre + "b1"))));
        auto ffn = tape.add_rowvec(tape.matmul(hidden, tape.leaf(model.p(pre + "w2"))),
                                   tape.leaf(model.p(pre + "b2")));
        ffn = tape.dropout(ffn, cfg.dropout_rate, rng, training);
        x = tape.add(x, ffn);
    }
    return tape.layer_norm(x, tape.leaf(model.p("ln_f.gain")), tape.leaf(model.p("ln_f.bias")),
                           1e-5);
}

// Reduce [batch*seq x d] token embeddings to [batch x d] sentence embeddings.
// Cls: head-token row through the affine+tanh pooler. Mean: mask-weighted
// average over non-PAD positions, no pooler.
inline Tape::NodeId pool(Tape& tape, EncoderModel& model, const EncodedBatch& batch,
                         Tape::NodeId token_embeddings, Pooling strategy) {
    std::int64_t B = batch.batch, S = batch.seq_len;
    if (strategy == Pooling::Cls) {
        std::vector<std::int64_t> cls_rows(static_cast<std::size_t>(B));
        for (std::int64_t b = 0; b < B; ++b) cls_rows[static_cast<std::size_t>(b)] = b * S;
        auto cls = tape.gather_rows(token_embeddings, cls_rows);
        return tape.tanh_op(tape.add_rowvec(tape.matmul(cls, tape.leaf(model.p("pooler.w"))),
                                            tape.leaf(model.p("pooler.b"))));
    }
    // Mean: constant [B x B*S] averaging matrix built from the mask.
    Tensor weights = Tensor::zeros({B, B * S});
    for (std::int64_t b = 0; b < B; ++b) {
        std::int64_t count = 0;
        for (std::int64_t s = 0; s < S; ++s) count += batch.m(b, s);
        if (count == 0) throw ContractError("pool: all-zero mask row " + std::to_string(b));
        for (std::int64_t s = 0; s < S; ++s)
            if (batch.m(b, s)) weights.at(b, b * S + s) = 1.0 / static_cast<double>(count);
    }
    return tape.matmul(tape.constant(std::move(weights)), token_embeddings);
}

// Eval-mode sentence embeddings as a plain tensor, batched internally.
inline Tensor embed_sentences(EncoderModel& model, const std::vector<std::string>& sentences,
                              Pooling strategy, std::int64_t batch_size = 64) {
    Tensor out = Tensor::zeros({static_cast<std::int64_t>(sentences.size()), model.config.d_model});
    RngState rng(0);  // unused in eval mode
    std::int64_t n = static_cast<std::int64_t>(sentences.size());
    for (std::int64_t start = 0; start < n; start += batch_size) {
        std::int64_t stop = std::min(n, start + batch_size);
        std::vector<std::string> chunk(sentences.begin() + start, sentences.begin() + stop);
        EncodedBatch batch = encode_batch(chunk, model.vocab, model.config.tokenizer,
                                          model.config.max_seq_len);
        Tape tape;
        auto pooled = pool(tape, model, batch, encoder_forward(tape, model, batch, rng, false),
                           strategy);
        const Tensor& vals = tape.value(pooled);
        std::copy(vals.values.begin(), vals.values.end(),
                  out.values.begin() + start * model.config.d_model);
    }
    return out;
}

}  // namespace simlab
