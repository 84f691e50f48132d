#pragma once

// Contrastive objectives. Unsupervised: the same sentences encoded twice with
// independent dropout masks form positive pairs, everything else in the batch
// is a negative. Supervised: entailment pairs are positives and contradiction
// hypotheses are hard negatives appended to the in-batch denominator.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "simlab/autograd.hpp"
#include "simlab/common.hpp"
#include "simlab/encoder.hpp"

namespace simlab {

enum class LossVariant { Unsupervised, Supervised };

inline const char* to_string(LossVariant v) {
    return v == LossVariant::Unsupervised ? "unsupervised" : "supervised";
}

struct LossConfig {
    double temperature = 0.05;
    LossVariant variant = LossVariant::Unsupervised;

    void validate() const {
        if (temperature <= 0.0) throw ConfigError("temperature must be positive");
    }
};

struct TrainExample {
    std::string anchor;
    std::optional<std::string> positive;
    std::optional<std::string> hard_negative;
};

// Entry (i,j) = cos(a_i, b_j); rows L2-normalized first, so this is
// differentiable end to end. Zero-norm rows are rejected by the normalize op.
inline Tape::NodeId cosine_similarity_matrix(Tape& tape, Tape::NodeId a, Tape::NodeId b) {
    return tape.matmul(tape.l2_normalize_rows(a), tape.transpose(tape.l2_normalize_rows(b)));
}

namespace detail {

// mean over i of -log_softmax(logits)[i, i]
inline Tape::NodeId mean_diagonal_nll(Tape& tape, Tape::NodeId logits, std::int64_t n) {
    std::int64_t cols = tape.value(logits).cols();
    Tensor pick = Tensor::zeros({n, cols});
    for (std::int64_t i = 0; i < n; ++i) pick.at(i, i) = 1.0;
    auto picked = tape.mul(tape.log_softmax_rows(logits), tape.constant(std::move(pick)));
    return tape.scale(tape.sum(picked), -1.0 / static_cast<double>(n));
}

}  // namespace detail

inline Tape::NodeId unsupervised_loss(Tape& tape, Tape::NodeId h1, Tape::NodeId h2,
                                      double temperature) {
    std::int64_t n = tape.value(h1).rows();
    if (n == 0) throw DataError("unsupervised_loss: empty batch");
    if (tape.value(h2).rows() != n)
        throw DataError("unsupervised_loss: row count mismatch between the two views");
    auto logits = tape.scale(cosine_similarity_matrix(tape, h1, h2), 1.0 / temperature);
    return detail::mean_diagonal_nll(tape, logits, n);
}

inline Tape::NodeId supervised_loss(Tape& tape, Tape::NodeId h_anchor, Tape::NodeId h_pos,
                                    std::optional<Tape::NodeId> h_neg, double temperature) {
    std::int64_t n = tape.value(h_anchor).rows();
    if (n == 0) throw DataError("supervised_loss: empty batch");
    if (tape.value(h_pos).rows() != n ||
        (h_neg && tape.value(*h_neg).rows() != n))
        throw DataError("supervised_loss: row count mismatch across anchor/positive/negative");
    auto logits = cosine_similarity_matrix(tape, h_anchor, h_pos);
    if (h_neg)
        logits = tape.concat_cols({logits, cosine_similarity_matrix(tape, h_anchor, *h_neg)});
    logits = tape.scale(logits, 1.0 / temperature);
    return detail::mean_diagonal_nll(tape, logits, n);
}

// Two forward passes over the identical encoded batch; the rng advances
// between passes, so the dropout masks differ and the difference between the
// two views is the augmentation.
inline std::pair<Tape::NodeId, Tape::NodeId> build_unsupervised_batch(
    Tape& tape, EncoderModel& model, const std::vector<std::string>& sentences, RngState& rng,
    Pooling pooling) {
    EncodedBatch batch =
        encode_batch(sentences, model.vocab, model.config.tokenizer, model.config.max_seq_len);
    auto h1 = pool(tape, model, batch, encoder_forward(tape, model, batch, rng, true), pooling);
    auto h2 = pool(tape, model, batch, encoder_forward(tape, model, batch, rng, true), pooling);
    return {h1, h2};
}

struct SupervisedBatch {
    Tape::NodeId anchors;
    Tape::NodeId positives;
    std::optional<Tape::NodeId> negatives;
};

inline SupervisedBatch build_supervised_batch(Tape& tape, EncoderModel& model,
                                              const std::vector<TrainExample>& examples,
                                              RngState& rng, Pooling pooling) {
    if (examples.empty()) throw DataError("build_supervised_batch: empty batch");
    bool with_neg = examples.front().hard_negative.has_value();
    std::vector<std::string> anchors, positives, negatives;
    for (const TrainExample& ex : examples) {
        if (!ex.positive) throw DataError("supervised batch requires a positive for every anchor");
        if (ex.hard_negative.has_value() != with_neg)
            throw DataError("mixed presence of hard negatives within a batch");
        anchors.push_back(ex.anchor);
        positives.push_back(*ex.positive);
        if (with_neg) negatives.push_back(*ex.hard_negative);
    }
    auto encode = [&](const std::vector<std::string>& sents) {
        EncodedBatch b =
            encode_batch(sents, model.vocab, model.config.tokenizer, model.config.max_seq_len);
        return pool(tape, model, b, encoder_forward(tape, model, b, rng, true), pooling);
    };
    SupervisedBatch out{encode(anchors), encode(positives), std::nullopt};
    if (with_neg) out.negatives = encode(negatives);
    return out;
}

}  // namespace simlab
