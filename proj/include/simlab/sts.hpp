#pragma once

// STS dataset loading, tie-aware Spearman rank correlation, and model
// evaluation (cosine of the pooled pair embeddings vs gold, reported x100).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "simlab/common.hpp"
#include "simlab/encoder.hpp"

namespace simlab {

struct StsPair {
    std::string sentence_a;
    std::string sentence_b;
    double gold_score = 0.0;
};

struct StsReport {
    std::string dataset;
    std::int64_t n_pairs = 0;
    double spearman_x100 = 0.0;
};

// Three tab-separated columns: sentence_a, sentence_b, score. Lines starting
// with '#' are headers/comments.
inline std::vector<StsPair> load_sts_tsv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open STS file: " + path);
    std::vector<StsPair> pairs;
    std::string line;
    std::int64_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::size_t t1 = line.find('\t');
        std::size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos)
            throw DataError(path + ": line " + std::to_string(line_no) +
                            ": expected 3 tab-separated columns");
        std::string score_str = line.substr(t2 + 1);
        StsPair p;
        p.sentence_a = line.substr(0, t1);
        p.sentence_b = line.substr(t1 + 1, t2 - t1 - 1);
        try {
            std::size_t used = 0;
            p.gold_score = std::stod(score_str, &used);
            if (used != score_str.size()) throw std::invalid_argument("trailing junk");
        } catch (const std::exception&) {
            throw DataError(path + ": line " + std::to_string(line_no) + ": non-numeric score '" +
                            score_str + "'");
        }
        pairs.push_back(std::move(p));
    }
    if (pairs.empty()) throw DataError(path + ": no STS pairs found");
    return pairs;
}

// Average ranks: tied values share the mean of the rank positions they occupy.
inline std::vector<double> average_ranks(const std::vector<double>& x) {
    std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        double r = (static_cast<double>(i + j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

// Pearson correlation of average-ranked values. The tie-free shortcut formula
// is deliberately not used here: it is wrong under ties.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw DataError("spearman: length mismatch (" + std::to_string(x.size()) + " vs " +
                        std::to_string(y.size()) + ")");
    if (x.size() < 2) throw DataError("spearman: need at least 2 observations");
    std::vector<double> rx = average_ranks(x);
    std::vector<double> ry = average_ranks(y);
    std::size_t n = x.size();
    double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / static_cast<double>(n);
    double my = std::accumulate(ry.begin(), ry.end(), 0.0) / static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        throw DataError("spearman: undefined correlation (constant sequence)");
    return sxy / std::sqrt(sxx * syy);
}

inline StsReport evaluate_sts(EncoderModel& model, Pooling pooling,
                              const std::vector<StsPair>& pairs,
                              const std::string& dataset_name = "sts") {
    if (pairs.empty()) throw DataError("evaluate_sts: empty pair list");
    std::vector<std::string> a, b;
    a.reserve(pairs.size());
    b.reserve(pairs.size());
    for (const StsPair& p : pairs) {
        a.push_back(p.sentence_a);
        b.push_back(p.sentence_b);
    }
    Tensor ea = embed_sentences(model, a, pooling);
    Tensor eb = embed_sentences(model, b, pooling);
    std::int64_t d = model.config.d_model;
    std::vector<double> predicted(pairs.size());
    std::vector<double> gold(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (std::int64_t j = 0; j < d; ++j) {
            double va = ea.values[i * d + j], vb = eb.values[i * d + j];
            dot += va * vb;
            na += va * va;
            nb += vb * vb;
        }
        if (na == 0.0 || nb == 0.0)
            throw ContractError("evaluate_sts: zero-norm embedding in pair " + std::to_string(i));
        predicted[i] = dot / (std::sqrt(na) * std::sqrt(nb));
        gold[i] = pairs[i].gold_score;
    }
    StsReport report;
    report.dataset = dataset_name;
    report.n_pairs = static_cast<std::int64_t>(pairs.size());
    try {
        report.spearman_x100 = 100.0 * spearman(predicted, gold);
    } catch (const DataError& e) {
        throw DataError(dataset_name + ": " + e.what());
    }
    return report;
}

}  // namespace simlab
