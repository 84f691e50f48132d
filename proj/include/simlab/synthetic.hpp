#pragma once

// Synthetic corpus over a small symbol alphabet. Gold similarity of a sentence
// pair is the Jaccard overlap of their symbol sets, which gives an STS task a
// desk-scale encoder can actually learn.

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "simlab/common.hpp"
#include "simlab/loss.hpp"
#include "simlab/rng.hpp"
#include "simlab/sts.hpp"

namespace simlab {

struct SyntheticOptions {
    std::int64_t alphabet_size = 40;
    std::int64_t min_len = 6;
    std::int64_t max_len = 12;
};

namespace detail {

inline char symbol(std::int64_t i) {
    static const char* alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz";
    return alphabet[i];
}

inline std::string random_sentence(RngState& rng, const SyntheticOptions& opt) {
    std::int64_t len = opt.min_len +
        static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(opt.max_len - opt.min_len + 1)));
    std::string s;
    for (std::int64_t i = 0; i < len; ++i)
        s.push_back(symbol(static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(opt.alphabet_size)))));
    return s;
}

// Copy with each symbol kept with probability keep, else resampled.
inline std::string perturb(const std::string& base, double keep, RngState& rng,
                           const SyntheticOptions& opt) {
    std::string out = base;
    for (char& c : out)
        if (rng.next_uniform() >= keep)
            c = symbol(static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(opt.alphabet_size))));
    return out;
}

inline double jaccard(const std::string& a, const std::string& b) {
    std::set<char> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    std::int64_t inter = 0;
    for (char c : sa) inter += sb.count(c);
    std::size_t uni = sa.size() + sb.size() - static_cast<std::size_t>(inter);
    return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace detail

inline std::vector<std::string> synthetic_sentences(std::int64_t n, std::uint64_t seed,
                                                    SyntheticOptions opt = {}) {
    RngState rng(seed);
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) out.push_back(detail::random_sentence(rng, opt));
    return out;
}

// Pairs with a spread of overlap levels; gold = symbol-set Jaccard.
inline std::vector<StsPair> synthetic_sts_pairs(std::int64_t n, std::uint64_t seed,
                                                SyntheticOptions opt = {}) {
    RngState rng(seed);
    std::vector<StsPair> out;
    out.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        std::string a = detail::random_sentence(rng, opt);
        std::string b = detail::perturb(a, rng.next_uniform(), rng, opt);
        out.push_back({a, b, detail::jaccard(a, b)});
    }
    return out;
}

// Triplets: positive is a high-overlap paraphrase, hard negative a low-overlap
// distractor of the same shape.
inline std::vector<TrainExample> synthetic_triplets(std::int64_t n, std::uint64_t seed,
                                                    SyntheticOptions opt = {}) {
    RngState rng(seed);
    std::vector<TrainExample> out;
    out.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        std::string anchor = detail::random_sentence(rng, opt);
        std::string positive = detail::perturb(anchor, 0.85, rng, opt);
        std::string negative = detail::perturb(anchor, 0.10, rng, opt);
        out.push_back({anchor, positive, negative});
    }
    return out;
}

inline void write_sentence_file(const std::vector<std::string>& sentences,
                                const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path);
    for (const auto& s : sentences) os << s << '\n';
}

inline void write_sts_file(const std::vector<StsPair>& pairs, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path);
    char buf[64];
    for (const auto& p : pairs) {
        std::snprintf(buf, sizeof buf, "%.17g", p.gold_score);
        os << p.sentence_a << '\t' << p.sentence_b << '\t' << buf << '\n';
    }
}

inline void write_triplet_file(const std::vector<TrainExample>& examples,
                               const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path);
    for (const auto& ex : examples) {
        os << ex.anchor << '\t' << (ex.positive ? *ex.positive : "");
        if (ex.hard_negative) os << '\t' << *ex.hard_negative;
        os << '\n';
    }
}

}  // namespace simlab
