#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "simlab/rng.hpp"
#include "simlab/sts.hpp"

using namespace simlab;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    std::string path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream os(path);
    os << content;
    return path;
}

}  // namespace

TEST_CASE("load_sts_tsv") {
    SECTION("basic row") {
        std::string p = write_temp("sts_ok.tsv", "a\tb\t3.5\n");
        auto pairs = load_sts_tsv(p);
        REQUIRE(pairs.size() == 1);
        CHECK(pairs[0].sentence_a == "a");
        CHECK(pairs[0].sentence_b == "b");
        CHECK(pairs[0].gold_score == 3.5);
        std::remove(p.c_str());
    }
    SECTION("missing column names the line") {
        std::string p = write_temp("sts_bad.tsv", "a\tb\n");
        CHECK_THROWS_WITH(load_sts_tsv(p), Catch::Matchers::ContainsSubstring("line 1"));
        std::remove(p.c_str());
    }
    SECTION("non-numeric score names the line") {
        std::string p = write_temp("sts_nan.tsv", "a\tb\t1.0\nc\td\tx9\n");
        CHECK_THROWS_WITH(load_sts_tsv(p), Catch::Matchers::ContainsSubstring("line 2"));
        std::remove(p.c_str());
    }
    SECTION("header line skipped") {
        std::string p = write_temp("sts_hdr.tsv", "# a\tb\tscore\nx\ty\t1\nu\tv\t2\n");
        CHECK(load_sts_tsv(p).size() == 2);
        std::remove(p.c_str());
    }
    SECTION("empty file rejected") {
        std::string p = write_temp("sts_empty.tsv", "");
        CHECK_THROWS_AS(load_sts_tsv(p), DataError);
        std::remove(p.c_str());
    }
}

TEST_CASE("spearman basics") {
    CHECK(spearman({1, 2, 3}, {10, 20, 30}) == Catch::Approx(1.0).margin(1e-15));
    CHECK(spearman({1, 2, 3}, {3, 2, 1}) == Catch::Approx(-1.0).margin(1e-15));
    // tied case: ranks x -> [1, 2.5, 2.5, 4], y -> [1, 3, 2, 4];
    // Pearson of those ranks is 4.5 / sqrt(4.5 * 5) (scipy agrees)
    CHECK(spearman({1, 2, 2, 4}, {1, 3, 2, 4}) ==
          Catch::Approx(4.5 / std::sqrt(22.5)).margin(1e-15));
    CHECK(spearman({1, 2, 2, 4}, {1, 3, 2, 4}) ==
          Catch::Approx(oracle::spearman({1, 2, 2, 4}, {1, 3, 2, 4})).margin(1e-15));
}

TEST_CASE("spearman error paths") {
    CHECK_THROWS_AS(spearman({1, 2}, {1, 2, 3}), DataError);
    CHECK_THROWS_AS(spearman({1, 1, 1}, {1, 2, 3}), DataError);
    CHECK_THROWS_AS(spearman({1.0}, {2.0}), DataError);
}

TEST_CASE("spearman properties") {
    RngState rng(77);

    SECTION("oracle equivalence on 1000 tied integer sequences") {
        for (int trial = 0; trial < 1000; ++trial) {
            std::size_t n = 2 + static_cast<std::size_t>(rng.next_below(49));
            std::vector<double> x(n), y(n);
            bool ok = false;
            while (!ok) {
                for (std::size_t i = 0; i < n; ++i) {
                    x[i] = static_cast<double>(rng.next_below(10));
                    y[i] = static_cast<double>(rng.next_below(10));
                }
                // regenerate constant sequences; the correlation is undefined there
                auto varies = [](const std::vector<double>& v) {
                    for (double e : v)
                        if (e != v[0]) return true;
                    return false;
                };
                ok = varies(x) && varies(y);
            }
            CHECK(spearman(x, y) == Catch::Approx(oracle::spearman(x, y)).margin(1e-12));
        }
    }
    SECTION("monotone invariance of gold scores") {
        std::vector<double> x{0.3, -1.2, 0.8, 0.1, 2.4};
        std::vector<double> y{1.0, 0.0, 3.0, 2.0, 5.0};
        std::vector<double> y2(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) y2[i] = std::exp(2.0 * y[i]) + 7.0;
        CHECK(spearman(x, y) == Catch::Approx(spearman(x, y2)).margin(1e-12));
    }
    SECTION("symmetry") {
        std::vector<double> x{1, 4, 2, 2, 5};
        std::vector<double> y{2, 2, 3, 1, 4};
        CHECK(spearman(x, y) == Catch::Approx(spearman(y, x)).margin(1e-15));
    }
    SECTION("tie-free inputs agree with the 6*sum(d^2) shortcut") {
        // shortcut allowed here as a cross-check only
        std::vector<double> x{0.5, 3.1, -2.0, 1.7, 0.9, 8.2};
        std::vector<double> y{1.0, 2.5, -0.5, 4.4, 0.2, 3.3};
        auto rx = average_ranks(x);
        auto ry = average_ranks(y);
        double sum_d2 = 0;
        for (std::size_t i = 0; i < x.size(); ++i) sum_d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
        double n = static_cast<double>(x.size());
        double shortcut = 1.0 - 6.0 * sum_d2 / (n * (n * n - 1.0));
        CHECK(spearman(x, y) == Catch::Approx(shortcut).margin(1e-12));
    }
}

TEST_CASE("evaluate_sts") {
    EncoderConfig c;
    c.d_model = 16;
    c.n_layers = 1;
    c.n_heads = 2;
    c.d_ff = 32;
    c.max_seq_len = 10;
    c.max_vocab = 64;
    std::vector<std::string> corpus{"abcdef", "ghijkl"};
    RngState rng(31);
    EncoderModel model = init_model(c, build_vocab(corpus, c), rng);

    SECTION("gold that copies the model's own ranking scores 100") {
        std::vector<StsPair> pairs{{"ab", "cd", 0}, {"abcd", "abce", 0}, {"ef", "gh", 0},
                                   {"abab", "baba", 0}, {"cdef", "ghab", 0}};
        // first pass: compute the model's cosines and use them as gold
        std::vector<std::string> a, b;
        for (auto& p : pairs) {
            a.push_back(p.sentence_a);
            b.push_back(p.sentence_b);
        }
        Tensor ea = embed_sentences(model, a, Pooling::Mean);
        Tensor eb = embed_sentences(model, b, Pooling::Mean);
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            std::vector<double> ra(ea.values.begin() + i * 16, ea.values.begin() + (i + 1) * 16);
            std::vector<double> rb(eb.values.begin() + i * 16, eb.values.begin() + (i + 1) * 16);
            pairs[i].gold_score = oracle::cosine(ra, rb);
        }
        StsReport r = evaluate_sts(model, Pooling::Mean, pairs, "self");
        CHECK(r.spearman_x100 == Catch::Approx(100.0).margin(1e-9));
    }
    SECTION("degenerate identical pairs surface the undefined-correlation error") {
        std::vector<StsPair> pairs;
        for (int i = 0; i < 5; ++i) pairs.push_back({"abc", "abc", static_cast<double>(i)});
        CHECK_THROWS_WITH(evaluate_sts(model, Pooling::Cls, pairs, "degenerate"),
                          Catch::Matchers::ContainsSubstring("degenerate"));
    }
    SECTION("random encoder gives reproducible score strictly inside (-100, 100)") {
        std::vector<StsPair> pairs;
        RngState gen(5);
        std::vector<std::string> words{"ab", "cd", "ef", "gh", "ij", "kl", "abcd", "efgh"};
        for (int i = 0; i < 20; ++i) {
            std::string a = words[gen.next_below(words.size())] + words[gen.next_below(words.size())];
            std::string b = words[gen.next_below(words.size())] + words[gen.next_below(words.size())];
            pairs.push_back({a, b, static_cast<double>(gen.next_below(6))});
        }
        StsReport r1 = evaluate_sts(model, Pooling::Mean, pairs, "synthetic");
        StsReport r2 = evaluate_sts(model, Pooling::Mean, pairs, "synthetic");
        CHECK(r1.spearman_x100 == r2.spearman_x100);
        CHECK(r1.spearman_x100 > -100.0);
        CHECK(r1.spearman_x100 < 100.0);
        CHECK(r1.n_pairs == 20);
    }
    SECTION("pair order invariance") {
        std::vector<StsPair> pairs{{"ab", "cd", 1}, {"abcd", "abce", 4}, {"ef", "gh", 2},
                                   {"abab", "baba", 3}};
        StsReport fwd = evaluate_sts(model, Pooling::Mean, pairs, "s");
        std::reverse(pairs.begin(), pairs.end());
        StsReport rev = evaluate_sts(model, Pooling::Mean, pairs, "s");
        CHECK(fwd.spearman_x100 == rev.spearman_x100);
    }
}
