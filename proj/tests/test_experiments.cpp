#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "simlab/experiments.hpp"
#include "simlab/synthetic.hpp"
#include "oracles.hpp"

using namespace simlab;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("simlab_exp_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// Tiny dataset + spec that trains in well under a second per grid point.
SweepSpec tiny_spec(const fs::path& dir) {
    write_sentence_file(synthetic_sentences(32, 7), (dir / "train.txt").string());
    write_sts_file(synthetic_sts_pairs(24, 8), (dir / "dev.tsv").string());
    write_sts_file(synthetic_sts_pairs(24, 9), (dir / "test.tsv").string());

    SweepSpec spec;
    DatasetSpec ds;
    ds.id = "toy";
    ds.train_file = (dir / "train.txt").string();
    ds.dev_file = (dir / "dev.tsv").string();
    ds.test_files = {{"toy-test", (dir / "test.tsv").string()}};
    spec.datasets.push_back(ds);
    spec.batch_sizes = {4};
    spec.learning_rates = {1e-3, 3e-3};
    spec.seeds = {1, 2};
    spec.encoder.d_model = 8;
    spec.encoder.n_layers = 1;
    spec.encoder.n_heads = 2;
    spec.encoder.d_ff = 16;
    spec.encoder.max_seq_len = 16;
    spec.encoder.dropout_rate = 0.1;
    spec.base_train.total_examples = 16;
    spec.base_train.n_evaluations = 2;
    return spec;
}

ResultRow make_row(const std::string& ds, std::int64_t bs, double lr, std::uint64_t seed,
                   double dev, std::map<std::string, double> tests = {},
                   std::string status = "ok") {
    ResultRow r;
    r.dataset = ds;
    r.batch_size = bs;
    r.learning_rate = lr;
    r.seed = seed;
    r.dev_score = dev;
    r.test_scores = std::move(tests);
    r.status = std::move(status);
    return r;
}

AggregateRow make_agg(const std::string& ds, std::int64_t bs, double lr, double dev,
                      double avg = std::nan("")) {
    AggregateRow a;
    a.dataset = ds;
    a.batch_size = bs;
    a.learning_rate = lr;
    a.n_seeds = 1;
    a.dev_score = dev;
    a.avg_test = avg;
    if (std::isfinite(avg)) a.test_scores["t"] = avg;
    return a;
}

}  // namespace

TEST_CASE("learning-rate presets") {
    CHECK(lr_preset("desk") == std::vector<double>{1e-4, 3e-4, 5e-4});
    CHECK(lr_preset("paper") == std::vector<double>{1e-5, 3e-5, 5e-5});
    CHECK_THROWS_AS(lr_preset("huge"), ConfigError);
}

TEST_CASE("sweep spec parsing") {
    KvConfig cfg;
    cfg.set("datasets", "a, b");
    cfg.set("batch_sizes", "64,128");
    cfg.set("learning_rates", "desk");
    cfg.set("seeds", "1,2,3");
    cfg.set("variant", "supervised");
    cfg.set("pooling", "mean");
    cfg.set("d_model", "16");
    cfg.set("dataset.a.train", "a_train.tsv");
    cfg.set("dataset.a.dev", "a_dev.tsv");
    cfg.set("dataset.a.test", "x:ax.tsv, y:ay.tsv");
    cfg.set("dataset.b.train", "b_train.tsv");
    cfg.set("dataset.b.dev", "b_dev.tsv");

    SweepSpec spec = parse_sweep_spec(cfg);
    CHECK(spec.datasets.size() == 2);
    CHECK(spec.datasets[0].id == "a");
    CHECK(spec.datasets[0].test_files ==
          std::vector<std::pair<std::string, std::string>>{{"x", "ax.tsv"}, {"y", "ay.tsv"}});
    CHECK(spec.datasets[1].test_files.empty());
    CHECK(spec.batch_sizes == std::vector<std::int64_t>{64, 128});
    CHECK(spec.learning_rates == lr_preset("desk"));
    CHECK(spec.seeds == std::vector<std::uint64_t>{1, 2, 3});
    CHECK(spec.variant == LossVariant::Supervised);
    CHECK(spec.pooling == Pooling::Mean);
    CHECK(spec.encoder.d_model == 16);
    CHECK(spec.grid_size() == 2 * 2 * 3 * 3);

    SECTION("explicit learning-rate list") {
        cfg.set("learning_rates", "1e-3, 2e-3");
        CHECK(parse_sweep_spec(cfg).learning_rates == std::vector<double>{1e-3, 2e-3});
    }
    SECTION("unknown key rejected") {
        cfg.set("learnrate", "1");
        CHECK_THROWS_AS(parse_sweep_spec(cfg), ConfigError);
    }
    SECTION("missing per-dataset file") {
        cfg.set("datasets", "a, b, c");
        CHECK_THROWS_AS(parse_sweep_spec(cfg), ConfigError);
    }
    SECTION("test entries need name:path") {
        cfg.set("dataset.a.test", "just_a_path.tsv");
        CHECK_THROWS_AS(parse_sweep_spec(cfg), ConfigError);
    }
    SECTION("empty axis rejected") {
        cfg.set("seeds", "");
        CHECK_THROWS_AS(parse_sweep_spec(cfg), ConfigError);
    }
}

TEST_CASE("grid point key is filesystem-safe and unique per point") {
    CHECK(grid_point_key("wiki", 64, 3e-4, 2) == "wiki__bs64__lr0.0003__seed2");
    CHECK(grid_point_key("wiki", 64, 3e-4, 2) != grid_point_key("wiki", 64, 3e-4, 3));
    CHECK(grid_point_key("wiki", 64, 1e-4, 2) != grid_point_key("wiki", 64, 3e-4, 2));
}

TEST_CASE("run_sweep executes the full grid and is idempotent") {
    fs::path dir = fresh_dir("sweep");
    SweepSpec spec = tiny_spec(dir);
    fs::path results = dir / "results";

    std::vector<ResultRow> rows = run_sweep(spec, results.string());
    REQUIRE(rows.size() == 4);
    for (const ResultRow& r : rows) {
        CHECK(r.status == "ok");
        CHECK(std::isfinite(r.dev_score));
        REQUIRE(r.test_scores.count("toy-test") == 1);
        CHECK(fs::exists(results /
                         (grid_point_key(r.dataset, r.batch_size, r.learning_rate, r.seed) +
                          ".json")));
    }
    // Same grid point, same seed => bit-identical result.
    CHECK(rows[0].dev_score != rows[1].dev_score);  // different lr

    SECTION("second pass loads stored rows instead of re-running") {
        // Poison one stored row with a sentinel; a re-run must return the
        // sentinel, proving the grid point was not recomputed.
        fs::path poisoned =
            results / (grid_point_key("toy", 4, 1e-3, 1) + ".json");
        REQUIRE(fs::exists(poisoned));
        {
            std::ifstream is(poisoned);
            nlohmann::json j = nlohmann::json::parse(is);
            j["row"]["dev_score"] = 123.25;
            std::ofstream os(poisoned);
            os << j.dump(2);
        }
        std::vector<ResultRow> again = run_sweep(spec, results.string());
        REQUIRE(again.size() == 4);
        bool saw_sentinel = false;
        for (const ResultRow& r : again) {
            if (r.learning_rate == 1e-3 && r.seed == 1) {
                CHECK(r.dev_score == 123.25);
                saw_sentinel = true;
            }
        }
        CHECK(saw_sentinel);
    }

    SECTION("re-running a deleted grid point reproduces it bit-exactly") {
        ResultRow target = rows[2];
        fs::remove(results / (grid_point_key(target.dataset, target.batch_size,
                                             target.learning_rate, target.seed) +
                              ".json"));
        std::vector<ResultRow> again = run_sweep(spec, results.string());
        for (const ResultRow& r : again)
            if (r.learning_rate == target.learning_rate && r.seed == target.seed) {
                CHECK(r.dev_score == target.dev_score);
                CHECK(r.test_scores == target.test_scores);
            }
    }

    SECTION("parallel workers agree with serial execution") {
        fs::path results2 = dir / "results_mt";
        std::vector<ResultRow> mt = run_sweep(spec, results2.string(), 2);
        REQUIRE(mt.size() == rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            CHECK(mt[i].dev_score == rows[i].dev_score);
            CHECK(mt[i].test_scores == rows[i].test_scores);
        }
    }
}

TEST_CASE("run_sweep rejects a missing training file up front") {
    fs::path dir = fresh_dir("missing");
    SweepSpec spec = tiny_spec(dir);
    spec.datasets[0].train_file = (dir / "nope.txt").string();
    CHECK_THROWS_AS(run_sweep(spec, (dir / "r").string()), ConfigError);
}

TEST_CASE("seed averaging") {
    std::vector<ResultRow> rows{
        make_row("a", 64, 1e-4, 1, 50.0, {{"t1", 40.0}, {"t2", 60.0}}),
        make_row("a", 64, 1e-4, 2, 54.0, {{"t1", 44.0}, {"t2", 62.0}}),
        make_row("a", 64, 1e-4, 3, std::nan(""), {}, "failed"),
        make_row("a", 128, 1e-4, 1, 70.0),
        make_row("b", 64, 1e-4, 1, std::nan(""), {}, "failed"),
    };
    std::vector<AggregateRow> aggs = average_over_seeds(rows);
    REQUIRE(aggs.size() == 3);

    auto find = [&](const std::string& ds, std::int64_t bs) -> const AggregateRow& {
        for (const AggregateRow& a : aggs)
            if (a.dataset == ds && a.batch_size == bs) return a;
        FAIL("aggregate not found");
        return aggs[0];
    };

    const AggregateRow& a64 = find("a", 64);
    CHECK(a64.n_seeds == 2);
    CHECK(a64.exclusions == 1);
    CHECK(a64.dev_score == Catch::Approx(52.0).margin(1e-12));
    CHECK(a64.test_scores.at("t1") == Catch::Approx(42.0).margin(1e-12));
    CHECK(a64.test_scores.at("t2") == Catch::Approx(61.0).margin(1e-12));
    CHECK(a64.avg_test == Catch::Approx(51.5).margin(1e-12));

    const AggregateRow& a128 = find("a", 128);
    CHECK(a128.n_seeds == 1);
    CHECK(a128.test_scores.empty());
    CHECK(std::isnan(a128.avg_test));

    const AggregateRow& b64 = find("b", 64);
    CHECK(b64.missing());
    CHECK(b64.exclusions == 1);
    CHECK(std::isnan(b64.dev_score));
}

TEST_CASE("seed averaging matches a direct recomputation on random tables") {
    RngState rng(404);
    std::vector<ResultRow> rows;
    for (std::int64_t bs : {32, 64})
        for (double lr : {1e-4, 3e-4})
            for (std::uint64_t seed : {1u, 2u, 3u}) {
                bool failed = rng.next_uniform() < 0.2;
                rows.push_back(make_row("ds", bs, lr, seed,
                                        failed ? std::nan("") : rng.next_uniform() * 100.0,
                                        {}, failed ? "failed" : "ok"));
            }
    for (const AggregateRow& a : average_over_seeds(rows)) {
        double sum = 0.0;
        std::int64_t n = 0, excl = 0;
        for (const ResultRow& r : rows) {
            if (r.batch_size != a.batch_size || r.learning_rate != a.learning_rate) continue;
            if (r.status != "ok") { ++excl; continue; }
            sum += r.dev_score;
            ++n;
        }
        CHECK(a.n_seeds == n);
        CHECK(a.exclusions == excl);
        if (n > 0)
            CHECK(a.dev_score == Catch::Approx(sum / static_cast<double>(n)).margin(1e-12));
        else
            CHECK(std::isnan(a.dev_score));
    }
}

TEST_CASE("best config selection") {
    SECTION("highest dev wins") {
        std::vector<AggregateRow> aggs{make_agg("a", 64, 1e-4, 50.0),
                                       make_agg("a", 128, 3e-4, 55.0),
                                       make_agg("a", 256, 1e-4, 52.0)};
        auto best = best_config_for(aggs, "a");
        REQUIRE(best);
        CHECK(best->batch_size == 128);
        CHECK(best->learning_rate == 3e-4);
    }
    SECTION("dev tie breaks to smaller batch size, then smaller lr") {
        std::vector<AggregateRow> aggs{make_agg("a", 128, 1e-4, 50.0),
                                       make_agg("a", 64, 3e-4, 50.0),
                                       make_agg("a", 64, 1e-4, 50.0)};
        auto best = best_config_for(aggs, "a");
        REQUIRE(best);
        CHECK(best->batch_size == 64);
        CHECK(best->learning_rate == 1e-4);
    }
    SECTION("all-failed groups are skipped; unknown dataset gives nothing") {
        AggregateRow dead;
        dead.dataset = "a";
        dead.batch_size = 32;
        dead.learning_rate = 1e-4;  // n_seeds stays 0
        std::vector<AggregateRow> aggs{dead, make_agg("a", 64, 1e-4, 10.0)};
        auto best = best_config_for(aggs, "a");
        REQUIRE(best);
        CHECK(best->batch_size == 64);
        CHECK_FALSE(best_config_for(aggs, "zzz"));
    }
    SECTION("matches an exhaustive scan on random tables") {
        RngState rng(505);
        for (int rep = 0; rep < 100; ++rep) {
            std::vector<AggregateRow> aggs;
            for (std::int64_t bs : {32, 64, 128})
                for (double lr : {1e-4, 3e-4}) {
                    // coarse grid of scores to force frequent ties
                    double dev = static_cast<double>(rng.next_below(4)) * 10.0;
                    aggs.push_back(make_agg("d", bs, lr, dev));
                }
            auto best = best_config_for(aggs, "d");
            REQUIRE(best);
            for (const AggregateRow& a : aggs) {
                CHECK(a.dev_score <= best->dev_score);
                if (a.dev_score == best->dev_score)
                    CHECK(std::make_pair(best->batch_size, best->learning_rate) <=
                          std::make_pair(a.batch_size, a.learning_rate));
            }
        }
    }
}

TEST_CASE("rank aggregation hand-worked cases") {
    SECTION("two competitors, three conditions") {
        RankTable t = rank_aggregate({"A", "B"}, {{90.0, 90.0, 80.0}, {85.0, 95.0, 85.0}});
        CHECK(t.conditions_used == 3);
        CHECK(t.average_rank[0] == Catch::Approx(5.0 / 3.0).margin(1e-12));
        CHECK(t.average_rank[1] == Catch::Approx(4.0 / 3.0).margin(1e-12));
    }
    SECTION("exact tie shares the mean rank") {
        RankTable t = rank_aggregate({"A", "B"}, {{70.0}, {70.0}});
        CHECK(t.average_rank[0] == 1.5);
        CHECK(t.average_rank[1] == 1.5);
    }
    SECTION("conditions with a missing competitor are skipped for everyone") {
        RankTable t = rank_aggregate(
            {"A", "B"},
            {{90.0, std::nullopt, 80.0}, {85.0, 95.0, 85.0}});
        CHECK(t.conditions_used == 2);
        CHECK(t.conditions_skipped == 1);
        CHECK(t.average_rank[0] == 1.5);  // won cond 1, lost cond 3
        CHECK(t.average_rank[1] == 1.5);
    }
    SECTION("degenerate inputs rejected") {
        CHECK_THROWS_AS(rank_aggregate({"A"}, {{1.0}}), ConfigError);
        CHECK_THROWS_AS(rank_aggregate({"A", "B"}, {{}, {}}), ConfigError);
        CHECK_THROWS_AS(rank_aggregate({"A", "B"}, {{1.0}, {1.0, 2.0}}), ContractError);
        CHECK_THROWS_AS(
            rank_aggregate({"A", "B"}, {{std::nullopt}, {1.0}}), DataError);
    }
}

TEST_CASE("rank aggregation properties") {
    RngState rng(606);
    const std::size_t k = 20, n_cond = 10;
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < k; ++i) labels.push_back("c" + std::to_string(i));
    std::vector<std::vector<std::optional<double>>> scores(
        k, std::vector<std::optional<double>>(n_cond));
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t c = 0; c < n_cond; ++c) scores[i][c] = rng.next_uniform() * 100.0;

    RankTable t = rank_aggregate(labels, scores);

    SECTION("matches a sort-based oracle (ties almost surely absent)") {
        std::vector<double> expected(k, 0.0);
        for (std::size_t c = 0; c < n_cond; ++c) {
            std::vector<std::size_t> order(k);
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return *scores[a][c] > *scores[b][c];
            });
            for (std::size_t pos = 0; pos < k; ++pos)
                expected[order[pos]] += static_cast<double>(pos + 1);
        }
        for (std::size_t i = 0; i < k; ++i)
            CHECK(t.average_rank[i] ==
                  Catch::Approx(expected[i] / static_cast<double>(n_cond)).margin(1e-12));
    }
    SECTION("average ranks sum to k(k+1)/2") {
        double sum = std::accumulate(t.average_rank.begin(), t.average_rank.end(), 0.0);
        CHECK(sum == Catch::Approx(k * (k + 1) / 2.0).margin(1e-9));
    }
    SECTION("invariant under per-condition monotone transforms") {
        std::vector<std::vector<std::optional<double>>> warped = scores;
        for (std::size_t c = 0; c < n_cond; ++c) {
            double shift = rng.next_uniform() * 50.0;
            for (std::size_t i = 0; i < k; ++i)
                warped[i][c] = std::exp(*scores[i][c] / 100.0) * 3.0 + shift;
        }
        RankTable w = rank_aggregate(labels, warped);
        for (std::size_t i = 0; i < k; ++i)
            CHECK(w.average_rank[i] == Catch::Approx(t.average_rank[i]).margin(1e-12));
    }
}

TEST_CASE("batch-size rank grid") {
    // Two datasets, two batch sizes, two LRs. Scores chosen so that at
    // LR=1e-4 bs=64 wins on both datasets, and at LR=3e-4 they split.
    std::vector<AggregateRow> aggs{
        make_agg("a", 64, 1e-4, 0.0, 80.0),  make_agg("a", 128, 1e-4, 0.0, 70.0),
        make_agg("b", 64, 1e-4, 0.0, 60.0),  make_agg("b", 128, 1e-4, 0.0, 50.0),
        make_agg("a", 64, 3e-4, 0.0, 55.0),  make_agg("a", 128, 3e-4, 0.0, 65.0),
        make_agg("b", 64, 3e-4, 0.0, 75.0),  make_agg("b", 128, 3e-4, 0.0, 45.0),
    };
    BatchSizeRankGrid grid = batch_size_rank_grid(aggs);
    REQUIRE(grid.batch_sizes == std::vector<std::int64_t>{64, 128});
    REQUIRE(grid.learning_rates == std::vector<double>{1e-4, 3e-4});
    CHECK(grid.cells[0][0] == 1.0);  // bs=64 @ 1e-4: rank 1 on both datasets
    CHECK(grid.cells[1][0] == 2.0);
    CHECK(grid.cells[0][1] == 1.5);  // split at 3e-4
    CHECK(grid.cells[1][1] == 1.5);
    CHECK(grid.row_avg[0] == Catch::Approx(1.25).margin(1e-12));
    CHECK(grid.row_avg[1] == Catch::Approx(1.75).margin(1e-12));
    // Each column's ranks sum to k(k+1)/2.
    for (std::size_t c = 0; c < grid.learning_rates.size(); ++c)
        CHECK(grid.cells[0][c] + grid.cells[1][c] == 3.0);

    SECTION("falls back to dev score when no test sets exist") {
        std::vector<AggregateRow> dev_only{
            make_agg("a", 64, 1e-4, 30.0), make_agg("a", 128, 1e-4, 40.0)};
        BatchSizeRankGrid g = batch_size_rank_grid(dev_only);
        CHECK(g.cells[0][0] == 2.0);
        CHECK(g.cells[1][0] == 1.0);
    }

    SECTION("rendering shows one row per batch size") {
        std::string text = render_batch_size_rank_grid(grid);
        CHECK(text.find("BS\tLR=0.0001\tLR=0.0003\tAvg.\n") == 0);
        CHECK(text.find("64\t1.00\t1.50\t1.25\n") != std::string::npos);
        CHECK(text.find("128\t2.00\t1.50\t1.75\n") != std::string::npos);
    }
}

TEST_CASE("results CSV round-trip") {
    fs::path dir = fresh_dir("csv");
    std::vector<ResultRow> rows{
        make_row("a", 64, 1.0 / 3.0 * 1e-4, 1, 50.123456789012345,
                 {{"t1", 40.5}, {"t2", 60.25}}),
        make_row("a", 64, 1.0 / 3.0 * 1e-4, 2, std::nan(""), {}, "failed"),
        make_row("b", 128, 3e-4, 1, 70.0, {{"t1", 10.0}}),
    };
    std::string path = (dir / "r.csv").string();
    write_results_csv(rows, path);
    std::vector<ResultRow> back = read_results_csv(path);
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].dataset == rows[i].dataset);
        CHECK(back[i].batch_size == rows[i].batch_size);
        CHECK(back[i].learning_rate == rows[i].learning_rate);  // bit-exact
        CHECK(back[i].seed == rows[i].seed);
        if (std::isnan(rows[i].dev_score))
            CHECK(std::isnan(back[i].dev_score));
        else
            CHECK(back[i].dev_score == rows[i].dev_score);  // bit-exact
        CHECK(back[i].test_scores == rows[i].test_scores);
        CHECK(back[i].status == rows[i].status);
    }
}

TEST_CASE("results CSV rejects malformed input") {
    fs::path dir = fresh_dir("csv_bad");
    auto write = [&](const std::string& name, const std::string& body) {
        std::ofstream os(dir / name);
        os << body;
        return (dir / name).string();
    };
    CHECK_THROWS_AS(read_results_csv((dir / "nope.csv").string()), DataError);
    CHECK_THROWS_AS(read_results_csv(write("h.csv", "dataset,seed\n")), DataError);
    CHECK_THROWS_MATCHES(
        read_results_csv(write(
            "f.csv",
            "dataset,batch_size,learning_rate,seed,dev_score,extra_notes,avg,status\n")),
        DataError, Catch::Matchers::MessageMatches(
                       Catch::Matchers::ContainsSubstring("foreign column 'extra_notes'")));
    CHECK_THROWS_AS(
        read_results_csv(write("w.csv",
                               "dataset,batch_size,learning_rate,seed,dev_score,avg,status\n"
                               "a,64,0.0001,1,50.0,50.0,ok,EXTRA\n")),
        DataError);
}

TEST_CASE("best-config rendering") {
    std::vector<AggregateRow> aggs{make_agg("a", 64, 1e-4, 50.0, 45.0),
                                   make_agg("a", 128, 3e-4, 55.0, 47.0)};
    std::string text = render_best_config_table(aggs, {"a", "ghost"});
    CHECK(text.find("a\t128\t0.0003\t55.00") != std::string::npos);
    CHECK(text.find("ghost\tmissing") != std::string::npos);
}
