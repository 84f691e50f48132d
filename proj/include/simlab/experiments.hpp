#pragma once

// Grid sweeps over (dataset x batch size x learning rate x seed), seed
// averaging, best-config selection, and the average-rank analyses. The results
// store is an append-only directory of per-run JSON; derived tables are always
// recomputed from the raw rows.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "simlab/config.hpp"
#include "simlab/data.hpp"
#include "simlab/trainer.hpp"

namespace simlab {

inline const std::vector<double>& lr_preset(const std::string& name) {
    static const std::vector<double> desk{1e-4, 3e-4, 5e-4};
    static const std::vector<double> paper{1e-5, 3e-5, 5e-5};
    if (name == "desk") return desk;
    if (name == "paper") return paper;
    throw ConfigError("unknown learning-rate preset '" + name + "' (desk, paper)");
}

struct DatasetSpec {
    std::string id;
    std::string train_file;
    std::string dev_file;
    std::vector<std::pair<std::string, std::string>> test_files;  // (name, path)
};

struct SweepSpec {
    std::vector<DatasetSpec> datasets;
    std::vector<std::int64_t> batch_sizes;
    std::vector<double> learning_rates;
    std::vector<std::uint64_t> seeds;
    LossVariant variant = LossVariant::Unsupervised;
    Pooling pooling = Pooling::Cls;
    EncoderConfig encoder;
    TrainConfig base_train;  // batch_size/peak_lr/seed overridden per grid point

    std::size_t grid_size() const {
        return datasets.size() * batch_sizes.size() * learning_rates.size() * seeds.size();
    }
};

inline SweepSpec parse_sweep_spec(const KvConfig& cfg) {
    static const std::set<std::string> known{
        "datasets", "batch_sizes", "learning_rates", "seeds", "variant", "pooling",
        "tokenizer", "max_vocab", "d_model", "n_layers", "n_heads", "d_ff", "dropout_rate",
        "max_seq_len", "temperature", "total_examples", "n_evaluations", "warmup_fraction",
        "weight_decay", "beta1", "beta2", "adam_eps"};
    cfg.check_known(known, {"dataset."});

    SweepSpec spec;
    fill_encoder_config(cfg, spec.encoder);
    fill_train_config(cfg, spec.base_train);
    spec.variant = parse_variant(cfg.get_str("variant", "unsupervised"));
    spec.pooling = parse_pooling(cfg.get_str("pooling", "cls"));

    for (const std::string& bs : KvConfig::split_list(cfg.require_str("batch_sizes")))
        spec.batch_sizes.push_back(KvConfig::parse_int("batch_sizes", bs));
    std::string lrs = cfg.require_str("learning_rates");
    if (lrs == "desk" || lrs == "paper") {
        spec.learning_rates = lr_preset(lrs);
    } else {
        for (const std::string& lr : KvConfig::split_list(lrs))
            spec.learning_rates.push_back(KvConfig::parse_double("learning_rates", lr));
    }
    for (const std::string& s : KvConfig::split_list(cfg.require_str("seeds")))
        spec.seeds.push_back(static_cast<std::uint64_t>(KvConfig::parse_int("seeds", s)));

    for (const std::string& id : KvConfig::split_list(cfg.require_str("datasets"))) {
        DatasetSpec ds;
        ds.id = id;
        ds.train_file = cfg.require_str("dataset." + id + ".train");
        ds.dev_file = cfg.require_str("dataset." + id + ".dev");
        for (const std::string& entry :
             KvConfig::split_list(cfg.get_str("dataset." + id + ".test", ""))) {
            std::size_t colon = entry.find(':');
            if (colon == std::string::npos)
                throw ConfigError("dataset." + id + ".test entries must be name:path");
            ds.test_files.emplace_back(entry.substr(0, colon), entry.substr(colon + 1));
        }
        spec.datasets.push_back(std::move(ds));
    }
    if (spec.datasets.empty() || spec.batch_sizes.empty() || spec.learning_rates.empty() ||
        spec.seeds.empty())
        throw ConfigError("sweep spec: datasets, batch_sizes, learning_rates, seeds must be non-empty");
    spec.encoder.validate();
    return spec;
}

struct ResultRow {
    std::string dataset;
    std::int64_t batch_size = 0;
    double learning_rate = 0.0;
    std::uint64_t seed = 0;
    double dev_score = std::nan("");
    std::map<std::string, double> test_scores;
    std::string status = "ok";

    double avg_test() const {
        if (test_scores.empty()) return std::nan("");
        double s = 0;
        for (const auto& [_, v] : test_scores) s += v;
        return s / static_cast<double>(test_scores.size());
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["dataset"] = dataset;
        j["batch_size"] = batch_size;
        j["learning_rate"] = learning_rate;
        j["seed"] = seed;
        if (std::isfinite(dev_score)) j["dev_score"] = dev_score;
        j["test_scores"] = test_scores;
        j["status"] = status;
        return j;
    }

    static ResultRow from_json(const nlohmann::json& j) {
        ResultRow r;
        r.dataset = j.at("dataset");
        r.batch_size = j.at("batch_size");
        r.learning_rate = j.at("learning_rate");
        r.seed = j.at("seed");
        r.dev_score = j.count("dev_score") ? j.at("dev_score").get<double>() : std::nan("");
        r.test_scores = j.at("test_scores").get<std::map<std::string, double>>();
        r.status = j.at("status");
        return r;
    }
};

inline std::string format_lr(double lr) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", lr);
    return buf;
}

inline std::string grid_point_key(const std::string& dataset, std::int64_t bs, double lr,
                                  std::uint64_t seed) {
    return dataset + "__bs" + std::to_string(bs) + "__lr" + format_lr(lr) + "__seed" +
           std::to_string(seed);
}

// One grid point: deterministic vocabulary from the training corpus, model
// init seeded by the run seed, train, evaluate the test sets with the best
// checkpoint. Training divergence yields a failed row, not an exception.
inline ResultRow run_grid_point(const SweepSpec& spec, const DatasetSpec& ds, std::int64_t bs,
                                double lr, std::uint64_t seed,
                                nlohmann::json* record_out = nullptr) {
    ResultRow row;
    row.dataset = ds.id;
    row.batch_size = bs;
    row.learning_rate = lr;
    row.seed = seed;

    std::vector<TrainExample> dataset = load_train_file(ds.train_file, spec.variant);
    std::vector<StsPair> dev = load_sts_tsv(ds.dev_file);

    RngState init_rng(seed);
    EncoderModel model = init_model(spec.encoder, build_vocab(corpus_of(dataset), spec.encoder),
                                    init_rng);
    TrainConfig tc = spec.base_train;
    tc.batch_size = bs;
    tc.peak_lr = lr;
    tc.seed = seed;
    LossConfig lc;
    lc.variant = spec.variant;

    TrainResult result = train(std::move(model), dataset, lc, tc, dev, spec.pooling);
    row.status = result.record.status;
    row.dev_score = result.record.best_dev_score;
    if (row.status == "ok") {
        for (const auto& [name, path] : ds.test_files) {
            StsReport rep = evaluate_sts(result.best_model, spec.pooling,
                                         load_sts_tsv(path), name);
            row.test_scores[name] = rep.spearman_x100;
            result.record.test_scores[name] = rep.spearman_x100;
        }
    }
    if (record_out) *record_out = result.record.to_json();
    return row;
}

// Grid execution with idempotent per-run JSON files: completed grid points are
// loaded, not re-run. Workers share only the results directory; writes are
// serialized.
inline std::vector<ResultRow> run_sweep(const SweepSpec& spec, const std::string& results_dir,
                                        int workers = 1, std::ostream* log = nullptr) {
    namespace fs = std::filesystem;
    fs::create_directories(results_dir);

    struct GridPoint {
        const DatasetSpec* ds;
        std::int64_t bs;
        double lr;
        std::uint64_t seed;
    };
    std::vector<GridPoint> points;
    for (const DatasetSpec& ds : spec.datasets) {
        if (!fs::exists(ds.train_file))
            throw ConfigError("dataset '" + ds.id + "': missing train file " + ds.train_file);
        for (std::int64_t bs : spec.batch_sizes)
            for (double lr : spec.learning_rates)
                for (std::uint64_t seed : spec.seeds) points.push_back({&ds, bs, lr, seed});
    }

    std::vector<ResultRow> rows(points.size());
    std::mutex mu;
    std::size_t next = 0;

    auto worker = [&]() {
        while (true) {
            std::size_t i;
            {
                std::lock_guard<std::mutex> lock(mu);
                if (next >= points.size()) return;
                i = next++;
            }
            const GridPoint& gp = points[i];
            std::string key = grid_point_key(gp.ds->id, gp.bs, gp.lr, gp.seed);
            fs::path file = fs::path(results_dir) / (key + ".json");
            if (fs::exists(file)) {
                std::ifstream is(file);
                nlohmann::json j = nlohmann::json::parse(is);
                rows[i] = ResultRow::from_json(j.at("row"));
                continue;
            }
            if (log) {
                std::lock_guard<std::mutex> lock(mu);
                (*log) << "run " << key << "\n" << std::flush;
            }
            nlohmann::json record;
            ResultRow row = run_grid_point(spec, *gp.ds, gp.bs, gp.lr, gp.seed, &record);
            nlohmann::json j;
            j["row"] = row.to_json();
            j["record"] = record;
            {
                std::lock_guard<std::mutex> lock(mu);
                std::ofstream os(file);
                os << j.dump(2) << '\n';
            }
            rows[i] = row;
        }
    };

    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int w = 0; w < workers; ++w) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    return rows;
}

// ---- aggregation ----

struct AggregateRow {
    std::string dataset;
    std::int64_t batch_size = 0;
    double learning_rate = 0.0;
    std::int64_t n_seeds = 0;      // successful
    std::int64_t exclusions = 0;   // failed seeds
    double dev_score = std::nan("");
    std::map<std::string, double> test_scores;
    double avg_test = std::nan("");
    bool missing() const { return n_seeds == 0; }
};

// Mean over seeds per (dataset, batch size, learning rate); failed rows are
// excluded and counted.
inline std::vector<AggregateRow> average_over_seeds(const std::vector<ResultRow>& rows) {
    std::map<std::tuple<std::string, std::int64_t, double>, std::vector<const ResultRow*>> groups;
    for (const ResultRow& r : rows)
        groups[{r.dataset, r.batch_size, r.learning_rate}].push_back(&r);

    std::vector<AggregateRow> out;
    for (const auto& [key, members] : groups) {
        AggregateRow agg;
        agg.dataset = std::get<0>(key);
        agg.batch_size = std::get<1>(key);
        agg.learning_rate = std::get<2>(key);
        double dev_sum = 0.0, avg_sum = 0.0;
        std::map<std::string, double> test_sums;
        for (const ResultRow* r : members) {
            if (r->status != "ok") {
                ++agg.exclusions;
                continue;
            }
            ++agg.n_seeds;
            dev_sum += r->dev_score;
            avg_sum += r->avg_test();
            for (const auto& [name, v] : r->test_scores) test_sums[name] += v;
        }
        if (agg.n_seeds > 0) {
            agg.dev_score = dev_sum / static_cast<double>(agg.n_seeds);
            for (const auto& [name, s] : test_sums)
                agg.test_scores[name] = s / static_cast<double>(agg.n_seeds);
            if (!agg.test_scores.empty()) agg.avg_test = avg_sum / static_cast<double>(agg.n_seeds);
        }
        out.push_back(std::move(agg));
    }
    return out;
}

// Per dataset, the (batch size, learning rate) with the best seed-averaged dev
// score; ties go to the lexicographically smallest (batch size, learning rate).
inline std::optional<AggregateRow> best_config_for(const std::vector<AggregateRow>& aggs,
                                                   const std::string& dataset) {
    std::optional<AggregateRow> best;
    for (const AggregateRow& a : aggs) {
        if (a.dataset != dataset || a.missing()) continue;
        if (!best || a.dev_score > best->dev_score ||
            (a.dev_score == best->dev_score &&
             std::make_pair(a.batch_size, a.learning_rate) <
                 std::make_pair(best->batch_size, best->learning_rate)))
            best = a;
    }
    return best;
}

// ---- rank aggregation ----

struct RankTable {
    std::vector<std::string> labels;
    std::vector<double> average_rank;
    std::int64_t conditions_used = 0;
    std::int64_t conditions_skipped = 0;
};

// scores[competitor][condition]; rank 1 = highest score, ties share the mean
// rank. Conditions with any missing competitor are skipped for everyone.
inline RankTable rank_aggregate(const std::vector<std::string>& labels,
                                const std::vector<std::vector<std::optional<double>>>& scores) {
    std::size_t k = labels.size();
    if (k < 2) throw ConfigError("rank_aggregate: need at least 2 competitors");
    if (scores.size() != k) throw ContractError("rank_aggregate: labels/scores size mismatch");
    std::size_t n_cond = scores[0].size();
    for (const auto& row : scores)
        if (row.size() != n_cond) throw ContractError("rank_aggregate: ragged score table");
    if (n_cond == 0) throw ConfigError("rank_aggregate: need at least 1 condition");

    RankTable table;
    table.labels = labels;
    std::vector<double> rank_sums(k, 0.0);
    for (std::size_t c = 0; c < n_cond; ++c) {
        bool complete = true;
        for (std::size_t i = 0; i < k; ++i)
            if (!scores[i][c]) complete = false;
        if (!complete) {
            ++table.conditions_skipped;
            continue;
        }
        ++table.conditions_used;
        // rank descending: negate and use ascending average ranks
        std::vector<double> negated(k);
        for (std::size_t i = 0; i < k; ++i) negated[i] = -*scores[i][c];
        std::vector<double> ranks = average_ranks(negated);
        for (std::size_t i = 0; i < k; ++i) rank_sums[i] += ranks[i];
    }
    if (table.conditions_used == 0)
        throw DataError("rank_aggregate: no complete conditions to rank");
    table.average_rank.resize(k);
    for (std::size_t i = 0; i < k; ++i)
        table.average_rank[i] = rank_sums[i] / static_cast<double>(table.conditions_used);
    return table;
}

// Batch-size x learning-rate average-rank grid: within each (dataset, LR)
// condition, batch sizes are ranked by seed-averaged score; cells average over
// datasets, the last column over LRs.
struct BatchSizeRankGrid {
    std::vector<std::int64_t> batch_sizes;   // rows
    std::vector<double> learning_rates;      // columns
    std::vector<std::vector<double>> cells;  // [bs][lr]
    std::vector<double> row_avg;             // [bs]
};

inline BatchSizeRankGrid batch_size_rank_grid(const std::vector<AggregateRow>& aggs) {
    std::set<std::int64_t> bs_set;
    std::set<double> lr_set;
    std::set<std::string> ds_set;
    std::map<std::tuple<std::int64_t, double, std::string>, const AggregateRow*> cells;
    for (const AggregateRow& a : aggs) {
        bs_set.insert(a.batch_size);
        lr_set.insert(a.learning_rate);
        ds_set.insert(a.dataset);
        cells[{a.batch_size, a.learning_rate, a.dataset}] = &a;
    }
    BatchSizeRankGrid grid;
    grid.batch_sizes.assign(bs_set.begin(), bs_set.end());
    grid.learning_rates.assign(lr_set.begin(), lr_set.end());
    std::vector<std::string> datasets(ds_set.begin(), ds_set.end());
    std::vector<std::string> labels;
    for (std::int64_t bs : grid.batch_sizes) labels.push_back(std::to_string(bs));

    for (double lr : grid.learning_rates) {
        std::vector<std::vector<std::optional<double>>> scores(
            grid.batch_sizes.size(), std::vector<std::optional<double>>(datasets.size()));
        for (std::size_t b = 0; b < grid.batch_sizes.size(); ++b)
            for (std::size_t d = 0; d < datasets.size(); ++d) {
                auto it = cells.find({grid.batch_sizes[b], lr, datasets[d]});
                if (it != cells.end() && !it->second->missing()) {
                    const AggregateRow* a = it->second;
                    scores[b][d] = a->test_scores.empty() ? a->dev_score : a->avg_test;
                }
            }
        RankTable col = rank_aggregate(labels, scores);
        for (std::size_t b = 0; b < grid.batch_sizes.size(); ++b) {
            if (grid.cells.size() <= b) grid.cells.emplace_back();
            grid.cells[b].push_back(col.average_rank[b]);
        }
    }
    for (std::size_t b = 0; b < grid.batch_sizes.size(); ++b) {
        double s = 0;
        for (double v : grid.cells[b]) s += v;
        grid.row_avg.push_back(s / static_cast<double>(grid.cells[b].size()));
    }
    return grid;
}

// ---- CSV ----

inline std::vector<std::string> csv_test_columns(const std::vector<ResultRow>& rows) {
    std::set<std::string> names;
    for (const ResultRow& r : rows)
        for (const auto& [n, _] : r.test_scores) names.insert(n);
    return {names.begin(), names.end()};
}

inline std::string full_precision(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Fixed column order: dataset,batch_size,learning_rate,seed,dev_score,
// <test sets...>,avg,status. Lossless round-trip (17 significant digits).
inline void write_results_csv(const std::vector<ResultRow>& rows, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write results CSV: " + path);
    std::vector<std::string> tests = csv_test_columns(rows);
    os << "dataset,batch_size,learning_rate,seed,dev_score";
    for (const auto& t : tests) os << ",test_" << t;
    os << ",avg,status\n";
    for (const ResultRow& r : rows) {
        os << r.dataset << ',' << r.batch_size << ',' << full_precision(r.learning_rate) << ','
           << r.seed << ',' << full_precision(r.dev_score);
        for (const auto& t : tests) {
            auto it = r.test_scores.find(t);
            os << ',' << (it == r.test_scores.end() ? "nan" : full_precision(it->second));
        }
        os << ',' << full_precision(r.avg_test()) << ',' << r.status << '\n';
    }
}

inline std::vector<ResultRow> read_results_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open results CSV: " + path);
    std::string line;
    if (!std::getline(is, line)) throw DataError(path + ": empty CSV");
    std::vector<std::string> header = KvConfig::split_list(line);
    static const std::vector<std::string> head_fixed{"dataset", "batch_size", "learning_rate",
                                                     "seed", "dev_score"};
    if (header.size() < head_fixed.size() + 2 || header.back() != "status" ||
        header[header.size() - 2] != "avg")
        throw DataError(path + ": malformed results header");
    for (std::size_t i = 0; i < head_fixed.size(); ++i)
        if (header[i] != head_fixed[i])
            throw DataError(path + ": unexpected column '" + header[i] + "' (expected '" +
                            head_fixed[i] + "')");
    std::vector<std::string> tests;
    for (auto it = header.begin() + 5; it != header.end() - 2; ++it) {
        if (it->rfind("test_", 0) != 0)
            throw DataError(path + ": foreign column '" + *it + "'");
        tests.push_back(it->substr(5));
    }

    std::vector<ResultRow> rows;
    std::int64_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cols.push_back(cell);
        if (cols.size() != header.size())
            throw DataError(path + ": line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " columns, got " +
                            std::to_string(cols.size()));
        ResultRow r;
        r.dataset = cols[0];
        r.batch_size = KvConfig::parse_int("batch_size", cols[1]);
        r.learning_rate = KvConfig::parse_double("learning_rate", cols[2]);
        r.seed = static_cast<std::uint64_t>(KvConfig::parse_int("seed", cols[3]));
        r.dev_score = cols[4] == "nan" ? std::nan("") : KvConfig::parse_double("dev_score", cols[4]);
        for (std::size_t t = 0; t < tests.size(); ++t)
            if (cols[5 + t] != "nan")
                r.test_scores[tests[t]] = KvConfig::parse_double(tests[t], cols[5 + t]);
        r.status = cols.back();
        rows.push_back(std::move(r));
    }
    return rows;
}

// ---- text rendering ----

inline std::string render_batch_size_rank_grid(const BatchSizeRankGrid& grid) {
    std::ostringstream os;
    os << "BS";
    for (double lr : grid.learning_rates) os << '\t' << "LR=" << format_lr(lr);
    os << "\tAvg.\n";
    char buf[32];
    for (std::size_t b = 0; b < grid.batch_sizes.size(); ++b) {
        os << grid.batch_sizes[b];
        for (double v : grid.cells[b]) {
            std::snprintf(buf, sizeof buf, "%.2f", v);
            os << '\t' << buf;
        }
        std::snprintf(buf, sizeof buf, "%.2f", grid.row_avg[b]);
        os << '\t' << buf << '\n';
    }
    return os.str();
}

inline std::string render_best_config_table(const std::vector<AggregateRow>& aggs,
                                            const std::vector<std::string>& datasets) {
    std::ostringstream os;
    std::vector<std::string> tests;
    for (const AggregateRow& a : aggs)
        for (const auto& [n, _] : a.test_scores)
            if (std::find(tests.begin(), tests.end(), n) == tests.end()) tests.push_back(n);
    std::sort(tests.begin(), tests.end());
    os << "dataset\tbatch_size\tlearning_rate\tdev";
    for (const auto& t : tests) os << '\t' << t;
    os << "\tAvg.\n";
    char buf[32];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.2f", v);
        os << '\t' << buf;
    };
    for (const std::string& ds : datasets) {
        auto best = best_config_for(aggs, ds);
        if (!best) {
            os << ds << "\tmissing\n";
            continue;
        }
        os << ds << '\t' << best->batch_size << '\t' << format_lr(best->learning_rate);
        put(best->dev_score);
        for (const auto& t : tests) {
            auto it = best->test_scores.find(t);
            put(it == best->test_scores.end() ? std::nan("") : it->second);
        }
        put(best->avg_test);
        os << '\n';
    }
    return os.str();
}

}  // namespace simlab
