// Command-line entry point. Thin adapters only: every subcommand parses
// flags/config and calls the library.
//
// Exit codes: 0 success, 1 usage error, 2 data/config error, 3 runtime
// failure. Errors go to stderr as one line with a stable machine-parsable
// prefix: "error[usage|config|data|runtime]: ...".

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "simlab/checkpoint.hpp"
#include "simlab/config.hpp"
#include "simlab/data.hpp"
#include "simlab/experiments.hpp"
#include "simlab/sts.hpp"
#include "simlab/synthetic.hpp"
#include "simlab/trainer.hpp"

namespace fs = std::filesystem;
using namespace simlab;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string default_out_dir() {
    const char* env = std::getenv("SIMLAB_OUT_DIR");
    return env ? env : "out";
}

void write_metadata(const fs::path& dir, const nlohmann::json& resolved_config,
                    double wall_seconds) {
    nlohmann::json meta;
    meta["config"] = resolved_config;
    meta["rng_algorithm"] = kRngAlgorithm;
    meta["code_version"] = kVersion;
    meta["wall_seconds"] = wall_seconds;
    std::ofstream os(dir / "metadata.json");
    os << meta.dump(2) << '\n';
}

std::vector<ResultRow> load_result_rows(const std::string& results_dir) {
    if (!fs::is_directory(results_dir))
        throw DataError("results directory not found: " + results_dir);
    std::vector<ResultRow> rows;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(results_dir))
        if (entry.path().extension() == ".json" && entry.path().filename() != "metadata.json")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        std::ifstream is(f);
        nlohmann::json j = nlohmann::json::parse(is);
        if (j.count("row")) rows.push_back(ResultRow::from_json(j.at("row")));
    }
    if (rows.empty()) throw DataError("no result rows found in " + results_dir);
    return rows;
}

int cmd_build_vocab(const std::string& corpus_file, const std::string& tokenizer,
                    std::int64_t max_vocab, const std::string& out_file) {
    EncoderConfig cfg;
    cfg.tokenizer = parse_tokenizer(tokenizer);
    cfg.max_vocab = max_vocab;
    std::ifstream is(corpus_file);
    if (!is) throw DataError("cannot open corpus: " + corpus_file);
    std::vector<std::string> sentences;
    std::string line;
    while (std::getline(is, line))
        if (!line.empty()) sentences.push_back(line);
    Vocabulary vocab = build_vocab(sentences, cfg);
    std::ofstream os(out_file);
    if (!os) throw DataError("cannot write vocabulary: " + out_file);
    for (std::int64_t id = 0; id < vocab.size(); ++id)
        os << vocab.id_to_token[static_cast<std::size_t>(id)] << '\t' << id << '\n';
    std::cout << "vocab\t" << vocab.size() << "\t" << out_file << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& out_dir) {
    KvConfig cfg = KvConfig::from_file(config_path);
    for (const std::string& kv : overrides) cfg.apply_override(kv);
    RunSpec spec = parse_run_spec(cfg);

    std::vector<TrainExample> dataset = load_train_file(spec.train_file, spec.loss.variant);
    std::vector<StsPair> dev = load_sts_tsv(spec.dev_file);
    RngState init_rng(spec.train.seed);
    EncoderModel model =
        init_model(spec.encoder, build_vocab(corpus_of(dataset), spec.encoder), init_rng);

    TrainResult result = train(std::move(model), dataset, spec.loss, spec.train, dev, spec.pooling);

    fs::create_directories(out_dir);
    {
        std::ofstream os(fs::path(out_dir) / "run_record.json");
        nlohmann::json j = result.record.to_json();
        j["config"] = run_spec_json(spec);
        os << j.dump(2) << '\n';
    }
    save_checkpoint(result.best_model, (fs::path(out_dir) / "best.ckpt").string());
    write_metadata(out_dir, run_spec_json(spec), result.record.wall_seconds);

    if (result.record.status != "ok") {
        std::cerr << "error[runtime]: training diverged (non-finite loss) at step "
                  << result.record.last_good_step + 1 << "; run marked failed\n";
        return 3;
    }
    std::cout << "best_dev\t" << result.record.best_dev_score << "\tstep\t"
              << result.record.best_dev_step << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& sts_file,
             const std::string& pooling, const std::string& name) {
    EncoderModel model = load_checkpoint(checkpoint);
    std::vector<StsPair> pairs = load_sts_tsv(sts_file);
    StsReport report = evaluate_sts(model, parse_pooling(pooling), pairs,
                                    name.empty() ? fs::path(sts_file).stem().string() : name);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", report.spearman_x100);
    std::cout << report.dataset << '\t' << buf << "\n";
    return 0;
}

int cmd_sweep(const std::string& spec_path, const std::vector<std::string>& overrides,
              const std::string& results_dir, int workers) {
    KvConfig cfg = KvConfig::from_file(spec_path);
    for (const std::string& kv : overrides) cfg.apply_override(kv);
    SweepSpec spec = parse_sweep_spec(cfg);

    std::vector<ResultRow> rows = run_sweep(spec, results_dir, workers, &std::cerr);
    write_results_csv(rows, (fs::path(results_dir) / "results.csv").string());

    std::int64_t failed = 0;
    for (const ResultRow& r : rows)
        if (r.status != "ok") ++failed;
    std::cout << "sweep\t" << rows.size() << "\trows\t" << failed << "\tfailed\n";
    return 0;
}

int cmd_analyze(const std::string& results_dir, const std::string& table,
                const std::string& csv_out) {
    std::vector<ResultRow> rows = load_result_rows(results_dir);
    std::vector<AggregateRow> aggs = average_over_seeds(rows);

    if (table == "batch-size-rank") {
        BatchSizeRankGrid grid = batch_size_rank_grid(aggs);
        std::cout << render_batch_size_rank_grid(grid);
        if (!csv_out.empty()) {
            std::ofstream os(csv_out);
            os << "batch_size";
            for (double lr : grid.learning_rates) os << ",lr_" << format_lr(lr);
            os << ",avg\n";
            for (std::size_t b = 0; b < grid.batch_sizes.size(); ++b) {
                os << grid.batch_sizes[b];
                for (double v : grid.cells[b]) os << ',' << full_precision(v);
                os << ',' << full_precision(grid.row_avg[b]) << '\n';
            }
        }
        return 0;
    }
    if (table == "best-config") {
        std::vector<std::string> datasets;
        for (const AggregateRow& a : aggs)
            if (std::find(datasets.begin(), datasets.end(), a.dataset) == datasets.end())
                datasets.push_back(a.dataset);
        std::sort(datasets.begin(), datasets.end());
        std::cout << render_best_config_table(aggs, datasets);
        if (!csv_out.empty()) {
            std::ofstream os(csv_out);
            os << "dataset,batch_size,learning_rate,dev,avg\n";
            for (const std::string& ds : datasets) {
                auto best = best_config_for(aggs, ds);
                if (!best) continue;
                os << ds << ',' << best->batch_size << ',' << format_lr(best->learning_rate) << ','
                   << full_precision(best->dev_score) << ',' << full_precision(best->avg_test)
                   << '\n';
            }
        }
        return 0;
    }
    throw ConfigError("unknown table '" + table + "' (batch-size-rank, best-config)");
}

int cmd_gen_data(const std::string& out_dir, const std::string& variant, std::int64_t n_train,
                 std::int64_t n_dev, std::int64_t n_test, std::uint64_t seed) {
    fs::create_directories(out_dir);
    fs::path dir(out_dir);
    LossVariant v = parse_variant(variant);
    // Disjoint seed streams for the three splits.
    if (v == LossVariant::Unsupervised)
        write_sentence_file(synthetic_sentences(n_train, seed), (dir / "train.txt").string());
    else
        write_triplet_file(synthetic_triplets(n_train, seed), (dir / "train.txt").string());
    write_sts_file(synthetic_sts_pairs(n_dev, seed + 1), (dir / "dev.tsv").string());
    write_sts_file(synthetic_sts_pairs(n_test, seed + 2), (dir / "test.tsv").string());
    std::cout << "gen-data\t" << out_dir << "\t" << n_train << "\t" << n_dev << "\t" << n_test
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Contrastive sentence-embedding lab"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    std::string corpus_file, tokenizer = "character", vocab_out = "vocab.txt";
    std::int64_t max_vocab = 8000;
    auto* build = app.add_subcommand("build-vocab", "Build a deterministic vocabulary file");
    build->add_option("--corpus", corpus_file, "Sentence-per-line corpus")->required();
    build->add_option("--tokenizer", tokenizer, "character|whitespace");
    build->add_option("--max-vocab", max_vocab, "Maximum content tokens");
    build->add_option("--out", vocab_out, "Output vocabulary path");

    std::string train_config, train_out = default_out_dir();
    std::vector<std::string> train_sets;
    auto* tr = app.add_subcommand("train", "Train one run from a config file");
    tr->add_option("--config", train_config, "Run config (key = value)")->required();
    tr->add_option("--set", train_sets, "Override key=value (repeatable)");
    tr->add_option("--out", train_out, "Output directory (default $SIMLAB_OUT_DIR or ./out)");

    std::string eval_ckpt, eval_sts, eval_pooling = "cls", eval_name;
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on an STS file");
    ev->add_option("--checkpoint", eval_ckpt, "Checkpoint path")->required();
    ev->add_option("--sts", eval_sts, "STS TSV file")->required();
    ev->add_option("--pooling", eval_pooling, "cls|mean");
    ev->add_option("--name", eval_name, "Dataset name for the report");

    std::string sweep_spec, sweep_results = "results";
    std::vector<std::string> sweep_sets;
    int sweep_workers = 1;
    auto* sw = app.add_subcommand("sweep", "Run a hyperparameter grid sweep");
    sw->add_option("--spec", sweep_spec, "Sweep spec file")->required();
    sw->add_option("--set", sweep_sets, "Override key=value (repeatable)");
    sw->add_option("--results", sweep_results, "Results store directory");
    sw->add_option("--workers", sweep_workers, "Parallel grid workers");

    std::string gen_out = "data", gen_variant = "unsupervised";
    std::int64_t gen_train = 4096, gen_dev = 256, gen_test = 256;
    std::uint64_t gen_seed = 1;
    auto* gd = app.add_subcommand("gen-data", "Generate a synthetic symbol-overlap dataset");
    gd->add_option("--out-dir", gen_out, "Output directory (train.txt, dev.tsv, test.tsv)");
    gd->add_option("--variant", gen_variant, "unsupervised|supervised");
    gd->add_option("--train", gen_train, "Training examples");
    gd->add_option("--dev", gen_dev, "Dev pairs");
    gd->add_option("--test", gen_test, "Test pairs");
    gd->add_option("--seed", gen_seed, "Generator seed");

    std::string an_results, an_table = "batch-size-rank", an_csv;
    auto* an = app.add_subcommand("analyze", "Derive tables from a results store");
    an->add_option("--results", an_results, "Results store directory")->required();
    an->add_option("--table", an_table, "batch-size-rank|best-config");
    an->add_option("--csv", an_csv, "Also write the table as CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
        std::cerr << "error[usage]: " << e.what() << "\n";
        return 1;
    }

    try {
        if (build->parsed()) return cmd_build_vocab(corpus_file, tokenizer, max_vocab, vocab_out);
        if (tr->parsed()) return cmd_train(train_config, train_sets, train_out);
        if (ev->parsed()) return cmd_eval(eval_ckpt, eval_sts, eval_pooling, eval_name);
        if (sw->parsed()) return cmd_sweep(sweep_spec, sweep_sets, sweep_results, sweep_workers);
        if (gd->parsed())
            return cmd_gen_data(gen_out, gen_variant, gen_train, gen_dev, gen_test, gen_seed);
        if (an->parsed()) return cmd_analyze(an_results, an_table, an_csv);
    } catch (const ConfigError& e) {
        std::cerr << "error[config]: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error[data]: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error[runtime]: " << e.what() << "\n";
        return 3;
    }
    return 1;
}
