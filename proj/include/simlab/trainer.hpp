#pragma once

// AdamW with decoupled weight decay, the linear warmup/decay schedule, the
// fixed-example-budget training loop with scheduled dev evaluations, and
// best-checkpoint retention (dev ties broken toward the earliest step).

#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "simlab/common.hpp"
#include "simlab/encoder.hpp"
#include "simlab/loss.hpp"
#include "simlab/rng.hpp"
#include "simlab/sts.hpp"

namespace simlab {

struct TrainConfig {
    std::int64_t batch_size = 64;
    double peak_lr = 3e-4;
    std::int64_t total_examples = std::int64_t{1} << 16;
    std::int64_t n_evaluations = std::int64_t{1} << 4;
    double warmup_fraction = 0.10;
    std::uint64_t seed = 1;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const {
        if (batch_size <= 0 || total_examples <= 0 || n_evaluations <= 0)
            throw ConfigError("batch_size, total_examples, n_evaluations must be positive");
        if (total_examples % batch_size != 0)
            throw ConfigError("total_examples (" + std::to_string(total_examples) +
                              ") must be divisible by batch_size (" + std::to_string(batch_size) + ")");
        if ((total_examples / batch_size) % n_evaluations != 0)
            throw ConfigError("steps (" + std::to_string(total_examples / batch_size) +
                              ") must be divisible by n_evaluations (" +
                              std::to_string(n_evaluations) + ")");
        if (peak_lr <= 0.0) throw ConfigError("peak_lr must be positive");
        if (warmup_fraction <= 0.0 || warmup_fraction >= 1.0)
            throw ConfigError("warmup_fraction must be in (0,1)");
    }

    std::int64_t total_steps() const { return total_examples / batch_size; }
};

// Linear warmup to the peak over the first warmup fraction of steps, linear
// decay to zero afterwards. 1-based step index.
inline double lr_at_step(std::int64_t t, std::int64_t total_steps, double peak,
                         double warmup_fraction) {
    if (total_steps <= 0) throw ConfigError("lr_at_step: total_steps must be positive");
    std::int64_t warmup = std::llround(warmup_fraction * static_cast<double>(total_steps));
    if (warmup < 1) warmup = 1;
    if (t < 1 || t > total_steps) throw ContractError("lr_at_step: step out of range");
    if (t <= warmup) return peak * static_cast<double>(t) / static_cast<double>(warmup);
    return peak * static_cast<double>(total_steps - t) / static_cast<double>(total_steps - warmup);
}

inline std::int64_t eval_interval(std::int64_t total_examples, std::int64_t batch_size,
                                  std::int64_t n_evaluations) {
    if (total_examples % batch_size != 0 ||
        (total_examples / batch_size) % n_evaluations != 0)
        throw ConfigError("eval_interval: budget not divisible by batch_size * n_evaluations");
    return total_examples / batch_size / n_evaluations;
}

struct OptimizerState {
    std::map<std::string, std::vector<double>> m;  // first moments
    std::map<std::string, std::vector<double>> v;  // second moments
    std::int64_t t = 0;
};

// One AdamW step over named parameters. Decoupled decay: param -= lr*wd*param
// happens independently of the adaptive update.
inline void adamw_step(std::map<std::string, Tensor>& params, OptimizerState& state, double lr,
                       double beta1, double beta2, double eps, double weight_decay) {
    ++state.t;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (auto& [name, p] : params) {
        if (!p.requires_grad) continue;
        if (p.grad.size() != p.values.size())
            throw ContractError("adamw_step: missing gradient for " + name);
        auto& m = state.m[name];
        auto& v = state.v[name];
        if (m.empty()) m.assign(p.values.size(), 0.0);
        if (v.empty()) v.assign(p.values.size(), 0.0);
        for (std::size_t i = 0; i < p.values.size(); ++i) {
            double g = p.grad[i];
            if (!std::isfinite(g))
                throw ContractError("adamw_step: non-finite gradient in " + name);
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            p.values[i] -= lr * weight_decay * p.values[i];
            p.values[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

// Exactly total_examples indices: full shuffled epochs cycled until the budget
// is met, truncating the last epoch. Deterministic given the seed.
inline std::vector<std::int64_t> sample_training_stream(std::int64_t dataset_size,
                                                        std::int64_t total_examples,
                                                        std::uint64_t seed) {
    if (dataset_size <= 0) throw DataError("sample_training_stream: empty dataset");
    RngState rng(seed);
    std::vector<std::int64_t> stream;
    stream.reserve(static_cast<std::size_t>(total_examples));
    while (static_cast<std::int64_t>(stream.size()) < total_examples) {
        std::vector<std::int64_t> epoch(static_cast<std::size_t>(dataset_size));
        for (std::int64_t i = 0; i < dataset_size; ++i) epoch[static_cast<std::size_t>(i)] = i;
        for (std::int64_t i = dataset_size - 1; i > 0; --i) {
            std::int64_t j = static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(i + 1)));
            std::swap(epoch[static_cast<std::size_t>(i)], epoch[static_cast<std::size_t>(j)]);
        }
        std::int64_t want = std::min<std::int64_t>(dataset_size,
                                                   total_examples - static_cast<std::int64_t>(stream.size()));
        stream.insert(stream.end(), epoch.begin(), epoch.begin() + want);
    }
    return stream;
}

struct RunRecord {
    nlohmann::json config;
    std::vector<std::pair<std::int64_t, double>> dev_evaluations;  // (step, dev spearman x100)
    double best_dev_score = 0.0;
    std::int64_t best_dev_step = 0;
    std::map<std::string, double> test_scores;
    std::string status = "ok";  // or "failed"
    std::int64_t last_good_step = 0;
    double wall_seconds = 0.0;  // reported separately; not serialized (determinism)

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["config"] = config;
        j["dev_evaluations"] = nlohmann::json::array();
        for (const auto& [step, score] : dev_evaluations)
            j["dev_evaluations"].push_back({{"step", step}, {"dev_score", score}});
        j["best_dev_score"] = best_dev_score;
        j["best_dev_step"] = best_dev_step;
        j["test_scores"] = test_scores;
        j["status"] = status;
        j["last_good_step"] = last_good_step;
        return j;
    }

    static RunRecord from_json(const nlohmann::json& j) {
        RunRecord r;
        r.config = j.at("config");
        for (const auto& e : j.at("dev_evaluations"))
            r.dev_evaluations.emplace_back(e.at("step").get<std::int64_t>(),
                                           e.at("dev_score").get<double>());
        r.best_dev_score = j.at("best_dev_score");
        r.best_dev_step = j.at("best_dev_step");
        r.test_scores = j.at("test_scores").get<std::map<std::string, double>>();
        r.status = j.at("status");
        r.last_good_step = j.at("last_good_step");
        return r;
    }
};

struct TrainResult {
    RunRecord record;
    EncoderModel best_model;
};

// Runs exactly total_examples/batch_size steps, evaluating the dev set every
// eval_interval steps; retains a copy of the parameters at the best dev score.
// A non-finite loss aborts the run and marks the record failed.
inline TrainResult train(EncoderModel model, const std::vector<TrainExample>& dataset,
                         const LossConfig& loss_config, const TrainConfig& train_config,
                         const std::vector<StsPair>& dev_set, Pooling pooling = Pooling::Cls) {
    train_config.validate();
    loss_config.validate();
    if (dataset.empty()) throw DataError("train: empty dataset");
    auto t0 = std::chrono::steady_clock::now();

    std::int64_t steps = train_config.total_steps();
    std::int64_t interval = eval_interval(train_config.total_examples, train_config.batch_size,
                                          train_config.n_evaluations);
    std::vector<std::int64_t> stream = sample_training_stream(
        static_cast<std::int64_t>(dataset.size()), train_config.total_examples, train_config.seed);

    model.set_requires_grad(true);
    OptimizerState opt;
    RngState rng(train_config.seed ^ 0x5CE5CE5CE5CE5CEull);  // dropout stream

    TrainResult result;
    RunRecord& rec = result.record;
    std::map<std::string, Tensor> best_params;
    bool have_best = false;

    for (std::int64_t step = 1; step <= steps; ++step) {
        std::int64_t off = (step - 1) * train_config.batch_size;
        Tape tape;
        Tape::NodeId loss_node;
        if (loss_config.variant == LossVariant::Unsupervised) {
            std::vector<std::string> sentences;
            sentences.reserve(static_cast<std::size_t>(train_config.batch_size));
            for (std::int64_t i = 0; i < train_config.batch_size; ++i)
                sentences.push_back(dataset[static_cast<std::size_t>(stream[off + i])].anchor);
            auto [h1, h2] = build_unsupervised_batch(tape, model, sentences, rng, pooling);
            loss_node = unsupervised_loss(tape, h1, h2, loss_config.temperature);
        } else {
            std::vector<TrainExample> batch;
            batch.reserve(static_cast<std::size_t>(train_config.batch_size));
            for (std::int64_t i = 0; i < train_config.batch_size; ++i)
                batch.push_back(dataset[static_cast<std::size_t>(stream[off + i])]);
            SupervisedBatch sb = build_supervised_batch(tape, model, batch, rng, pooling);
            loss_node = supervised_loss(tape, sb.anchors, sb.positives, sb.negatives,
                                        loss_config.temperature);
        }
        double loss = tape.value(loss_node).values[0];
        if (!std::isfinite(loss)) {
            rec.status = "failed";
            rec.last_good_step = step - 1;
            break;
        }
        model.zero_grad();
        tape.backward(loss_node);
        double lr = lr_at_step(step, steps, train_config.peak_lr, train_config.warmup_fraction);
        adamw_step(model.params, opt, lr, train_config.beta1, train_config.beta2,
                   train_config.adam_eps, train_config.weight_decay);
        rec.last_good_step = step;

        if (step % interval == 0) {
            StsReport dev = evaluate_sts(model, pooling, dev_set, "dev");
            rec.dev_evaluations.emplace_back(step, dev.spearman_x100);
            if (!have_best || dev.spearman_x100 > rec.best_dev_score) {
                rec.best_dev_score = dev.spearman_x100;
                rec.best_dev_step = step;
                best_params = model.params;
                have_best = true;
            }
        }
    }

    result.best_model = model;
    if (have_best) result.best_model.params = std::move(best_params);
    result.best_model.set_requires_grad(false);
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

}  // namespace simlab
