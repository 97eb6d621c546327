#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "get/dataset.hpp"
#include "get/model.hpp"
#include "get/optim.hpp"

namespace get {

struct TrainSchedule {
    std::int64_t steps = 3000;
    int batch_size = 64;
    double lr = 3e-4;
    bool cosine_decay = true;
    double min_lr_fraction = 0.05;
    std::int64_t log_every = 50;
    std::int64_t val_every = 250;
    double val_fraction = 0.1;
    std::uint64_t seed = 1;

    void check() const {
        if (steps < 1) throw ConfigError("steps must be positive");
        if (batch_size < 1) throw ConfigError("batch_size must be positive");
        if (!(lr > 0.0)) throw ConfigError("lr must be positive");
        if (min_lr_fraction < 0.0 || min_lr_fraction > 1.0)
            throw ConfigError("min_lr_fraction must be in [0, 1]");
        if (log_every < 1 || val_every < 1) throw ConfigError("log/val intervals must be positive");
        if (val_fraction < 0.0 || val_fraction >= 1.0)
            throw ConfigError("val_fraction must be in [0, 1)");
    }
};

inline nlohmann::ordered_json to_json(const TrainSchedule& s) {
    nlohmann::ordered_json j;
    j["steps"] = s.steps;
    j["batch_size"] = s.batch_size;
    j["lr"] = s.lr;
    j["cosine_decay"] = s.cosine_decay;
    j["min_lr_fraction"] = s.min_lr_fraction;
    j["log_every"] = s.log_every;
    j["val_every"] = s.val_every;
    j["val_fraction"] = s.val_fraction;
    j["seed"] = s.seed;
    return j;
}

inline TrainSchedule schedule_from_json(const nlohmann::json& j) {
    TrainSchedule s;
    try {
        for (const auto& [key, val] : j.items()) {
            if (key == "steps") s.steps = val.get<std::int64_t>();
            else if (key == "batch_size") s.batch_size = val.get<int>();
            else if (key == "lr") s.lr = val.get<double>();
            else if (key == "cosine_decay") s.cosine_decay = val.get<bool>();
            else if (key == "min_lr_fraction") s.min_lr_fraction = val.get<double>();
            else if (key == "log_every") s.log_every = val.get<std::int64_t>();
            else if (key == "val_every") s.val_every = val.get<std::int64_t>();
            else if (key == "val_fraction") s.val_fraction = val.get<double>();
            else if (key == "seed") s.seed = val.get<std::uint64_t>();
            else throw ConfigError("unknown schedule key: " + key);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed schedule: ") + e.what());
    }
    s.check();
    return s;
}

struct TrainResult {
    GetModel model;  // parameters after the last step
    double final_train_loss = std::numeric_limits<double>::quiet_NaN();
    double best_val_loss = std::numeric_limits<double>::quiet_NaN();
    std::int64_t best_val_step = -1;
    std::filesystem::path final_checkpoint;
    std::filesystem::path best_checkpoint;
    std::filesystem::path log_path;
};

// The seven ablation rows: positional-encoding variant plus the spatial,
// parent/child, and self-model toggles; everything else stays at the shared
// defaults.
inline std::vector<std::pair<std::string, GetConfig>> make_ablation_grid(
    const GetConfig& base = {}) {
    auto variant = [&](PeVariant pe, bool spatial, bool parent_child, bool self_model) {
        GetConfig c = base;
        c.pe_variant = pe;
        c.use_spatial = spatial;
        c.use_parent_child = parent_child;
        c.use_self_model = self_model;
        c.use_policy_loss = true;
        return c;
    };
    return {
        {"ET", variant(PeVariant::NONE, false, false, false)},
        {"ET+DFS", variant(PeVariant::DFS, false, false, false)},
        {"ET+SL", variant(PeVariant::NONE, false, false, true)},
        {"ET+PE+SE", variant(PeVariant::GRAPH, true, true, false)},
        {"ET+PE+SL", variant(PeVariant::GRAPH, false, true, true)},
        {"ET+SE+SL", variant(PeVariant::GRAPH, true, false, true)},
        {"GET", variant(PeVariant::GRAPH, true, true, true)},
    };
}

namespace detail {

inline double cosine_lr(const TrainSchedule& s, std::int64_t step) {
    if (!s.cosine_decay) return s.lr;
    const double lo = s.lr * s.min_lr_fraction;
    const double t = static_cast<double>(step) / static_cast<double>(s.steps);
    return lo + 0.5 * (1.0 + std::cos(std::acos(-1.0) * t)) * (s.lr - lo);
}

}  // namespace detail

// Behavior-cloning loop: uniform-over-records batches, Adam with cosine
// decay, periodic validation on a held-out record split, JSONL logging,
// final and best-validation checkpoints. Deterministic given the schedule
// seed (the log's wall-time field is the one intentional exception).
inline TrainResult train(const DemoDataset& dataset, const GetConfig& config,
                         const TrainSchedule& schedule, const std::filesystem::path& out_dir) {
    config.check();
    schedule.check();
    if (dataset.records.empty()) throw ConfigError("training dataset is empty");
    if (config.history != dataset.history)
        throw ConfigError("model history " + std::to_string(config.history) +
                          " does not match dataset history " + std::to_string(dataset.history));
    if (config.pe_variant == PeVariant::GRAPH) {
        for (std::size_t e = 0; e < dataset.maps.size(); ++e)
            if (dataset.maps[e]->max_spd() > config.max_distance)
                throw ConfigError("embodiment " + dataset.embodiments[e].name + " has diameter " +
                                  std::to_string(dataset.maps[e]->max_spd()) +
                                  " beyond max_distance " + std::to_string(config.max_distance));
    }
    std::filesystem::create_directories(out_dir);

    // Held-out validation records: seeded shuffle, first slice is validation.
    const std::int64_t n = dataset.record_count();
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    SplitRng root(schedule.seed);
    {
        SplitRng shuffle_stream = root.split("val-split");
        shuffle_stream.shuffle(order);
    }
    const std::int64_t n_val =
        std::min<std::int64_t>(n - 1, static_cast<std::int64_t>(std::llround(
                                          schedule.val_fraction * static_cast<double>(n))));
    const std::vector<std::int64_t> val_idx(order.begin(), order.begin() + n_val);
    const std::vector<std::int64_t> train_idx(order.begin() + n_val, order.end());

    Adam adam;
    adam.hyper().lr = schedule.lr;
    SplitRng batch_stream = root.split("batches");

    std::ofstream log(out_dir / "train_log.jsonl", std::ios::trunc);
    if (!log) throw IoError("cannot open training log in " + out_dir.string());

    TrainResult result{GetModel(config, root.split("init").next_u64())};

    auto validate = [&]() {
        if (val_idx.empty()) return std::numeric_limits<double>::quiet_NaN();
        double acc = 0.0;
        std::int64_t count = 0;
        for (std::size_t lo = 0; lo < val_idx.size();
             lo += static_cast<std::size_t>(schedule.batch_size)) {
            const std::size_t hi =
                std::min(val_idx.size(), lo + static_cast<std::size_t>(schedule.batch_size));
            std::vector<Sample> samples;
            samples.reserve(hi - lo);
            for (std::size_t i = lo; i < hi; ++i)
                samples.push_back(dataset.make_sample(static_cast<std::size_t>(val_idx[i])));
            const TokenBatch batch = collate(samples);
            GetModel::Forward f = result.model.forward(batch);
            result.model.add_loss(f, batch);
            acc += f.tape.value(f.loss).data[0] * static_cast<double>(hi - lo);
            count += static_cast<std::int64_t>(hi - lo);
        }
        return acc / static_cast<double>(count);
    };

    result.log_path = out_dir / "train_log.jsonl";
    result.best_checkpoint = out_dir / "best.ckpt";
    result.final_checkpoint = out_dir / "final.ckpt";
    const auto t0 = std::chrono::steady_clock::now();

    std::vector<std::int64_t> batch_indices(static_cast<std::size_t>(schedule.batch_size));
    for (std::int64_t step = 0; step < schedule.steps; ++step) {
        adam.hyper().lr = detail::cosine_lr(schedule, step);
        for (auto& bi : batch_indices)
            bi = train_idx[static_cast<std::size_t>(
                batch_stream.below(static_cast<std::uint64_t>(train_idx.size())))];

        std::vector<Sample> samples;
        samples.reserve(batch_indices.size());
        for (std::int64_t ri : batch_indices)
            samples.push_back(dataset.make_sample(static_cast<std::size_t>(ri)));
        const TokenBatch batch = collate(samples);
        GetModel::Forward f = result.model.forward(batch);
        result.model.add_loss(f, batch);
        const double loss = f.tape.value(f.loss).data[0];
        if (!std::isfinite(loss))
            throw NumericalError("non-finite training loss at step " + std::to_string(step));
        f.tape.backward(f.loss);
        adam.step(result.model.params(), result.model.collect_grads(f));
        result.final_train_loss = loss;

        const bool last = step + 1 == schedule.steps;
        if ((step + 1) % schedule.val_every == 0 || last) {
            const double val = validate();
            if (!val_idx.empty() &&
                (result.best_val_step < 0 || val < result.best_val_loss)) {
                result.best_val_loss = val;
                result.best_val_step = step + 1;
                result.model.save(result.best_checkpoint);
            }
            nlohmann::ordered_json row;
            row["step"] = step + 1;
            row["loss"] = loss;
            row["action_loss"] = f.action_loss >= 0 ? f.tape.value(f.action_loss).data[0] : 0.0;
            row["fk_loss"] = f.fk_loss >= 0 ? f.tape.value(f.fk_loss).data[0] : 0.0;
            row["val_loss"] = val;
            row["lr"] = adam.hyper().lr;
            row["wall_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - t0)
                                 .count();
            log << row.dump() << '\n';
            log.flush();
        } else if ((step + 1) % schedule.log_every == 0) {
            nlohmann::ordered_json row;
            row["step"] = step + 1;
            row["loss"] = loss;
            row["action_loss"] = f.action_loss >= 0 ? f.tape.value(f.action_loss).data[0] : 0.0;
            row["fk_loss"] = f.fk_loss >= 0 ? f.tape.value(f.fk_loss).data[0] : 0.0;
            row["lr"] = adam.hyper().lr;
            row["wall_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - t0)
                                 .count();
            log << row.dump() << '\n';
        }
    }
    result.model.save(result.final_checkpoint);
    if (val_idx.empty()) result.model.save(result.best_checkpoint);
    return result;
}

}  // namespace get
