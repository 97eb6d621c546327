#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "get/dataset.hpp"
#include "get/model.hpp"
#include "get/reports.hpp"
#include "get/splits.hpp"
#include "get/task.hpp"
#include "get/tokenizer.hpp"
#include "get/trainer.hpp"

namespace get {

// Adapts a trained model to the Policy interface so it can run through the
// exact same episode harness as the expert.
class ModelPolicy : public Policy {
public:
    ModelPolicy(const GetModel& model, const EmbodimentGraph& graph, bool reversed_dfs = false)
        : model_(&model),
          maps_(std::make_shared<DistanceMaps>(compute_distance_maps(graph))),
          dfs_(dfs_linearize(graph)),
          reversed_(reversed_dfs) {}

    std::vector<double> act(const TrackingEnv& env,
                            const std::vector<ObservationFrame>& history) override {
        Sample s;
        s.tokens = build_tokens(env.graph(), env.task(), history, model_->config().history);
        s.maps = maps_;
        s.dfs_positions = dfs_;
        const TokenBatch batch = collate({s});
        const GetModel::Forward f = model_->forward(batch, reversed_);
        return GetModel::sample_actions(f, batch, 0);
    }

private:
    const GetModel* model_;
    std::shared_ptr<const DistanceMaps> maps_;
    std::vector<int> dfs_;
    bool reversed_;
};

// Runs `episodes` closed-loop episodes of one embodiment, batching all of
// them into a single forward pass per control step. Every network op acts
// row-independently across batch entries, so the trajectories are bitwise
// identical to running the episodes one at a time; only the wall time
// changes. Episode `ep` draws its env stream from episodes_root.split(ep),
// the same labeling rollout_expert uses, which keeps model and expert
// evaluations paired on identical episodes.
inline std::vector<EpisodeResult> rollout_model(const GetModel& model,
                                                const EmbodimentGraph& graph, const TaskSpec& task,
                                                SplitRng episodes_root, int episodes,
                                                bool reversed_dfs = false) {
    if (episodes < 1) throw ConfigError("rollout_model needs at least one episode");
    auto maps = std::make_shared<const DistanceMaps>(compute_distance_maps(graph));
    const std::vector<int> dfs = dfs_linearize(graph);
    const int H = model.config().history;

    std::vector<TrackingEnv> envs;
    envs.reserve(static_cast<std::size_t>(episodes));
    for (int ep = 0; ep < episodes; ++ep)
        envs.emplace_back(graph, task, episodes_root.split(static_cast<std::uint64_t>(ep)));

    const std::size_t B = envs.size();
    std::vector<std::deque<ObservationFrame>> frames(B);
    std::vector<EpisodeResult> out(B);
    std::vector<double> acc(B, 0.0);
    std::vector<int> counted(B, 0);
    const std::vector<double> zero_action(graph.joints.size(), 0.0);

    for (int t = 0; t < task.episode_length; ++t) {
        std::vector<Sample> samples(B);
        for (std::size_t b = 0; b < B; ++b) {
            frames[b].push_front(envs[b].observe());
            while (frames[b].size() > static_cast<std::size_t>(task.history) + 1)
                frames[b].pop_back();
            samples[b].tokens = build_tokens(
                graph, task, std::vector<ObservationFrame>(frames[b].begin(), frames[b].end()), H);
            samples[b].maps = maps;
            samples[b].dfs_positions = dfs;
        }
        const TokenBatch batch = collate(samples);
        const GetModel::Forward f = model.forward(batch, reversed_dfs);
        for (std::size_t b = 0; b < B; ++b) {
            if (out[b].failed) {
                // Keep the row stepping so batch shapes stay constant; its
                // metrics are already frozen.
                envs[b].step(zero_action);
                continue;
            }
            const std::vector<double> action =
                GetModel::sample_actions(f, batch, static_cast<int>(b));
            bool finite = true;
            for (double a : action) finite = finite && std::isfinite(a);
            if (!finite) {
                out[b].failed = true;
                envs[b].step(zero_action);
                continue;
            }
            const double err = envs[b].tracking_error();
            if (t >= task.burn_in) {
                acc[b] += err;
                counted[b] += 1;
            }
            if (err > task.target_radius) out[b].drop_steps += 1;
            envs[b].step(action);
        }
    }
    for (std::size_t b = 0; b < B; ++b)
        out[b].mean_error = (!out[b].failed && counted[b] > 0)
                                ? acc[b] / static_cast<double>(counted[b])
                                : std::numeric_limits<double>::quiet_NaN();
    return out;
}

inline std::vector<EpisodeResult> rollout_expert(const EmbodimentGraph& graph,
                                                 const TaskSpec& task, SplitRng episodes_root,
                                                 int episodes, const DlsConfig& expert = {}) {
    if (episodes < 1) throw ConfigError("rollout_expert needs at least one episode");
    ExpertPolicy policy(expert);
    std::vector<EpisodeResult> out;
    out.reserve(static_cast<std::size_t>(episodes));
    for (int ep = 0; ep < episodes; ++ep) {
        TrackingEnv env(graph, task, episodes_root.split(static_cast<std::uint64_t>(ep)));
        out.push_back(run_episode(env, policy));
    }
    return out;
}

struct EmbodimentEval {
    std::string name;
    double mean_error = std::numeric_limits<double>::quiet_NaN();
    double mean_drop_steps = 0.0;
    bool failed = false;
};

struct CategoryEval {
    double metric = std::numeric_limits<double>::quiet_NaN();  // mean over embodiments
    double mean_drop_steps = std::numeric_limits<double>::quiet_NaN();
    bool complete = false;
    std::vector<EmbodimentEval> per_embodiment;
};

// Env streams are labeled (eval_seed, category, run seed, embodiment name,
// episode), so any policy evaluated under the same labels sees identical
// episodes.
inline SplitRng eval_stream(std::uint64_t eval_seed, const std::string& category,
                            std::uint64_t run_seed, const std::string& embodiment) {
    return SplitRng(eval_seed).split(category).split(run_seed).split(embodiment);
}

namespace detail {

inline CategoryEval aggregate_category(std::vector<EmbodimentEval> per_embodiment) {
    CategoryEval out;
    out.per_embodiment = std::move(per_embodiment);
    double err = 0.0, drops = 0.0;
    bool all_ok = !out.per_embodiment.empty();
    for (const EmbodimentEval& e : out.per_embodiment) {
        if (e.failed || !std::isfinite(e.mean_error)) {
            all_ok = false;
            continue;
        }
        err += e.mean_error;
        drops += e.mean_drop_steps;
    }
    out.complete = all_ok;
    if (all_ok) {
        const double n = static_cast<double>(out.per_embodiment.size());
        out.metric = err / n;
        out.mean_drop_steps = drops / n;
    }
    return out;
}

inline EmbodimentEval summarize_episodes(const std::string& name,
                                         const std::vector<EpisodeResult>& eps) {
    EmbodimentEval e;
    e.name = name;
    double err = 0.0;
    double drops = 0.0;
    for (const EpisodeResult& r : eps) {
        e.failed = e.failed || r.failed || !std::isfinite(r.mean_error);
        err += r.mean_error;
        drops += r.drop_steps;
    }
    if (!e.failed && !eps.empty()) {
        e.mean_error = err / static_cast<double>(eps.size());
        e.mean_drop_steps = drops / static_cast<double>(eps.size());
    }
    return e;
}

}  // namespace detail

inline CategoryEval eval_model_on_category(const GetModel& model,
                                           const std::vector<EmbodimentGraph>& graphs,
                                           const TaskSpec& task, std::uint64_t eval_seed,
                                           const std::string& category, std::uint64_t run_seed,
                                           int episodes, bool reversed_dfs = false) {
    if (graphs.empty()) throw ConfigError("category " + category + " has no embodiments");
    std::vector<EmbodimentEval> evals;
    evals.reserve(graphs.size());
    for (const EmbodimentGraph& g : graphs)
        evals.push_back(detail::summarize_episodes(
            g.name, rollout_model(model, g, task, eval_stream(eval_seed, category, run_seed, g.name),
                                  episodes, reversed_dfs)));
    return detail::aggregate_category(std::move(evals));
}

inline CategoryEval eval_expert_on_category(const std::vector<EmbodimentGraph>& graphs,
                                            const TaskSpec& task, std::uint64_t eval_seed,
                                            const std::string& category, std::uint64_t run_seed,
                                            int episodes, const DlsConfig& expert = {}) {
    if (graphs.empty()) throw ConfigError("category " + category + " has no embodiments");
    std::vector<EmbodimentEval> evals;
    evals.reserve(graphs.size());
    for (const EmbodimentGraph& g : graphs)
        evals.push_back(detail::summarize_episodes(
            g.name, rollout_expert(g, task, eval_stream(eval_seed, category, run_seed, g.name),
                                   episodes, expert)));
    return detail::aggregate_category(std::move(evals));
}

// Runs a fixed set of independent jobs on up to `workers` threads. Each job
// owns its result slot, so scheduling order cannot leak into the output; a
// throwing job is captured and rethrown after the pool drains.
inline void run_parallel(std::size_t n_jobs, int workers,
                         const std::function<void(std::size_t)>& job) {
    if (n_jobs == 0) return;
    if (workers < 1) {
        const unsigned hc = std::thread::hardware_concurrency();
        workers = hc > 0 ? static_cast<int>(hc) : 1;
    }
    workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(workers), n_jobs));
    if (workers == 1) {
        for (std::size_t i = 0; i < n_jobs; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < n_jobs; i = next.fetch_add(1)) {
            try {
                job(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

inline const std::vector<std::string>& category_names() {
    static const std::vector<std::string> names = {"train", "new_graph", "new_geo",
                                                   "new_graph_geo"};
    return names;
}

inline const std::vector<EmbodimentGraph>& category_graphs(const SplitResult& splits,
                                                           const std::string& category) {
    if (category == "train") return splits.train;
    if (category == "new_graph") return splits.new_graph;
    if (category == "new_geo") return splits.new_geo;
    if (category == "new_graph_geo") return splits.new_graph_geo;
    throw ConfigError("unknown category: " + category);
}

struct AblationSpec {
    GetConfig base;
    TrainSchedule schedule;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    int eval_episodes = 10;
    std::uint64_t eval_seed = 900;
    int workers = 0;                // 0 = hardware concurrency
    std::vector<std::string> rows;  // subset of grid names; empty = all seven
};

struct MatrixCell {
    std::string config;
    int row = 0;  // index in the canonical ablation grid
    std::string category;
    std::uint64_t seed = 0;
    double metric = std::numeric_limits<double>::quiet_NaN();
    double mean_drop_steps = std::numeric_limits<double>::quiet_NaN();
    bool ok = false;
    std::string note;
};

struct MatrixRun {
    std::string config;
    int row = 0;
    std::uint64_t seed = 0;
    std::filesystem::path run_dir;
    bool trained = false;
    std::string error;
    double final_train_loss = std::numeric_limits<double>::quiet_NaN();
};

struct MatrixResult {
    std::vector<std::string> rows;  // config names, grid order
    std::vector<std::uint64_t> seeds;
    std::vector<MatrixCell> cells;   // row-major over (row, seed, category)
    std::vector<MatrixCell> expert;  // (category, seed) baselines
    std::vector<MatrixRun> runs;
    std::filesystem::path csv_path;
    std::filesystem::path json_path;

    // Mean over seeds with finite metrics; NaN when none are finite.
    double mean_metric(const std::string& config, const std::string& category) const {
        double acc = 0.0;
        int n = 0;
        for (const MatrixCell& c : cells)
            if (c.config == config && c.category == category && std::isfinite(c.metric)) {
                acc += c.metric;
                n += 1;
            }
        return n > 0 ? acc / n : std::numeric_limits<double>::quiet_NaN();
    }

    double expert_mean(const std::string& category) const {
        double acc = 0.0;
        int n = 0;
        for (const MatrixCell& c : expert)
            if (c.category == category && std::isfinite(c.metric)) {
                acc += c.metric;
                n += 1;
            }
        return n > 0 ? acc / n : std::numeric_limits<double>::quiet_NaN();
    }
};

inline std::string run_dir_name(const std::string& config, std::uint64_t seed) {
    return config + "_seed" + std::to_string(seed);
}

namespace detail {

inline double sample_std(const std::vector<double>& xs) {
    std::vector<double> v;
    for (double x : xs)
        if (std::isfinite(x)) v.push_back(x);
    if (v.size() < 2) return 0.0;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline nlohmann::ordered_json category_eval_to_json(const CategoryEval& ev) {
    nlohmann::ordered_json j;
    j["metric"] = ev.metric;
    j["mean_drop_steps"] = ev.mean_drop_steps;
    j["complete"] = ev.complete;
    j["per_embodiment"] = nlohmann::ordered_json::array();
    for (const EmbodimentEval& e : ev.per_embodiment)
        j["per_embodiment"].push_back({{"name", e.name},
                                       {"mean_error", e.mean_error},
                                       {"mean_drop_steps", e.mean_drop_steps},
                                       {"failed", e.failed}});
    return j;
}

}  // namespace detail

// Trains every requested ablation row for every seed on the shared demo
// dataset, then scores each trained policy on all four embodiment
// categories. Failed runs are recorded and their cells marked incomplete,
// never aborting the rest of the matrix. Emits results.csv, results.json,
// and one bar chart per category into out_dir.
inline MatrixResult run_ablation_matrix(const DemoDataset& train_ds, const SplitResult& splits,
                                        const AblationSpec& spec,
                                        const std::filesystem::path& out_dir) {
    const auto grid = make_ablation_grid(spec.base);
    std::vector<std::size_t> selected;
    if (spec.rows.empty()) {
        for (std::size_t r = 0; r < grid.size(); ++r) selected.push_back(r);
    } else {
        for (const std::string& name : spec.rows) {
            bool found = false;
            for (std::size_t r = 0; r < grid.size(); ++r)
                if (grid[r].first == name) {
                    selected.push_back(r);
                    found = true;
                    break;
                }
            if (!found) throw ConfigError("unknown ablation row: " + name);
        }
    }
    if (spec.seeds.empty()) throw ConfigError("ablation needs at least one seed");
    if (spec.eval_episodes < 1) throw ConfigError("eval_episodes must be positive");
    std::filesystem::create_directories(out_dir / "runs");

    MatrixResult result;
    for (std::size_t r : selected) result.rows.push_back(grid[r].first);
    result.seeds = spec.seeds;

    const std::size_t n_seeds = spec.seeds.size();
    const std::size_t n_runs = selected.size() * n_seeds;
    result.runs.resize(n_runs);
    std::vector<std::vector<CategoryEval>> evals(n_runs);

    run_parallel(n_runs, spec.workers, [&](std::size_t i) {
        const std::size_t ri = i / n_seeds;
        const std::size_t si = i % n_seeds;
        const std::size_t row = selected[ri];
        MatrixRun& run = result.runs[i];
        run.config = grid[row].first;
        run.row = static_cast<int>(row);
        run.seed = spec.seeds[si];
        run.run_dir = out_dir / "runs" / run_dir_name(run.config, run.seed);
        try {
            TrainSchedule sched = spec.schedule;
            sched.seed = run.seed;
            const TrainResult tr = train(train_ds, grid[row].second, sched, run.run_dir);
            run.trained = true;
            run.final_train_loss = tr.final_train_loss;
            std::vector<CategoryEval> ce;
            nlohmann::ordered_json ej;
            for (const std::string& cat : category_names()) {
                ce.push_back(eval_model_on_category(tr.model, category_graphs(splits, cat),
                                                    train_ds.task, spec.eval_seed, cat, run.seed,
                                                    spec.eval_episodes));
                ej[cat] = detail::category_eval_to_json(ce.back());
            }
            evals[i] = std::move(ce);
            std::ofstream os(run.run_dir / "eval.json", std::ios::trunc);
            if (!os) throw IoError("cannot write eval.json in " + run.run_dir.string());
            os << ej.dump(2) << '\n';
        } catch (const std::exception& e) {
            run.error = e.what();
        }
    });

    // The analytic expert scored on the very same episode streams.
    std::vector<std::vector<CategoryEval>> expert_evals(n_seeds);
    for (std::size_t si = 0; si < n_seeds; ++si)
        for (const std::string& cat : category_names())
            expert_evals[si].push_back(
                eval_expert_on_category(category_graphs(splits, cat), train_ds.task, spec.eval_seed,
                                        cat, spec.seeds[si], spec.eval_episodes, train_ds.expert));

    for (std::size_t ri = 0; ri < selected.size(); ++ri)
        for (std::size_t si = 0; si < n_seeds; ++si) {
            const std::size_t i = ri * n_seeds + si;
            for (std::size_t ci = 0; ci < category_names().size(); ++ci) {
                MatrixCell cell;
                cell.config = grid[selected[ri]].first;
                cell.row = static_cast<int>(selected[ri]);
                cell.category = category_names()[ci];
                cell.seed = spec.seeds[si];
                if (result.runs[i].trained && ci < evals[i].size()) {
                    const CategoryEval& ev = evals[i][ci];
                    cell.metric = ev.metric;
                    cell.mean_drop_steps = ev.mean_drop_steps;
                    cell.ok = ev.complete;
                    if (!ev.complete) cell.note = "rollout failure";
                } else {
                    cell.note = result.runs[i].error.empty() ? "not evaluated"
                                                             : result.runs[i].error;
                }
                result.cells.push_back(std::move(cell));
            }
        }
    for (const std::string& cat : category_names())
        for (std::size_t si = 0; si < n_seeds; ++si) {
            const std::size_t ci =
                static_cast<std::size_t>(std::find(category_names().begin(),
                                                   category_names().end(), cat) -
                                         category_names().begin());
            const CategoryEval& ev = expert_evals[si][ci];
            MatrixCell cell;
            cell.config = "expert";
            cell.row = -1;
            cell.category = cat;
            cell.seed = spec.seeds[si];
            cell.metric = ev.metric;
            cell.mean_drop_steps = ev.mean_drop_steps;
            cell.ok = ev.complete;
            result.expert.push_back(std::move(cell));
        }

    // results.csv: one line per trained cell.
    result.csv_path = out_dir / "results.csv";
    {
        std::ofstream csv(result.csv_path, std::ios::trunc);
        if (!csv) throw IoError("cannot write " + result.csv_path.string());
        csv << "config,row,category,seed,metric\n";
        for (const MatrixCell& c : result.cells)
            csv << c.config << ',' << c.row << ',' << c.category << ',' << c.seed << ','
                << fmt_double(c.metric) << '\n';
        if (!csv) throw IoError("short write: " + result.csv_path.string());
    }

    // results.json: per-cell detail plus seed aggregates, the expert
    // baseline, and the headline ordering flags.
    result.json_path = out_dir / "results.json";
    {
        nlohmann::ordered_json j;
        j["rows"] = result.rows;
        j["seeds"] = result.seeds;
        j["categories"] = category_names();
        j["eval_episodes"] = spec.eval_episodes;
        j["eval_seed"] = spec.eval_seed;
        nlohmann::ordered_json cells;
        for (const std::string& row : result.rows) {
            nlohmann::ordered_json per_cat;
            for (const std::string& cat : category_names()) {
                std::vector<double> xs;
                nlohmann::ordered_json per_seed;
                bool complete = true;
                for (const MatrixCell& c : result.cells)
                    if (c.config == row && c.category == cat) {
                        per_seed[std::to_string(c.seed)] = c.metric;
                        xs.push_back(c.metric);
                        complete = complete && c.ok;
                    }
                nlohmann::ordered_json entry;
                entry["per_seed"] = per_seed;
                entry["mean"] = result.mean_metric(row, cat);
                entry["std"] = detail::sample_std(xs);
                entry["complete"] = complete;
                per_cat[cat] = entry;
            }
            cells[row] = per_cat;
        }
        j["cells"] = cells;
        nlohmann::ordered_json ex;
        for (const std::string& cat : category_names()) {
            std::vector<double> xs;
            nlohmann::ordered_json per_seed;
            for (const MatrixCell& c : result.expert)
                if (c.category == cat) {
                    per_seed[std::to_string(c.seed)] = c.metric;
                    xs.push_back(c.metric);
                }
            nlohmann::ordered_json entry;
            entry["per_seed"] = per_seed;
            entry["mean"] = result.expert_mean(cat);
            entry["std"] = detail::sample_std(xs);
            ex[cat] = entry;
        }
        j["expert"] = ex;
        nlohmann::ordered_json ratios;
        for (const std::string& row : result.rows) {
            nlohmann::ordered_json per_cat;
            for (const std::string& cat : category_names())
                per_cat[cat] = result.mean_metric(row, cat) / result.expert_mean(cat);
            ratios[row] = per_cat;
        }
        j["ratio_to_expert"] = ratios;

        auto have = [&](const std::string& row) {
            return std::find(result.rows.begin(), result.rows.end(), row) != result.rows.end();
        };
        nlohmann::ordered_json flags;
        if (have("GET") && have("ET") && have("ET+DFS")) {
            for (const std::string& cat : {std::string("new_graph"), std::string("new_graph_geo")})
                flags[cat + "_get_best"] = result.mean_metric("GET", cat) <
                                               result.mean_metric("ET", cat) &&
                                           result.mean_metric("GET", cat) <
                                               result.mean_metric("ET+DFS", cat);
            flags["new_geo_dfs_beats_et"] =
                result.mean_metric("ET+DFS", "new_geo") < result.mean_metric("ET", "new_geo");
            flags["new_geo_get_best"] = result.mean_metric("GET", "new_geo") <
                                            result.mean_metric("ET", "new_geo") &&
                                        result.mean_metric("GET", "new_geo") <
                                            result.mean_metric("ET+DFS", "new_geo");
        }
        if (have("GET"))
            flags["train_get_expert_ratio"] =
                result.mean_metric("GET", "train") / result.expert_mean("train");
        j["flags"] = flags;
        nlohmann::ordered_json failures = nlohmann::ordered_json::array();
        for (const MatrixRun& run : result.runs)
            if (!run.error.empty())
                failures.push_back(
                    {{"config", run.config}, {"seed", run.seed}, {"error", run.error}});
        j["failed_runs"] = failures;

        std::ofstream os(result.json_path, std::ios::trunc);
        if (!os) throw IoError("cannot write " + result.json_path.string());
        os << j.dump(2) << '\n';
    }

    for (const std::string& cat : category_names()) {
        std::vector<std::string> labels = result.rows;
        std::vector<double> means, stds;
        for (const std::string& row : result.rows) {
            std::vector<double> xs;
            for (const MatrixCell& c : result.cells)
                if (c.config == row && c.category == cat) xs.push_back(c.metric);
            means.push_back(result.mean_metric(row, cat));
            stds.push_back(detail::sample_std(xs));
        }
        labels.push_back("expert");
        std::vector<double> xs;
        for (const MatrixCell& c : result.expert)
            if (c.category == cat) xs.push_back(c.metric);
        means.push_back(result.expert_mean(cat));
        stds.push_back(detail::sample_std(xs));
        write_bar_chart_svg(out_dir / ("chart_" + cat + ".svg"),
                            "Tracking error: " + cat, "mean fingertip error", labels, means, stds);
    }
    return result;
}

// Mean Euclidean error of the self-model head over every real joint of
// every record in the dataset.
inline double mean_fk_error(const GetModel& model, const DemoDataset& ds, int batch_cap = 128) {
    if (ds.records.empty()) throw ConfigError("mean_fk_error: dataset has no records");
    if (batch_cap < 1) throw ConfigError("mean_fk_error: batch_cap must be positive");
    double err = 0.0;
    std::int64_t joints = 0;
    for (std::size_t start = 0; start < ds.records.size();
         start += static_cast<std::size_t>(batch_cap)) {
        const std::size_t stop =
            std::min(ds.records.size(), start + static_cast<std::size_t>(batch_cap));
        std::vector<Sample> samples;
        samples.reserve(stop - start);
        for (std::size_t i = start; i < stop; ++i) samples.push_back(ds.make_sample(i));
        const TokenBatch batch = collate(samples);
        const GetModel::Forward f = model.forward(batch);
        const Tensor& pred = f.tape.value(f.fk);
        const int Jm = batch.jmax();
        for (int b = 0; b < batch.batch_size(); ++b) {
            const int J = batch.joint_counts[static_cast<std::size_t>(b)];
            for (int j = 0; j < J; ++j) {
                const std::size_t at = static_cast<std::size_t>((b * Jm + j) * 2);
                err += std::hypot(pred.data[at] - batch.fk.data[at],
                                  pred.data[at + 1] - batch.fk.data[at + 1]);
                joints += 1;
            }
        }
    }
    return err / static_cast<double>(joints);
}

struct FkProbeSpec {
    GetConfig base;
    TrainSchedule schedule;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::vector<std::string> rows = {"ET", "ET+DFS", "GET"};
    int workers = 0;
};

struct FkProbeCell {
    std::string config;
    std::uint64_t seed = 0;
    double train_error = std::numeric_limits<double>::quiet_NaN();
    double heldout_error = std::numeric_limits<double>::quiet_NaN();
    bool ok = false;
    std::string note;
};

struct FkProbeResult {
    std::vector<std::string> rows;
    std::vector<std::uint64_t> seeds;
    std::vector<FkProbeCell> cells;  // row-major over (row, seed)
    std::filesystem::path json_path;

    double mean_heldout(const std::string& config) const {
        double acc = 0.0;
        int n = 0;
        for (const FkProbeCell& c : cells)
            if (c.config == config && std::isfinite(c.heldout_error)) {
                acc += c.heldout_error;
                n += 1;
            }
        return n > 0 ? acc / n : std::numeric_limits<double>::quiet_NaN();
    }

    double mean_train(const std::string& config) const {
        double acc = 0.0;
        int n = 0;
        for (const FkProbeCell& c : cells)
            if (c.config == config && std::isfinite(c.train_error)) {
                acc += c.train_error;
                n += 1;
            }
        return n > 0 ? acc / n : std::numeric_limits<double>::quiet_NaN();
    }
};

// Structural probe: train selected rows with the policy loss off (the FK
// head is the only learning signal), then measure FK error on records from
// training graphs and from held-out graphs. A model that can only match
// joints to positions through graph structure shows the gap here.
inline FkProbeResult run_fk_probe(const DemoDataset& train_ds, const DemoDataset& heldout_ds,
                                  const FkProbeSpec& spec, const std::filesystem::path& out_dir) {
    if (spec.rows.empty() || spec.seeds.empty())
        throw ConfigError("fk probe needs at least one row and one seed");
    const auto grid = make_ablation_grid(spec.base);
    std::vector<GetConfig> configs;
    for (const std::string& name : spec.rows) {
        bool found = false;
        for (const auto& [gname, gcfg] : grid)
            if (gname == name) {
                GetConfig c = gcfg;
                c.use_policy_loss = false;
                c.use_self_model = true;
                configs.push_back(c);
                found = true;
                break;
            }
        if (!found) throw ConfigError("unknown ablation row: " + name);
    }
    std::filesystem::create_directories(out_dir / "runs");

    FkProbeResult result;
    result.rows = spec.rows;
    result.seeds = spec.seeds;
    const std::size_t n_seeds = spec.seeds.size();
    result.cells.resize(spec.rows.size() * n_seeds);

    run_parallel(result.cells.size(), spec.workers, [&](std::size_t i) {
        const std::size_t ri = i / n_seeds;
        const std::size_t si = i % n_seeds;
        FkProbeCell& cell = result.cells[i];
        cell.config = spec.rows[ri];
        cell.seed = spec.seeds[si];
        try {
            TrainSchedule sched = spec.schedule;
            sched.seed = cell.seed;
            const auto run_dir = out_dir / "runs" / run_dir_name(cell.config, cell.seed);
            const TrainResult tr = train(train_ds, configs[ri], sched, run_dir);
            cell.train_error = mean_fk_error(tr.model, train_ds);
            cell.heldout_error = mean_fk_error(tr.model, heldout_ds);
            cell.ok = true;
        } catch (const std::exception& e) {
            cell.note = e.what();
        }
    });

    result.json_path = out_dir / "fk_probe.json";
    nlohmann::ordered_json j;
    j["rows"] = result.rows;
    j["seeds"] = result.seeds;
    nlohmann::ordered_json cells;
    for (const std::string& row : result.rows) {
        nlohmann::ordered_json per_seed;
        std::vector<double> heldout;
        for (const FkProbeCell& c : result.cells)
            if (c.config == row) {
                per_seed[std::to_string(c.seed)] = {{"train_error", c.train_error},
                                                    {"heldout_error", c.heldout_error},
                                                    {"ok", c.ok}};
                heldout.push_back(c.heldout_error);
            }
        nlohmann::ordered_json entry;
        entry["per_seed"] = per_seed;
        entry["train_mean"] = result.mean_train(row);
        entry["heldout_mean"] = result.mean_heldout(row);
        entry["heldout_std"] = detail::sample_std(heldout);
        cells[row] = entry;
    }
    j["cells"] = cells;
    if (std::find(result.rows.begin(), result.rows.end(), "GET") != result.rows.end()) {
        double best_baseline = std::numeric_limits<double>::infinity();
        for (const std::string& row : result.rows)
            if (row != "GET") best_baseline = std::min(best_baseline, result.mean_heldout(row));
        j["get_vs_best_baseline"] = result.mean_heldout("GET") / best_baseline;
    }
    std::ofstream os(result.json_path, std::ios::trunc);
    if (!os) throw IoError("cannot write " + result.json_path.string());
    os << j.dump(2) << '\n';

    std::vector<double> means, stds;
    for (const std::string& row : result.rows) {
        std::vector<double> xs;
        for (const FkProbeCell& c : result.cells)
            if (c.config == row) xs.push_back(c.heldout_error);
        means.push_back(result.mean_heldout(row));
        stds.push_back(detail::sample_std(xs));
    }
    write_bar_chart_svg(out_dir / "fk_probe.svg", "FK probe: held-out graphs",
                        "mean joint position error", result.rows, means, stds);
    return result;
}

struct DfsSensitivityResult {
    std::vector<std::uint64_t> seeds;
    std::vector<double> canonical;  // per-seed training-category metric
    std::vector<double> reversed;
    double canonical_mean = std::numeric_limits<double>::quiet_NaN();
    double reversed_mean = std::numeric_limits<double>::quiet_NaN();
    double mean_degradation = std::numeric_limits<double>::quiet_NaN();  // (rev - can) / can
};

// Scores trained DFS-variant models on the training graphs twice: once with
// the canonical joint ordering and once reversed. models[i] pairs with
// seeds[i]; both passes share episode streams.
inline DfsSensitivityResult dfs_sensitivity_eval(const std::vector<GetModel>& models,
                                                 const std::vector<std::uint64_t>& seeds,
                                                 const std::vector<EmbodimentGraph>& train_graphs,
                                                 const TaskSpec& task, std::uint64_t eval_seed,
                                                 int episodes) {
    if (models.size() != seeds.size() || models.empty())
        throw ConfigError("dfs sensitivity needs one model per seed");
    DfsSensitivityResult out;
    out.seeds = seeds;
    double can_acc = 0.0, rev_acc = 0.0, deg_acc = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < models.size(); ++i) {
        const double can = eval_model_on_category(models[i], train_graphs, task, eval_seed,
                                                  "train", seeds[i], episodes, false)
                               .metric;
        const double rev = eval_model_on_category(models[i], train_graphs, task, eval_seed,
                                                  "train", seeds[i], episodes, true)
                               .metric;
        out.canonical.push_back(can);
        out.reversed.push_back(rev);
        if (std::isfinite(can) && std::isfinite(rev) && can > 0.0) {
            can_acc += can;
            rev_acc += rev;
            deg_acc += (rev - can) / can;
            n += 1;
        }
    }
    if (n > 0) {
        out.canonical_mean = can_acc / n;
        out.reversed_mean = rev_acc / n;
        out.mean_degradation = deg_acc / n;
    }
    return out;
}

inline std::vector<GetModel> load_run_models(const std::filesystem::path& runs_dir,
                                             const std::string& config,
                                             const std::vector<std::uint64_t>& seeds,
                                             const std::string& checkpoint = "final.ckpt") {
    std::vector<GetModel> models;
    models.reserve(seeds.size());
    for (std::uint64_t seed : seeds) {
        const auto path = runs_dir / run_dir_name(config, seed) / checkpoint;
        if (!std::filesystem::exists(path)) throw IoError("missing checkpoint: " + path.string());
        models.push_back(GetModel::load(path));
    }
    return models;
}

struct DfsSensitivitySpec {
    GetConfig base;
    TrainSchedule schedule;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    int eval_episodes = 10;
    std::uint64_t eval_seed = 900;
    int workers = 0;
};

inline DfsSensitivityResult run_dfs_sensitivity(const DemoDataset& train_ds,
                                                const SplitResult& splits,
                                                const DfsSensitivitySpec& spec,
                                                const std::filesystem::path& out_dir) {
    const auto grid = make_ablation_grid(spec.base);
    GetConfig config;
    bool found = false;
    for (const auto& [name, cfg] : grid)
        if (name == "ET+DFS") {
            config = cfg;
            found = true;
        }
    if (!found) throw StructuralError("ablation grid is missing ET+DFS");
    std::filesystem::create_directories(out_dir / "runs");

    std::vector<GetModel> models;
    models.reserve(spec.seeds.size());
    for (std::uint64_t seed : spec.seeds) models.emplace_back(config, seed);  // placeholders
    run_parallel(spec.seeds.size(), spec.workers, [&](std::size_t i) {
        TrainSchedule sched = spec.schedule;
        sched.seed = spec.seeds[i];
        const auto run_dir = out_dir / "runs" / run_dir_name("ET+DFS", spec.seeds[i]);
        models[i] = train(train_ds, config, sched, run_dir).model;
    });

    const DfsSensitivityResult result = dfs_sensitivity_eval(
        models, spec.seeds, splits.train, train_ds.task, spec.eval_seed, spec.eval_episodes);

    nlohmann::ordered_json j;
    j["seeds"] = result.seeds;
    j["canonical"] = result.canonical;
    j["reversed"] = result.reversed;
    j["canonical_mean"] = result.canonical_mean;
    j["reversed_mean"] = result.reversed_mean;
    j["mean_degradation"] = result.mean_degradation;
    std::ofstream os(out_dir / "dfs_sensitivity.json", std::ios::trunc);
    if (!os) throw IoError("cannot write dfs_sensitivity.json");
    os << j.dump(2) << '\n';
    return result;
}

// Copy of the dataset restricted to its first n embodiments (records are
// grouped by embodiment index, so indices stay valid).
inline DemoDataset subset_dataset(const DemoDataset& ds, int first_n) {
    if (first_n <= 0 || first_n >= ds.embodiment_count()) return ds;
    DemoDataset out;
    out.history = ds.history;
    out.seed = ds.seed;
    out.task = ds.task;
    out.expert = ds.expert;
    out.embodiments.assign(ds.embodiments.begin(), ds.embodiments.begin() + first_n);
    out.maps.assign(ds.maps.begin(), ds.maps.begin() + first_n);
    out.dfs.assign(ds.dfs.begin(), ds.dfs.begin() + first_n);
    for (const DemoRecord& r : ds.records)
        if (r.embodiment < first_n) out.records.push_back(r);
    return out;
}

struct SizeSweepSpec {
    GetConfig config;  // the full model by default
    TrainSchedule schedule;
    std::vector<int> sizes = {5, 10, 20, 0};  // 0 = all training embodiments
    std::vector<std::uint64_t> seeds = {1, 2};
    int eval_episodes = 10;
    std::uint64_t eval_seed = 900;
    int workers = 0;
};

struct SizeSweepCell {
    int size = 0;
    std::uint64_t seed = 0;
    double new_graph = std::numeric_limits<double>::quiet_NaN();
    double new_graph_geo = std::numeric_limits<double>::quiet_NaN();
    bool ok = false;
    std::string note;
};

struct SizeSweepResult {
    std::vector<int> sizes;  // resolved (0 replaced by the actual count)
    std::vector<std::uint64_t> seeds;
    std::vector<SizeSweepCell> cells;
    std::filesystem::path json_path;

    double mean_new_graph(int size) const {
        double acc = 0.0;
        int n = 0;
        for (const SizeSweepCell& c : cells)
            if (c.size == size && std::isfinite(c.new_graph)) {
                acc += c.new_graph;
                n += 1;
            }
        return n > 0 ? acc / n : std::numeric_limits<double>::quiet_NaN();
    }
};

// Zero-shot transfer as a function of how many training embodiments the
// model saw. Subsets nest: size 5 is a prefix of size 10, and so on.
inline SizeSweepResult run_size_sweep(const DemoDataset& train_ds, const SplitResult& splits,
                                      const SizeSweepSpec& spec,
                                      const std::filesystem::path& out_dir) {
    if (spec.sizes.empty() || spec.seeds.empty())
        throw ConfigError("size sweep needs at least one size and one seed");
    std::filesystem::create_directories(out_dir / "runs");

    SizeSweepResult result;
    result.seeds = spec.seeds;
    for (int s : spec.sizes) {
        const int resolved =
            (s <= 0 || s > train_ds.embodiment_count()) ? train_ds.embodiment_count() : s;
        result.sizes.push_back(resolved);
    }

    const std::size_t n_seeds = spec.seeds.size();
    result.cells.resize(result.sizes.size() * n_seeds);
    run_parallel(result.cells.size(), spec.workers, [&](std::size_t i) {
        const std::size_t zi = i / n_seeds;
        const std::size_t si = i % n_seeds;
        SizeSweepCell& cell = result.cells[i];
        cell.size = result.sizes[zi];
        cell.seed = spec.seeds[si];
        try {
            const DemoDataset sub = subset_dataset(train_ds, cell.size);
            TrainSchedule sched = spec.schedule;
            sched.seed = cell.seed;
            const auto run_dir =
                out_dir / "runs" /
                ("size" + std::to_string(cell.size) + "_seed" + std::to_string(cell.seed));
            const TrainResult tr = train(sub, spec.config, sched, run_dir);
            cell.new_graph = eval_model_on_category(tr.model, splits.new_graph, train_ds.task,
                                                    spec.eval_seed, "new_graph", cell.seed,
                                                    spec.eval_episodes)
                                 .metric;
            cell.new_graph_geo = eval_model_on_category(tr.model, splits.new_graph_geo,
                                                        train_ds.task, spec.eval_seed,
                                                        "new_graph_geo", cell.seed,
                                                        spec.eval_episodes)
                                     .metric;
            cell.ok = std::isfinite(cell.new_graph) && std::isfinite(cell.new_graph_geo);
        } catch (const std::exception& e) {
            cell.note = e.what();
        }
    });

    result.json_path = out_dir / "size_sweep.json";
    nlohmann::ordered_json j;
    j["sizes"] = result.sizes;
    j["seeds"] = result.seeds;
    nlohmann::ordered_json cells = nlohmann::ordered_json::array();
    for (const SizeSweepCell& c : result.cells)
        cells.push_back({{"size", c.size},
                         {"seed", c.seed},
                         {"new_graph", c.new_graph},
                         {"new_graph_geo", c.new_graph_geo},
                         {"ok", c.ok},
                         {"note", c.note}});
    j["cells"] = cells;
    nlohmann::ordered_json curve = nlohmann::ordered_json::array();
    for (int s : result.sizes)
        curve.push_back({{"size", s}, {"new_graph_mean", result.mean_new_graph(s)}});
    j["curve"] = curve;
    std::ofstream os(result.json_path, std::ios::trunc);
    if (!os) throw IoError("cannot write " + result.json_path.string());
    os << j.dump(2) << '\n';

    std::vector<double> xs, ys;
    for (int s : result.sizes) {
        xs.push_back(static_cast<double>(s));
        ys.push_back(result.mean_new_graph(s));
    }
    write_line_chart_svg(out_dir / "size_sweep.svg", "Zero-shot error vs training set size",
                         "training embodiments", "mean fingertip error (new_graph)", xs, ys);
    return result;
}

}  // namespace get
