#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "get/dataset.hpp"
#include "get/evalsuite.hpp"
#include "get/model.hpp"
#include "get/splits.hpp"
#include "get/task.hpp"
#include "get/trainer.hpp"
#include "get/variants.hpp"
#include "get/version.hpp"

namespace get {

// Settings blocks for the CLI subcommands. Everything lives in one JSON
// config file with per-section keys; command-line flags override individual
// values after the file is read.

struct SplitSettings {
    std::uint64_t seed = 77;
    TwoJointRule rule = TwoJointRule::AtLeastTwo;
    SplitSpec spec;
};

struct DemoSettings {
    std::int64_t steps_per_embodiment = 1000;
    std::uint64_t seed = 5;
    DlsConfig expert;
    double action_noise = 0.02;
};

struct EvalSettings {
    std::string policy = "checkpoint";  // "checkpoint" or "expert"
    std::string category = "train";
    int episodes = 10;
    std::uint64_t eval_seed = 900;
    std::uint64_t run_seed = 1;
    bool reversed_dfs = false;
};

struct AblateSettings {
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::vector<std::string> rows;  // empty = all seven
    int eval_episodes = 10;
    std::uint64_t eval_seed = 900;
    int workers = 0;
};

struct FkProbeSettings {
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::vector<std::string> rows = {"ET", "ET+DFS", "GET"};
    std::int64_t heldout_steps = 200;  // demo steps per held-out embodiment
    int workers = 0;
};

struct DfsSettings {
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    int eval_episodes = 10;
    std::uint64_t eval_seed = 900;
    int workers = 0;
};

struct SweepSettings {
    std::vector<int> sizes = {5, 10, 20, 0};  // 0 = all
    std::vector<std::uint64_t> seeds = {1, 2};
    int eval_episodes = 10;
    std::uint64_t eval_seed = 900;
    int workers = 0;
};

struct RunConfig {
    std::filesystem::path out_root = "out";
    TaskSpec task;
    GetConfig model;
    TrainSchedule schedule;
    TrainSchedule probe_schedule = [] {
        TrainSchedule s;
        s.steps = 1000;
        return s;
    }();
    SplitSettings splits;
    DemoSettings demos;
    EvalSettings eval;
    AblateSettings ablate;
    FkProbeSettings fk_probe;
    DfsSettings dfs_sensitivity;
    SweepSettings size_sweep;
};

inline std::string to_string(TwoJointRule r) {
    return r == TwoJointRule::AtLeastTwo ? "at_least_two" : "exactly_two";
}

inline TwoJointRule two_joint_rule_from_string(const std::string& s) {
    if (s == "at_least_two") return TwoJointRule::AtLeastTwo;
    if (s == "exactly_two") return TwoJointRule::ExactlyTwo;
    throw ConfigError("unknown two-joint rule: " + s + " (want at_least_two or exactly_two)");
}

namespace detail {

template <typename T>
T json_get(const nlohmann::json& v, const std::string& key) {
    try {
        return v.get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad value for " + key + ": " + e.what());
    }
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const SplitSettings& s) {
    nlohmann::ordered_json j;
    j["seed"] = s.seed;
    j["rule"] = to_string(s.rule);
    j["train"] = s.spec.train;
    j["new_graph"] = s.spec.new_graph;
    j["new_geo"] = s.spec.new_geo;
    j["new_graph_geo"] = s.spec.new_graph_geo;
    j["extension_fraction"] = s.spec.extension_fraction;
    return j;
}

inline SplitSettings split_settings_from_json(const nlohmann::json& j) {
    SplitSettings s;
    for (const auto& [key, val] : j.items()) {
        if (key == "seed") s.seed = detail::json_get<std::uint64_t>(val, key);
        else if (key == "rule") s.rule = two_joint_rule_from_string(detail::json_get<std::string>(val, key));
        else if (key == "train") s.spec.train = detail::json_get<int>(val, key);
        else if (key == "new_graph") s.spec.new_graph = detail::json_get<int>(val, key);
        else if (key == "new_geo") s.spec.new_geo = detail::json_get<int>(val, key);
        else if (key == "new_graph_geo") s.spec.new_graph_geo = detail::json_get<int>(val, key);
        else if (key == "extension_fraction")
            s.spec.extension_fraction = detail::json_get<double>(val, key);
        else throw ConfigError("unknown splits key: " + key);
    }
    return s;
}

inline nlohmann::ordered_json to_json(const DemoSettings& s) {
    nlohmann::ordered_json j;
    j["steps_per_embodiment"] = s.steps_per_embodiment;
    j["seed"] = s.seed;
    j["expert"] = {{"lambda", s.expert.lambda},
                   {"max_delta", s.expert.max_delta},
                   {"centering", s.expert.centering}};
    j["action_noise"] = s.action_noise;
    return j;
}

inline DemoSettings demo_settings_from_json(const nlohmann::json& j) {
    DemoSettings s;
    for (const auto& [key, val] : j.items()) {
        if (key == "steps_per_embodiment")
            s.steps_per_embodiment = detail::json_get<std::int64_t>(val, key);
        else if (key == "seed") s.seed = detail::json_get<std::uint64_t>(val, key);
        else if (key == "expert") {
            for (const auto& [ekey, eval_] : val.items()) {
                if (ekey == "lambda") s.expert.lambda = detail::json_get<double>(eval_, ekey);
                else if (ekey == "max_delta")
                    s.expert.max_delta = detail::json_get<double>(eval_, ekey);
                else if (ekey == "centering")
                    s.expert.centering = detail::json_get<double>(eval_, ekey);
                else throw ConfigError("unknown expert key: " + ekey);
            }
        } else if (key == "action_noise") {
            s.action_noise = detail::json_get<double>(val, key);
        } else throw ConfigError("unknown demos key: " + key);
    }
    return s;
}

inline nlohmann::ordered_json to_json(const EvalSettings& s) {
    nlohmann::ordered_json j;
    j["policy"] = s.policy;
    j["category"] = s.category;
    j["episodes"] = s.episodes;
    j["eval_seed"] = s.eval_seed;
    j["run_seed"] = s.run_seed;
    j["reversed_dfs"] = s.reversed_dfs;
    return j;
}

inline EvalSettings eval_settings_from_json(const nlohmann::json& j) {
    EvalSettings s;
    for (const auto& [key, val] : j.items()) {
        if (key == "policy") s.policy = detail::json_get<std::string>(val, key);
        else if (key == "category") s.category = detail::json_get<std::string>(val, key);
        else if (key == "episodes") s.episodes = detail::json_get<int>(val, key);
        else if (key == "eval_seed") s.eval_seed = detail::json_get<std::uint64_t>(val, key);
        else if (key == "run_seed") s.run_seed = detail::json_get<std::uint64_t>(val, key);
        else if (key == "reversed_dfs") s.reversed_dfs = detail::json_get<bool>(val, key);
        else throw ConfigError("unknown eval key: " + key);
    }
    return s;
}

inline nlohmann::ordered_json to_json(const AblateSettings& s) {
    nlohmann::ordered_json j;
    j["seeds"] = s.seeds;
    j["rows"] = s.rows;
    j["eval_episodes"] = s.eval_episodes;
    j["eval_seed"] = s.eval_seed;
    j["workers"] = s.workers;
    return j;
}

inline AblateSettings ablate_settings_from_json(const nlohmann::json& j) {
    AblateSettings s;
    for (const auto& [key, val] : j.items()) {
        if (key == "seeds") s.seeds = detail::json_get<std::vector<std::uint64_t>>(val, key);
        else if (key == "rows") s.rows = detail::json_get<std::vector<std::string>>(val, key);
        else if (key == "eval_episodes") s.eval_episodes = detail::json_get<int>(val, key);
        else if (key == "eval_seed") s.eval_seed = detail::json_get<std::uint64_t>(val, key);
        else if (key == "workers") s.workers = detail::json_get<int>(val, key);
        else throw ConfigError("unknown ablate key: " + key);
    }
    return s;
}

inline nlohmann::ordered_json to_json(const FkProbeSettings& s) {
    nlohmann::ordered_json j;
    j["seeds"] = s.seeds;
    j["rows"] = s.rows;
    j["heldout_steps"] = s.heldout_steps;
    j["workers"] = s.workers;
    return j;
}

inline FkProbeSettings fk_probe_settings_from_json(const nlohmann::json& j) {
    FkProbeSettings s;
    for (const auto& [key, val] : j.items()) {
        if (key == "seeds") s.seeds = detail::json_get<std::vector<std::uint64_t>>(val, key);
        else if (key == "rows") s.rows = detail::json_get<std::vector<std::string>>(val, key);
        else if (key == "heldout_steps") s.heldout_steps = detail::json_get<std::int64_t>(val, key);
        else if (key == "workers") s.workers = detail::json_get<int>(val, key);
        else throw ConfigError("unknown fk_probe key: " + key);
    }
    return s;
}

inline nlohmann::ordered_json to_json(const DfsSettings& s) {
    nlohmann::ordered_json j;
    j["seeds"] = s.seeds;
    j["eval_episodes"] = s.eval_episodes;
    j["eval_seed"] = s.eval_seed;
    j["workers"] = s.workers;
    return j;
}

inline DfsSettings dfs_settings_from_json(const nlohmann::json& j) {
    DfsSettings s;
    for (const auto& [key, val] : j.items()) {
        if (key == "seeds") s.seeds = detail::json_get<std::vector<std::uint64_t>>(val, key);
        else if (key == "eval_episodes") s.eval_episodes = detail::json_get<int>(val, key);
        else if (key == "eval_seed") s.eval_seed = detail::json_get<std::uint64_t>(val, key);
        else if (key == "workers") s.workers = detail::json_get<int>(val, key);
        else throw ConfigError("unknown dfs_sensitivity key: " + key);
    }
    return s;
}

inline nlohmann::ordered_json to_json(const SweepSettings& s) {
    nlohmann::ordered_json j;
    j["sizes"] = s.sizes;
    j["seeds"] = s.seeds;
    j["eval_episodes"] = s.eval_episodes;
    j["eval_seed"] = s.eval_seed;
    j["workers"] = s.workers;
    return j;
}

inline SweepSettings sweep_settings_from_json(const nlohmann::json& j) {
    SweepSettings s;
    for (const auto& [key, val] : j.items()) {
        if (key == "sizes") s.sizes = detail::json_get<std::vector<int>>(val, key);
        else if (key == "seeds") s.seeds = detail::json_get<std::vector<std::uint64_t>>(val, key);
        else if (key == "eval_episodes") s.eval_episodes = detail::json_get<int>(val, key);
        else if (key == "eval_seed") s.eval_seed = detail::json_get<std::uint64_t>(val, key);
        else if (key == "workers") s.workers = detail::json_get<int>(val, key);
        else throw ConfigError("unknown size_sweep key: " + key);
    }
    return s;
}

inline nlohmann::ordered_json to_json(const RunConfig& c) {
    nlohmann::ordered_json j;
    j["out_root"] = c.out_root.string();
    j["task"] = demo_io::task_to_json(c.task);
    j["model"] = to_json(c.model);
    j["schedule"] = to_json(c.schedule);
    j["probe_schedule"] = to_json(c.probe_schedule);
    j["splits"] = to_json(c.splits);
    j["demos"] = to_json(c.demos);
    j["eval"] = to_json(c.eval);
    j["ablate"] = to_json(c.ablate);
    j["fk_probe"] = to_json(c.fk_probe);
    j["dfs_sensitivity"] = to_json(c.dfs_sensitivity);
    j["size_sweep"] = to_json(c.size_sweep);
    return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    for (const auto& [key, val] : j.items()) {
        if (key == "out_root") c.out_root = detail::json_get<std::string>(val, key);
        else if (key == "task") c.task = demo_io::task_from_json(val);
        else if (key == "model") c.model = get_config_from_json(val);
        else if (key == "schedule") c.schedule = schedule_from_json(val);
        else if (key == "probe_schedule") c.probe_schedule = schedule_from_json(val);
        else if (key == "splits") c.splits = split_settings_from_json(val);
        else if (key == "demos") c.demos = demo_settings_from_json(val);
        else if (key == "eval") c.eval = eval_settings_from_json(val);
        else if (key == "ablate") c.ablate = ablate_settings_from_json(val);
        else if (key == "fk_probe") c.fk_probe = fk_probe_settings_from_json(val);
        else if (key == "dfs_sensitivity") c.dfs_sensitivity = dfs_settings_from_json(val);
        else if (key == "size_sweep") c.size_sweep = sweep_settings_from_json(val);
        else throw ConfigError("unknown config section: " + key);
    }
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("missing input: " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse config " + path.string() + ": " + e.what());
    }
    return run_config_from_json(j);
}

// Every subcommand drops a self-describing snapshot into its run directory:
// the tool version plus the fully resolved configuration after flag
// overrides. Reruns with the same build and config write identical bytes.
inline void write_run_snapshot(const std::filesystem::path& run_dir, const std::string& subcommand,
                               const RunConfig& config) {
    std::filesystem::create_directories(run_dir);
    nlohmann::ordered_json j;
    j["version"] = version_string();
    j["subcommand"] = subcommand;
    j["config"] = to_json(config);
    std::ofstream os(run_dir / "config.json", std::ios::trunc);
    if (!os) throw IoError("cannot write config snapshot in " + run_dir.string());
    os << j.dump(2) << '\n';
}

// On-disk split layout written by gen-embodiments: graphs/<name>.json per
// embodiment plus a splits.json manifest naming the four categories.
inline void save_splits(const std::filesystem::path& dir, const SplitResult& splits,
                        const SplitSettings& settings, const EnumerationResult& enumeration,
                        const TaskSpec& task) {
    std::filesystem::create_directories(dir / "graphs");
    auto dump_all = [&](const std::vector<EmbodimentGraph>& graphs) {
        for (const EmbodimentGraph& g : graphs)
            save_embodiment(dir / "graphs" / (g.name + ".json"), g);
    };
    dump_all(splits.train);
    dump_all(splits.new_graph);
    dump_all(splits.new_geo);
    dump_all(splits.new_graph_geo);

    nlohmann::ordered_json m;
    m["format_version"] = 1;
    m["version"] = version_string();
    m["settings"] = to_json(settings);
    m["task"] = demo_io::task_to_json(task);
    m["pre_filter_count"] = enumeration.combo_count;
    m["post_filter_count"] = static_cast<int>(enumeration.graphs.size());
    m["excluded_two_nonempty"] = enumeration.excluded_two_nonempty;
    m["excluded_capable_main"] = enumeration.excluded_capable_main;
    m["excluded_total"] = enumeration.excluded;
    auto names = [](const std::vector<EmbodimentGraph>& graphs) {
        nlohmann::ordered_json a = nlohmann::ordered_json::array();
        for (const EmbodimentGraph& g : graphs) a.push_back(g.name);
        return a;
    };
    m["splits"] = {{"train", names(splits.train)},
                   {"new_graph", names(splits.new_graph)},
                   {"new_geo", names(splits.new_geo)},
                   {"new_graph_geo", names(splits.new_graph_geo)}};
    m["probe_failures"] = splits.probe_failures;
    std::ofstream os(dir / "splits.json", std::ios::trunc);
    if (!os) throw IoError("cannot write " + (dir / "splits.json").string());
    os << m.dump(2) << '\n';
}

inline SplitResult load_splits(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "splits.json";
    std::ifstream is(manifest_path);
    if (!is) throw IoError("missing input: " + manifest_path.string());
    nlohmann::json m;
    try {
        is >> m;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("cannot parse " + manifest_path.string() + ": " + e.what());
    }
    SplitResult out;
    try {
        if (m.at("format_version").get<int>() != 1)
            throw IoError("unsupported splits format in " + manifest_path.string());
        auto load_all = [&](const std::string& key, std::vector<EmbodimentGraph>& dst) {
            for (const auto& name : m.at("splits").at(key)) {
                const auto path = dir / "graphs" / (name.get<std::string>() + ".json");
                if (!std::filesystem::exists(path))
                    throw IoError("missing input: " + path.string());
                dst.push_back(load_embodiment(path));
            }
        };
        load_all("train", out.train);
        load_all("new_graph", out.new_graph);
        load_all("new_geo", out.new_geo);
        load_all("new_graph_geo", out.new_graph_geo);
        if (m.contains("probe_failures"))
            for (const auto& name : m.at("probe_failures"))
                out.probe_failures.push_back(name.get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    return out;
}

}  // namespace get
