#pragma once

#include <cstdint>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "get/graph.hpp"
#include "get/kinematics.hpp"
#include "get/rng.hpp"
#include "get/task.hpp"
#include "get/tokenizer.hpp"

namespace get {

// One behavior-cloning example: what the expert saw and what it did, plus
// the forward-kinematics supervision for the newest frame.
struct DemoRecord {
    int embodiment = 0;                      // index into DemoDataset::embodiments
    std::vector<ObservationFrame> history;   // newest first, padded to H+1 frames
    std::vector<double> actions;             // J expert deltas
    std::vector<double> fk;                  // 2J joint positions, row-major
};

struct ProbeResult {
    bool passed = false;
    double mean_error = 0.0;
};

// Expert competence filter: one probe episode, pass when the mean tracking
// error stays below a tenth of the target radius. The probe stream depends
// only on the embodiment so the verdict is a property of (graph, task) and
// every pipeline stage agrees on which embodiments are in play.
inline ProbeResult competence_probe(const EmbodimentGraph& graph, const TaskSpec& task,
                                    const DlsConfig& expert = {}) {
    SplitRng rng = SplitRng(fnv1a64("competence-probe")).split(graph.name);
    TrackingEnv env(graph, task, rng);
    ExpertPolicy policy(expert);
    const EpisodeResult r = run_episode(env, policy);
    ProbeResult out;
    out.mean_error = r.mean_error;
    out.passed = !r.failed && r.mean_error < 0.1 * task.target_radius;
    return out;
}

struct DemoDataset {
    int history = 2;
    std::uint64_t seed = 0;
    TaskSpec task;
    DlsConfig expert;
    double action_noise = 0.02;  // exploration noise injected while recording
    std::vector<EmbodimentGraph> embodiments;
    std::vector<std::shared_ptr<const DistanceMaps>> maps;  // aligned with embodiments
    std::vector<std::vector<int>> dfs;                      // canonical ranks, aligned
    std::vector<std::string> excluded;                      // embodiments failing the probe
    std::vector<double> excluded_errors;
    std::vector<DemoRecord> records;  // grouped by embodiment, generation order

    int embodiment_count() const { return static_cast<int>(embodiments.size()); }
    std::int64_t record_count() const { return static_cast<std::int64_t>(records.size()); }

    std::uint64_t config_hash() const {
        nlohmann::ordered_json j;
        j["history"] = history;
        j["seed"] = seed;
        j["task"] = {task.dt,           task.cycle_period,     task.episode_length,
                     task.burn_in,      task.target_radius,    task.swing_amplitude,
                     task.phase_offset_step, task.pd_alpha,    task.max_delta,
                     task.init_limit_fraction};
        j["expert"] = {expert.lambda, expert.max_delta, expert.centering};
        j["action_noise"] = action_noise;
        for (const auto& e : embodiments) j["names"].push_back(e.name);
        return fnv1a64(j.dump());
    }

    Sample sample_from(const DemoRecord& r) const {
        const std::size_t e = static_cast<std::size_t>(r.embodiment);
        Sample s;
        s.tokens = build_tokens(embodiments[e], task, r.history, history);
        s.maps = maps[e];
        s.dfs_positions = dfs[e];
        s.actions = r.actions;
        s.fk = r.fk;
        return s;
    }

    Sample make_sample(std::size_t record_index) const { return sample_from(records.at(record_index)); }
};

// Snapshot of one expert-labeled step: padded history window, the label, and
// the FK supervision for the newest frame. Shared by the offline recorder
// and the on-policy correction pass in the trainer.
inline DemoRecord record_step(int embodiment, const std::deque<ObservationFrame>& frames,
                              int history, std::vector<double> label, const EmbodimentGraph& g,
                              const ChainLayout& lay, const std::vector<double>& q) {
    DemoRecord r;
    r.embodiment = embodiment;
    r.history.assign(frames.begin(), frames.end());
    while (r.history.size() < static_cast<std::size_t>(history) + 1)
        r.history.push_back(r.history.back());
    r.actions = std::move(label);
    const FkState st = forward_kinematics(g, lay, q);
    r.fk.reserve(st.pos.size() * 2);
    for (const Vec2& p : st.pos) {
        r.fk.push_back(p[0]);
        r.fk.push_back(p[1]);
    }
    return r;
}

// Rolls the expert over every competent embodiment and records each step.
// The recorded label is always the clean expert action for the current
// state, but the action actually executed carries Gaussian exploration
// noise, so the dataset covers a tube around the expert trajectory and
// teaches the policy to steer back to it; plain on-trajectory cloning
// compounds its per-step error over a whole episode. steps_per_embodiment
// must be a whole number of episodes. Deterministic given the seed: every
// embodiment and episode draws from its own labeled rng stream.
inline DemoDataset generate_demos(const std::vector<EmbodimentGraph>& graphs, const TaskSpec& task,
                                  std::int64_t steps_per_embodiment, std::uint64_t seed,
                                  const DlsConfig& expert = {}, double action_noise = 0.02) {
    task.check();
    if (steps_per_embodiment < 1 || steps_per_embodiment % task.episode_length != 0)
        throw ConfigError("steps_per_embodiment must be a positive multiple of episode_length (" +
                          std::to_string(task.episode_length) + "), got " +
                          std::to_string(steps_per_embodiment));
    if (action_noise < 0.0) throw ConfigError("action noise must be non-negative");
    const std::int64_t episodes = steps_per_embodiment / task.episode_length;

    DemoDataset ds;
    ds.history = task.history;
    ds.seed = seed;
    ds.task = task;
    ds.expert = expert;
    ds.action_noise = action_noise;
    SplitRng root(seed);
    for (const EmbodimentGraph& g : graphs) {
        const ProbeResult probe = competence_probe(g, task, expert);
        if (!probe.passed) {
            ds.excluded.push_back(g.name);
            ds.excluded_errors.push_back(probe.mean_error);
            continue;
        }
        const int e = ds.embodiment_count();
        ds.embodiments.push_back(g);
        ds.maps.push_back(std::make_shared<DistanceMaps>(compute_distance_maps(g)));
        ds.dfs.push_back(dfs_linearize(g));
        SplitRng emb_stream = root.split(g.name);
        for (std::int64_t ep = 0; ep < episodes; ++ep) {
            const SplitRng ep_stream = emb_stream.split(static_cast<std::uint64_t>(ep));
            TrackingEnv env(g, task, ep_stream);
            SplitRng noise = ep_stream.split("noise");
            std::deque<ObservationFrame> frames;
            for (int t = 0; t < task.episode_length; ++t) {
                frames.push_front(env.observe());
                while (frames.size() > static_cast<std::size_t>(task.history) + 1)
                    frames.pop_back();

                std::vector<double> action =
                    dls_deltas(g, env.layout(), env.angles(), env.targets_next(), expert);
                ds.records.push_back(record_step(e, frames, task.history, action, g, env.layout(),
                                                 env.angles()));

                for (double& a : action) a += action_noise * noise.gaussian();
                env.step(action);
            }
        }
    }
    return ds;
}

namespace demo_io {

inline constexpr int kFormatVersion = 1;

inline nlohmann::ordered_json task_to_json(const TaskSpec& t) {
    nlohmann::ordered_json j;
    j["dt"] = t.dt;
    j["cycle_period"] = t.cycle_period;
    j["episode_length"] = t.episode_length;
    j["burn_in"] = t.burn_in;
    j["target_radius"] = t.target_radius;
    j["swing_amplitude"] = t.swing_amplitude;
    j["phase_offset_step"] = t.phase_offset_step;
    j["pd_alpha"] = t.pd_alpha;
    j["max_delta"] = t.max_delta;
    j["init_limit_fraction"] = t.init_limit_fraction;
    j["history"] = t.history;
    return j;
}

inline TaskSpec task_from_json(const nlohmann::json& j) {
    TaskSpec t;
    try {
        for (const auto& [key, val] : j.items()) {
            if (key == "dt") t.dt = val.get<double>();
            else if (key == "cycle_period") t.cycle_period = val.get<int>();
            else if (key == "episode_length") t.episode_length = val.get<int>();
            else if (key == "burn_in") t.burn_in = val.get<int>();
            else if (key == "target_radius") t.target_radius = val.get<double>();
            else if (key == "swing_amplitude") t.swing_amplitude = val.get<double>();
            else if (key == "phase_offset_step") t.phase_offset_step = val.get<double>();
            else if (key == "pd_alpha") t.pd_alpha = val.get<double>();
            else if (key == "max_delta") t.max_delta = val.get<double>();
            else if (key == "init_limit_fraction") t.init_limit_fraction = val.get<double>();
            else if (key == "history") t.history = val.get<int>();
            else throw ConfigError("unknown task key: " + key);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed task config: ") + e.what());
    }
    t.check();
    return t;
}

// Record layout in the .bin file, all little-endian 64-bit floats, grouped
// by embodiment in manifest order: per record, frames newest-first
// [phase, J angles, J targets] × (H+1), then J actions, then 2J FK values.
inline std::int64_t record_doubles(int J, int H) {
    return static_cast<std::int64_t>(H + 1) * (1 + 2 * static_cast<std::int64_t>(J)) +
           3 * static_cast<std::int64_t>(J);
}

inline void save(const std::filesystem::path& manifest_path,
                 const std::filesystem::path& bin_path, const DemoDataset& ds) {
    nlohmann::ordered_json m;
    m["format_version"] = kFormatVersion;
    m["history"] = ds.history;
    m["seed"] = ds.seed;
    m["task"] = task_to_json(ds.task);
    m["expert"] = {{"lambda", ds.expert.lambda},
                   {"max_delta", ds.expert.max_delta},
                   {"centering", ds.expert.centering}};
    m["action_noise"] = ds.action_noise;
    m["config_hash"] = to_hex(ds.config_hash());
    m["embodiments"] = nlohmann::ordered_json::array();
    for (const auto& g : ds.embodiments) m["embodiments"].push_back(to_json(g));
    m["records_per_embodiment"] = nlohmann::ordered_json::array();
    std::vector<std::int64_t> counts(ds.embodiments.size(), 0);
    for (const DemoRecord& r : ds.records) counts[static_cast<std::size_t>(r.embodiment)] += 1;
    for (std::int64_t c : counts) m["records_per_embodiment"].push_back(c);
    m["excluded"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < ds.excluded.size(); ++i)
        m["excluded"].push_back({{"name", ds.excluded[i]}, {"probe_error", ds.excluded_errors[i]}});

    std::ofstream mos(manifest_path, std::ios::trunc);
    if (!mos) throw IoError("cannot write manifest: " + manifest_path.string());
    mos << m.dump(2) << '\n';

    std::ofstream os(bin_path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write records: " + bin_path.string());
    std::vector<double> buf;
    for (const DemoRecord& r : ds.records) {
        buf.clear();
        for (const ObservationFrame& f : r.history) {
            buf.push_back(f.phase);
            buf.insert(buf.end(), f.joint_angles.begin(), f.joint_angles.end());
            buf.insert(buf.end(), f.target_states.begin(), f.target_states.end());
        }
        buf.insert(buf.end(), r.actions.begin(), r.actions.end());
        buf.insert(buf.end(), r.fk.begin(), r.fk.end());
        os.write(reinterpret_cast<const char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(double)));
    }
    if (!os) throw IoError("short write: " + bin_path.string());
}

inline DemoDataset load(const std::filesystem::path& manifest_path,
                        const std::filesystem::path& bin_path) {
    std::ifstream mis(manifest_path);
    if (!mis) throw IoError("cannot open manifest: " + manifest_path.string());
    nlohmann::json m;
    try {
        mis >> m;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("cannot parse " + manifest_path.string() + ": " + e.what());
    }
    DemoDataset ds;
    try {
        if (m.at("format_version").get<int>() != kFormatVersion)
            throw IoError("unsupported demo format version in " + manifest_path.string());
        ds.history = m.at("history").get<int>();
        ds.seed = m.at("seed").get<std::uint64_t>();
        ds.task = task_from_json(m.at("task"));
        ds.expert.lambda = m.at("expert").at("lambda").get<double>();
        ds.expert.max_delta = m.at("expert").at("max_delta").get<double>();
        ds.expert.centering = m.at("expert").at("centering").get<double>();
        ds.action_noise = m.at("action_noise").get<double>();
        for (const auto& jg : m.at("embodiments")) {
            EmbodimentGraph g = from_json(jg);
            ds.maps.push_back(std::make_shared<DistanceMaps>(compute_distance_maps(g)));
            ds.dfs.push_back(dfs_linearize(g));
            ds.embodiments.push_back(std::move(g));
        }
        if (m.contains("excluded"))
            for (const auto& je : m.at("excluded")) {
                ds.excluded.push_back(je.at("name").get<std::string>());
                ds.excluded_errors.push_back(je.at("probe_error").get<double>());
            }

        std::ifstream is(bin_path, std::ios::binary);
        if (!is) throw IoError("cannot open records: " + bin_path.string());
        const auto& counts = m.at("records_per_embodiment");
        if (counts.size() != ds.embodiments.size())
            throw IoError("manifest embodiment/record-count mismatch in " +
                          manifest_path.string());
        for (std::size_t e = 0; e < ds.embodiments.size(); ++e) {
            const EmbodimentGraph& g = ds.embodiments[e];
            const ChainLayout lay = chain_layout(g);
            const int J = g.joint_count();
            const std::int64_t n = counts.at(e).get<std::int64_t>();
            const std::int64_t width = record_doubles(J, ds.history);
            std::vector<double> buf(static_cast<std::size_t>(width));
            for (std::int64_t i = 0; i < n; ++i) {
                is.read(reinterpret_cast<char*>(buf.data()),
                        static_cast<std::streamsize>(buf.size() * sizeof(double)));
                if (!is)
                    throw IoError("truncated record file: " + bin_path.string() + " (embodiment " +
                                  g.name + ", record " + std::to_string(i) + ")");
                DemoRecord r;
                r.embodiment = static_cast<int>(e);
                std::size_t w = 0;
                for (int k = 0; k <= ds.history; ++k) {
                    ObservationFrame f;
                    f.phase = buf[w++];
                    f.joint_angles.assign(buf.begin() + static_cast<std::ptrdiff_t>(w),
                                          buf.begin() + static_cast<std::ptrdiff_t>(w + J));
                    w += static_cast<std::size_t>(J);
                    f.target_states.assign(buf.begin() + static_cast<std::ptrdiff_t>(w),
                                           buf.begin() + static_cast<std::ptrdiff_t>(w + J));
                    w += static_cast<std::size_t>(J);
                    r.history.push_back(std::move(f));
                }
                r.actions.assign(buf.begin() + static_cast<std::ptrdiff_t>(w),
                                 buf.begin() + static_cast<std::ptrdiff_t>(w + J));
                w += static_cast<std::size_t>(J);
                r.fk.assign(buf.begin() + static_cast<std::ptrdiff_t>(w),
                            buf.begin() + static_cast<std::ptrdiff_t>(w + 2 * J));

                // Every stored FK target must reproduce under the oracle.
                const FkState st = forward_kinematics(g, lay, r.history[0].joint_angles);
                for (int j = 0; j < J; ++j) {
                    if (std::abs(st.pos[static_cast<std::size_t>(j)][0] -
                                 r.fk[static_cast<std::size_t>(2 * j)]) > 1e-9 ||
                        std::abs(st.pos[static_cast<std::size_t>(j)][1] -
                                 r.fk[static_cast<std::size_t>(2 * j + 1)]) > 1e-9)
                        throw IoError("FK target mismatch in " + bin_path.string() +
                                      " (embodiment " + g.name + ", record " + std::to_string(i) +
                                      ", joint " + std::to_string(j) + ")");
                }
                ds.records.push_back(std::move(r));
            }
        }
        char extra;
        if (is.read(&extra, 1))
            throw IoError("trailing bytes in record file: " + bin_path.string());
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    return ds;
}

}  // namespace demo_io

}  // namespace get
