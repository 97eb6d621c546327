#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "get/graph.hpp"
#include "get/kinematics.hpp"
#include "get/rng.hpp"

namespace get {

// The fingertip-tracking task: every chain chases a point sweeping an arc of
// fixed radius in front of the chain's base, all chains phase-locked to one
// cycle with fixed per-chain offsets. The arc keeps targets inside every
// catalog chain's reachable sector (a full orbit would cross regions the
// joint limits rule out). One episode covers an integer number of cycles.
struct TaskSpec {
    double dt = 0.02;              // seconds per control step
    int cycle_period = 100;        // steps per target sweep cycle
    int episode_length = 100;      // steps per episode
    int burn_in = 40;              // steps excluded from the tracking metric
    double target_radius = 1.5;    // target distance from the chain base, length units
    double swing_amplitude = 1.0;  // arc half-angle around the rest direction, radians
    double phase_offset_step = 0.25;  // per-chain phase offset increment
    double pd_alpha = 0.7;         // first-order tracking rate of the plant
    double max_delta = 0.1;        // per-step delta-target clamp, radians
    double init_limit_fraction = 0.8;  // initial angles within this central band
    int history = 2;               // H: past frames kept alongside the current one

    void check() const {
        if (cycle_period < 2) throw ConfigError("cycle_period must be at least 2");
        if (episode_length < 1 || episode_length % cycle_period != 0)
            throw ConfigError("episode_length must be a positive multiple of cycle_period");
        if (burn_in < 0 || burn_in >= episode_length)
            throw ConfigError("burn_in must lie inside the episode");
        if (!(target_radius > 0.0)) throw ConfigError("target_radius must be positive");
        if (!(swing_amplitude > 0.0) || swing_amplitude > 2.0)
            throw ConfigError("swing_amplitude must be in (0, 2] radians");
        if (!(pd_alpha > 0.0 && pd_alpha <= 1.0)) throw ConfigError("pd_alpha must be in (0, 1]");
        if (!(max_delta > 0.0)) throw ConfigError("max_delta must be positive");
        if (init_limit_fraction < 0.0 || init_limit_fraction > 1.0)
            throw ConfigError("init_limit_fraction must be in [0, 1]");
        if (history < 0) throw ConfigError("history must be non-negative");
    }
};

// What a policy sees at one control step.
struct ObservationFrame {
    double phase = 0.0;                 // cycle progression in [0, 1)
    std::vector<double> joint_angles;   // radians
    std::vector<double> target_states;  // the running delta-target state, radians
};

inline Vec2 target_point(const TaskSpec& task, Vec2 chain_base, int chain_index, double phase) {
    const double cycle =
        2.0 * std::acos(-1.0) *
        (phase + task.phase_offset_step * static_cast<double>(chain_index));
    const double theta = task.swing_amplitude * std::sin(cycle);
    return {chain_base[0] + task.target_radius * std::cos(theta),
            chain_base[1] + task.target_radius * std::sin(theta)};
}

// Deterministic closed-loop plant. The policy emits per-joint delta targets;
// they integrate into a limit-clamped target state that the joints track
// with first-order dynamics (the PD-controller analog). Phase advances one
// cycle per cycle_period steps.
class TrackingEnv {
public:
    TrackingEnv(const EmbodimentGraph& graph, TaskSpec task, SplitRng rng)
        : graph_(graph), lay_(chain_layout(graph)), task_(task), rng_(rng) {
        task_.check();
        for (std::size_t c = 0; c < lay_.joints.size(); ++c) {
            // Straightened chain: non-root joints contribute their offset
            // from the parent, the leaf contributes its fingertip link.
            double reach = graph_.joints[static_cast<std::size_t>(lay_.leaves[c])].link_length;
            for (int j : lay_.joints[c])
                if (graph_.joints[static_cast<std::size_t>(j)].parent >= 0)
                    reach += norm(graph_.joints[static_cast<std::size_t>(j)].offset);
            if (task_.target_radius > reach + 1e-9)
                throw ConfigError("target radius " + std::to_string(task_.target_radius) +
                                  " exceeds reach " + std::to_string(reach) + " of chain " +
                                  std::to_string(c) + " in " + graph_.name);
        }
        reset();
    }

    const EmbodimentGraph& graph() const { return graph_; }
    const ChainLayout& layout() const { return lay_; }
    const TaskSpec& task() const { return task_; }
    int step_index() const { return t_; }
    double phase() const { return phase_; }
    const std::vector<double>& angles() const { return q_; }
    const std::vector<double>& target_state() const { return tau_; }

    // Fresh episode: random starting phase, angles drawn uniformly from the
    // central band of each joint's limit interval, target state aligned with
    // the angles.
    void reset() {
        t_ = 0;
        phase_ = rng_.uniform01();
        q_.resize(graph_.joints.size());
        for (std::size_t j = 0; j < q_.size(); ++j) {
            const auto& lim = graph_.joints[j].limits;
            const double mid = 0.5 * (lim[0] + lim[1]);
            const double half = 0.5 * (lim[1] - lim[0]) * task_.init_limit_fraction;
            q_[j] = mid + (rng_.uniform01() * 2.0 - 1.0) * half;
        }
        tau_ = q_;
    }

    ObservationFrame observe() const {
        ObservationFrame f;
        f.phase = phase_;
        f.joint_angles = q_;
        f.target_states = tau_;
        return f;
    }

    std::vector<Vec2> current_targets() const { return targets_at(phase_); }

    std::vector<Vec2> targets_at(double phase) const {
        std::vector<Vec2> out(lay_.joints.size());
        for (std::size_t c = 0; c < out.size(); ++c)
            out[c] = target_point(task_, lay_.base[c], static_cast<int>(c),
                                  phase - std::floor(phase));
        return out;
    }

    std::vector<Vec2> targets_next() const {
        return targets_at(phase_ + 1.0 / static_cast<double>(task_.cycle_period));
    }

    // Mean fingertip distance to the current targets.
    double tracking_error() const {
        const FkState st = forward_kinematics(graph_, lay_, q_);
        const std::vector<Vec2> tg = current_targets();
        double acc = 0.0;
        for (std::size_t c = 0; c < tg.size(); ++c) acc += norm(tg[c] - st.tip[c]);
        return acc / static_cast<double>(tg.size());
    }

    void step(const std::vector<double>& delta) {
        if (delta.size() != q_.size())
            throw ShapeError("env step: got " + std::to_string(delta.size()) + " deltas for " +
                             std::to_string(q_.size()) + " joints");
        for (std::size_t j = 0; j < q_.size(); ++j) {
            const double d = std::clamp(delta[j], -task_.max_delta, task_.max_delta);
            const auto& lim = graph_.joints[j].limits;
            tau_[j] = std::clamp(tau_[j] + d, lim[0], lim[1]);
            q_[j] += task_.pd_alpha * (tau_[j] - q_[j]);
        }
        phase_ += 1.0 / static_cast<double>(task_.cycle_period);
        phase_ -= std::floor(phase_);
        t_ += 1;
    }

private:
    EmbodimentGraph graph_;
    ChainLayout lay_;
    TaskSpec task_;
    SplitRng rng_;
    int t_ = 0;
    double phase_ = 0.0;
    std::vector<double> q_, tau_;
};

// Policy interface shared by the analytic expert and trained models: history
// is ordered newest-first and never exceeds H+1 frames.
class Policy {
public:
    virtual ~Policy() = default;
    virtual std::vector<double> act(const TrackingEnv& env,
                                    const std::vector<ObservationFrame>& history) = 0;
};

// Damped-least-squares expert aiming each fingertip at the next-step target.
class ExpertPolicy : public Policy {
public:
    explicit ExpertPolicy(DlsConfig cfg = {}) : cfg_(cfg) {}

    std::vector<double> act(const TrackingEnv& env,
                            const std::vector<ObservationFrame>& history) override {
        (void)history;
        return dls_deltas(env.graph(), env.layout(), env.angles(), env.targets_next(), cfg_);
    }

private:
    DlsConfig cfg_;
};

struct EpisodeResult {
    double mean_error = 0.0;  // mean tracking error over the post-burn-in window
    int drop_steps = 0;       // steps whose error exceeded the target radius
    bool failed = false;      // non-finite action encountered
};

// One closed-loop episode. Every step the callback (if any) sees the history
// window, the action taken, and the pre-action state, which is how the demo
// recorder taps the stream. The tracking error is measured on the pre-action
// state of each step.
inline EpisodeResult run_episode(
    TrackingEnv& env, Policy& policy,
    const std::function<void(const std::vector<ObservationFrame>&, const std::vector<double>&,
                             const TrackingEnv&)>& on_step = nullptr) {
    const TaskSpec& task = env.task();
    std::deque<ObservationFrame> frames;
    EpisodeResult result;
    double acc = 0.0;
    int counted = 0;
    for (int t = 0; t < task.episode_length; ++t) {
        frames.push_front(env.observe());
        while (frames.size() > static_cast<std::size_t>(task.history) + 1) frames.pop_back();
        const std::vector<ObservationFrame> history(frames.begin(), frames.end());
        std::vector<double> action = policy.act(env, history);
        for (double a : action) {
            if (!std::isfinite(a)) {
                result.failed = true;
                break;
            }
        }
        if (result.failed) break;
        const double err = env.tracking_error();
        if (t >= task.burn_in) {
            acc += err;
            counted += 1;
        }
        if (err > task.target_radius) result.drop_steps += 1;
        if (on_step) on_step(history, action, env);
        env.step(action);
    }
    result.mean_error = counted > 0 ? acc / static_cast<double>(counted)
                                    : std::numeric_limits<double>::quiet_NaN();
    if (result.failed) result.mean_error = std::numeric_limits<double>::quiet_NaN();
    return result;
}

}  // namespace get
