#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "get/graph.hpp"
#include "get/task.hpp"
#include "get/tensor.hpp"

namespace get {

// Per-joint token layout, fixed for all embodiments:
//   o_vg  2*(H+1)  sin/cos of the cycle phase, newest frame first
//   o_fg  1        task id scalar, constant 0 here
//   o_vl  4*(H+1)  per frame: normalized joint angle, normalized commanded
//                  angle, and the unit direction of the owning chain's target
//                  around its base
//   o_fl  8        offset from parent (2), offset angle (1), link length (1),
//                  joint limits (2), chain-root base position (2)
inline constexpr int kFixedLocalWidth = 8;

inline constexpr int token_width(int history) {
    return 2 * (history + 1) + 1 + 4 * (history + 1) + kFixedLocalWidth;
}

inline double normalize_to_limits(double value, double lo, double hi) {
    return 2.0 * (value - lo) / (hi - lo) - 1.0;
}

// Builds the J×F token matrix for one observation-history window. History is
// ordered newest-first; windows shorter than H+1 frames (episode start) are
// padded by repeating the oldest frame. The target direction is recomputed
// from each frame's phase, so stored observations stay compact.
inline Tensor build_tokens(const EmbodimentGraph& graph, const TaskSpec& task,
                           const std::vector<ObservationFrame>& history, int H) {
    if (history.empty()) throw ShapeError("build_tokens: empty history");
    const int J = graph.joint_count();
    for (const ObservationFrame& f : history) {
        if (static_cast<int>(f.joint_angles.size()) != J ||
            static_cast<int>(f.target_states.size()) != J)
            throw ShapeError("build_tokens: frame carries " +
                             std::to_string(f.joint_angles.size()) + " joints, embodiment " +
                             graph.name + " has " + std::to_string(J));
    }
    const int F = token_width(H);
    const double two_pi = 2.0 * std::acos(-1.0);
    Tensor out = Tensor::zeros({J, F});

    std::vector<Vec2> base(static_cast<std::size_t>(J));
    std::vector<int> chain(static_cast<std::size_t>(J));
    const std::vector<int> roots = graph.roots();
    for (int j = 0; j < J; ++j) {
        const std::vector<int> path = graph.ancestry_path(j);
        base[static_cast<std::size_t>(j)] = graph.joints[static_cast<std::size_t>(path[0])].offset;
        const auto it = std::find(roots.begin(), roots.end(), path[0]);
        chain[static_cast<std::size_t>(j)] = static_cast<int>(it - roots.begin());
    }

    auto frame_at = [&](int k) -> const ObservationFrame& {
        const std::size_t idx = std::min<std::size_t>(static_cast<std::size_t>(k),
                                                      history.size() - 1);
        return history[idx];
    };

    for (int j = 0; j < J; ++j) {
        double* row = out.data.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(F);
        int w = 0;
        for (int k = 0; k <= H; ++k) {
            row[w++] = std::sin(two_pi * frame_at(k).phase);
            row[w++] = std::cos(two_pi * frame_at(k).phase);
        }
        row[w++] = 0.0;  // o_fg
        const JointSpec& js = graph.joints[static_cast<std::size_t>(j)];
        for (int k = 0; k <= H; ++k) {
            const ObservationFrame& f = frame_at(k);
            row[w++] = normalize_to_limits(f.joint_angles[static_cast<std::size_t>(j)],
                                           js.limits[0], js.limits[1]);
            row[w++] = normalize_to_limits(f.target_states[static_cast<std::size_t>(j)],
                                           js.limits[0], js.limits[1]);
            const double theta = task.swing_amplitude *
                std::sin(two_pi * (f.phase + task.phase_offset_step *
                                                 static_cast<double>(chain[static_cast<std::size_t>(j)])));
            row[w++] = std::cos(theta);
            row[w++] = std::sin(theta);
        }
        row[w++] = js.offset[0];
        row[w++] = js.offset[1];
        row[w++] = std::atan2(js.offset[1], js.offset[0]);
        row[w++] = js.link_length;
        row[w++] = js.limits[0];
        row[w++] = js.limits[1];
        row[w++] = base[static_cast<std::size_t>(j)][0];
        row[w++] = base[static_cast<std::size_t>(j)][1];
    }
    return out;
}

// One training or inference sample before batching. Labels are optional;
// rollouts collate label-free samples.
struct Sample {
    Tensor tokens;  // J×F from build_tokens
    std::shared_ptr<const DistanceMaps> maps;
    std::vector<int> dfs_positions;  // canonical linearization ranks
    std::vector<double> actions;     // J expert deltas (empty if unlabeled)
    std::vector<double> fk;          // 2J joint positions row-major (empty if unlabeled)
};

// Padded batch: masked-out rows are zero everywhere and every consumer
// multiplies through the mask, so pad values never leak into outputs.
struct TokenBatch {
    Tensor tokens;   // B×Jmax×F
    Tensor mask;     // B×Jmax, 1.0 for real joints
    Tensor actions;  // B×Jmax, zero-padded (only when has_labels)
    Tensor fk;       // B×Jmax×2, zero-padded (only when has_labels)
    bool has_labels = false;
    std::vector<std::shared_ptr<const DistanceMaps>> maps;
    std::vector<std::vector<int>> dfs_positions;
    std::vector<int> joint_counts;

    int batch_size() const { return static_cast<int>(joint_counts.size()); }
    int jmax() const { return static_cast<int>(tokens.dim(1)); }
};

inline TokenBatch collate(const std::vector<Sample>& samples) {
    if (samples.empty()) throw ShapeError("collate: empty sample list");
    const int B = static_cast<int>(samples.size());
    const int F = static_cast<int>(samples[0].tokens.dim(1));
    int jmax = 0;
    bool labeled = !samples[0].actions.empty();
    for (const Sample& s : samples) {
        if (s.tokens.rank() != 2 || s.tokens.dim(1) != F)
            throw ShapeError("collate: inconsistent token width");
        jmax = std::max(jmax, static_cast<int>(s.tokens.dim(0)));
        if (s.actions.empty() != samples[0].actions.empty())
            throw ShapeError("collate: mixed labeled and unlabeled samples");
    }
    TokenBatch batch;
    batch.tokens = Tensor::zeros({B, jmax, F});
    batch.mask = Tensor::zeros({B, jmax});
    batch.has_labels = labeled;
    if (labeled) {
        batch.actions = Tensor::zeros({B, jmax});
        batch.fk = Tensor::zeros({B, jmax, 2});
    }
    for (int b = 0; b < B; ++b) {
        const Sample& s = samples[static_cast<std::size_t>(b)];
        const int J = static_cast<int>(s.tokens.dim(0));
        if (!s.maps || s.maps->n != J)
            throw ShapeError("collate: sample " + std::to_string(b) +
                             " distance maps do not match its joint count");
        if (static_cast<int>(s.dfs_positions.size()) != J)
            throw ShapeError("collate: sample " + std::to_string(b) +
                             " dfs positions do not match its joint count");
        if (labeled && (static_cast<int>(s.actions.size()) != J ||
                        static_cast<int>(s.fk.size()) != 2 * J))
            throw ShapeError("collate: sample " + std::to_string(b) + " label sizes mismatch");
        std::copy(s.tokens.data.begin(), s.tokens.data.end(),
                  batch.tokens.data.begin() +
                      static_cast<std::size_t>(b) * static_cast<std::size_t>(jmax * F));
        for (int j = 0; j < J; ++j)
            batch.mask.data[static_cast<std::size_t>(b * jmax + j)] = 1.0;
        if (labeled) {
            for (int j = 0; j < J; ++j) {
                batch.actions.data[static_cast<std::size_t>(b * jmax + j)] =
                    s.actions[static_cast<std::size_t>(j)];
                batch.fk.data[static_cast<std::size_t>((b * jmax + j) * 2)] =
                    s.fk[static_cast<std::size_t>(2 * j)];
                batch.fk.data[static_cast<std::size_t>((b * jmax + j) * 2 + 1)] =
                    s.fk[static_cast<std::size_t>(2 * j + 1)];
            }
        }
        batch.maps.push_back(s.maps);
        batch.dfs_positions.push_back(s.dfs_positions);
        batch.joint_counts.push_back(J);
    }
    return batch;
}

}  // namespace get
