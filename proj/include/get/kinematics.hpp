#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "get/graph.hpp"

namespace get {

using Vec2 = std::array<double, 2>;

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a[0] + b[0], a[1] + b[1]}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a[0] - b[0], a[1] - b[1]}; }
inline double norm(Vec2 v) { return std::hypot(v[0], v[1]); }
inline Vec2 perp(Vec2 v) { return {-v[1], v[0]}; }
inline Vec2 rotate(double angle, Vec2 v) {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * v[0] - s * v[1], s * v[0] + c * v[1]};
}

// Chain bookkeeping for a hand whose chains are simple paths: per-chain
// joint lists in root-to-leaf order, the fingertip joint of each chain, and
// the chain membership of every joint. Chains are ordered by root joint
// index, which matches construction slot order.
struct ChainLayout {
    std::vector<int> roots;
    std::vector<int> leaves;
    std::vector<std::vector<int>> joints;  // per chain, root first
    std::vector<int> chain_of;             // per joint
    std::vector<Vec2> base;                // per chain, root frame origin

    int chain_count() const { return static_cast<int>(roots.size()); }
};

inline ChainLayout chain_layout(const EmbodimentGraph& g) {
    ChainLayout lay;
    lay.roots = g.roots();
    lay.chain_of.assign(g.joints.size(), -1);
    const auto kids = g.children();
    for (std::size_t c = 0; c < lay.roots.size(); ++c) {
        int cur = lay.roots[c];
        std::vector<int> chain;
        while (true) {
            chain.push_back(cur);
            lay.chain_of[static_cast<std::size_t>(cur)] = static_cast<int>(c);
            const auto& ch = kids[static_cast<std::size_t>(cur)];
            if (ch.empty()) break;
            if (ch.size() > 1)
                throw StructuralError("embodiment " + g.name + ": joint " + std::to_string(cur) +
                                      " branches; fingertip tracking needs simple chains");
            cur = ch[0];
        }
        lay.leaves.push_back(chain.back());
        lay.base.push_back(g.joints[static_cast<std::size_t>(lay.roots[c])].offset);
        lay.joints.push_back(std::move(chain));
    }
    return lay;
}

// Planar forward kinematics. Joint angles accumulate along the ancestry; a
// child frame sits at its offset rotated into the parent's link frame. The
// fingertip extends from the leaf joint along its rotated link.
struct FkState {
    std::vector<double> cum;  // cumulative angle per joint
    std::vector<Vec2> pos;    // joint origin per joint
    std::vector<Vec2> tip;    // fingertip per chain
};

inline FkState forward_kinematics(const EmbodimentGraph& g, const ChainLayout& lay,
                                  const std::vector<double>& q) {
    if (q.size() != g.joints.size())
        throw ShapeError("forward_kinematics: got " + std::to_string(q.size()) +
                         " angles for " + std::to_string(g.joints.size()) + " joints");
    FkState st;
    st.cum.assign(g.joints.size(), 0.0);
    st.pos.assign(g.joints.size(), Vec2{0.0, 0.0});
    st.tip.assign(lay.joints.size(), Vec2{0.0, 0.0});
    for (std::size_t c = 0; c < lay.joints.size(); ++c) {
        for (int j : lay.joints[c]) {
            const JointSpec& js = g.joints[static_cast<std::size_t>(j)];
            if (js.parent < 0) {
                st.cum[static_cast<std::size_t>(j)] = q[static_cast<std::size_t>(j)];
                st.pos[static_cast<std::size_t>(j)] = js.offset;
            } else {
                const std::size_t p = static_cast<std::size_t>(js.parent);
                st.cum[static_cast<std::size_t>(j)] = st.cum[p] + q[static_cast<std::size_t>(j)];
                st.pos[static_cast<std::size_t>(j)] = st.pos[p] + rotate(st.cum[p], js.offset);
            }
        }
        const int leaf = lay.leaves[c];
        st.tip[c] = st.pos[static_cast<std::size_t>(leaf)] +
                    rotate(st.cum[static_cast<std::size_t>(leaf)],
                           {g.joints[static_cast<std::size_t>(leaf)].link_length, 0.0});
    }
    return st;
}

// Fingertip Jacobian for one chain: column k is the instantaneous tip
// velocity per unit rate of chain joint k, the perpendicular of the lever
// arm from that joint to the tip.
inline std::vector<Vec2> tip_jacobian(const ChainLayout& lay, const FkState& st, int chain) {
    const auto& joints = lay.joints[static_cast<std::size_t>(chain)];
    std::vector<Vec2> cols(joints.size());
    const Vec2 tip = st.tip[static_cast<std::size_t>(chain)];
    for (std::size_t k = 0; k < joints.size(); ++k)
        cols[k] = perp(tip - st.pos[static_cast<std::size_t>(joints[k])]);
    return cols;
}

// Damped least squares step toward per-chain targets. The normal equations
// are only 2x2 per chain, so the damped inverse is closed form. Deltas are
// clipped to the actuation budget per joint.
//
// Redundant chains can fold into limit-saturated zigzags where the raw step
// stalls (the task-space direction presses every joint deeper into its
// limit). A mid-range centering term projected through the damped null
// space unfolds such configurations without disturbing the fingertip; it is
// gated by the task error so it vanishes once the tip sits on target.
struct DlsConfig {
    double lambda = 0.1;
    double max_delta = 0.1;
    double centering = 0.3;  // null-space mid-range pull, per unit task error
};

inline std::vector<double> dls_deltas(const EmbodimentGraph& g, const ChainLayout& lay,
                                      const std::vector<double>& q,
                                      const std::vector<Vec2>& targets, const DlsConfig& cfg = {}) {
    if (targets.size() != lay.joints.size())
        throw ShapeError("dls_deltas: got " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(lay.joints.size()) + " chains");
    const FkState st = forward_kinematics(g, lay, q);
    std::vector<double> delta(q.size(), 0.0);
    for (std::size_t c = 0; c < lay.joints.size(); ++c) {
        const std::vector<Vec2> jac = tip_jacobian(lay, st, static_cast<int>(c));
        const Vec2 e = targets[c] - st.tip[c];
        double a00 = cfg.lambda * cfg.lambda, a01 = 0.0, a11 = cfg.lambda * cfg.lambda;
        for (const Vec2& col : jac) {
            a00 += col[0] * col[0];
            a01 += col[0] * col[1];
            a11 += col[1] * col[1];
        }
        const double det = a00 * a11 - a01 * a01;
        const double u0 = (a11 * e[0] - a01 * e[1]) / det;
        const double u1 = (a00 * e[1] - a01 * e[0]) / det;
        const auto& joints = lay.joints[c];
        const double gate = cfg.centering * std::min(1.0, norm(e));
        std::vector<double> nullward(joints.size(), 0.0);
        if (gate > 0.0) {
            // v = mid - q, pushed through I - J+ J with the same damped inverse.
            Vec2 jv{0.0, 0.0};
            std::vector<double> v(joints.size());
            for (std::size_t k = 0; k < joints.size(); ++k) {
                const auto& lim = g.joints[static_cast<std::size_t>(joints[k])].limits;
                v[k] = 0.5 * (lim[0] + lim[1]) - q[static_cast<std::size_t>(joints[k])];
                jv[0] += jac[k][0] * v[k];
                jv[1] += jac[k][1] * v[k];
            }
            const double w0 = (a11 * jv[0] - a01 * jv[1]) / det;
            const double w1 = (a00 * jv[1] - a01 * jv[0]) / det;
            for (std::size_t k = 0; k < joints.size(); ++k)
                nullward[k] = v[k] - (jac[k][0] * w0 + jac[k][1] * w1);
        }
        for (std::size_t k = 0; k < joints.size(); ++k) {
            double d = jac[k][0] * u0 + jac[k][1] * u1 + gate * nullward[k];
            d = std::clamp(d, -cfg.max_delta, cfg.max_delta);
            delta[static_cast<std::size_t>(joints[k])] = d;
        }
    }
    return delta;
}

}  // namespace get
