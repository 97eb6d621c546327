#pragma once

// Independent reference implementations the tests compare library results
// against. Everything here deliberately uses a different algorithm from the
// code under test: Floyd-Warshall instead of per-source BFS, complex-number
// kinematics instead of accumulated rotations, central differences instead
// of the reverse-mode tape.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <vector>

#include "get/autograd.hpp"
#include "get/graph.hpp"

namespace oracles {

inline constexpr int kUnreachable = std::numeric_limits<int>::max() / 4;

// All-pairs shortest paths over the undirected structural graph (parent
// edges plus root edges), O(n^3).
inline std::vector<int> floyd_warshall_spd(const get::EmbodimentGraph& g) {
    const int n = g.joint_count();
    std::vector<int> d(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), kUnreachable);
    auto at = [&](int i, int j) -> int& { return d[static_cast<std::size_t>(i * n + j)]; };
    for (int i = 0; i < n; ++i) at(i, i) = 0;
    for (int j = 0; j < n; ++j) {
        const int p = g.joints[static_cast<std::size_t>(j)].parent;
        if (p >= 0) at(j, p) = at(p, j) = 1;
    }
    for (const auto& [a, b] : g.root_edges) at(a, b) = at(b, a) = 1;
    for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (at(i, k) + at(k, j) < at(i, j)) at(i, j) = at(i, k) + at(k, j);
    return d;
}

// True when `anc` is a proper ancestor of `j` along parent pointers.
inline bool is_proper_ancestor(const get::EmbodimentGraph& g, int anc, int j) {
    int cur = g.joints[static_cast<std::size_t>(j)].parent;
    while (cur >= 0) {
        if (cur == anc) return true;
        cur = g.joints[static_cast<std::size_t>(cur)].parent;
    }
    return false;
}

// Planar FK through complex arithmetic: a frame is (origin, heading) with
// heading a unit complex number; a child frame sits at origin + heading *
// offset, rotated by its own joint angle.
struct ComplexFk {
    std::vector<std::complex<double>> pos;      // joint origins
    std::vector<std::complex<double>> heading;  // cumulative rotation per joint
    std::vector<std::complex<double>> tip;      // fingertip per chain, root-index order
};

inline ComplexFk complex_fk(const get::EmbodimentGraph& g, const std::vector<double>& q) {
    const int n = g.joint_count();
    ComplexFk out;
    out.pos.assign(static_cast<std::size_t>(n), {0.0, 0.0});
    out.heading.assign(static_cast<std::size_t>(n), {1.0, 0.0});
    // Parents precede children in the catalog layout, but walk ancestry
    // explicitly so the oracle works for any index order.
    std::function<void(int)> solve = [&](int j) {
        const get::JointSpec& js = g.joints[static_cast<std::size_t>(j)];
        const std::complex<double> rot = std::polar(1.0, q[static_cast<std::size_t>(j)]);
        if (js.parent < 0) {
            out.pos[static_cast<std::size_t>(j)] = {js.offset[0], js.offset[1]};
            out.heading[static_cast<std::size_t>(j)] = rot;
            return;
        }
        solve(js.parent);
        const std::size_t p = static_cast<std::size_t>(js.parent);
        out.pos[static_cast<std::size_t>(j)] =
            out.pos[p] + out.heading[p] * std::complex<double>(js.offset[0], js.offset[1]);
        out.heading[static_cast<std::size_t>(j)] = out.heading[p] * rot;
    };
    for (int j = 0; j < n; ++j) solve(j);
    // Fingertips: leaves in chain (root-index) order.
    std::vector<int> roots = g.roots();
    const auto kids = g.children();
    for (int r : roots) {
        int cur = r;
        while (!kids[static_cast<std::size_t>(cur)].empty())
            cur = kids[static_cast<std::size_t>(cur)][0];
        const get::JointSpec& js = g.joints[static_cast<std::size_t>(cur)];
        out.tip.push_back(out.pos[static_cast<std::size_t>(cur)] +
                          out.heading[static_cast<std::size_t>(cur)] *
                              std::complex<double>(js.link_length, 0.0));
    }
    return out;
}

// Central-difference gradient of a scalar-valued function of one tensor,
// evaluated entry by entry.
inline get::Tensor central_diff(const std::function<double(const get::Tensor&)>& f,
                                const get::Tensor& x, double eps = 1e-5) {
    get::Tensor grad = get::Tensor::zeros(x.shape);
    get::Tensor probe = x;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double saved = probe.data[i];
        probe.data[i] = saved + eps;
        const double hi = f(probe);
        probe.data[i] = saved - eps;
        const double lo = f(probe);
        probe.data[i] = saved;
        grad.data[i] = (hi - lo) / (2.0 * eps);
    }
    return grad;
}

// Worst relative disagreement between an analytic and a numeric gradient,
// with an absolute floor so zero gradients compare cleanly.
inline double max_rel_err(const get::Tensor& analytic, const get::Tensor& numeric) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.data.size(); ++i) {
        const double a = analytic.data[i];
        const double n = numeric.data[i];
        const double scale = std::max({1e-4, std::abs(a), std::abs(n)});
        worst = std::max(worst, std::abs(a - n) / scale);
    }
    return worst;
}

}  // namespace oracles
