#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "get/common.hpp"

namespace get {

// One revolute joint in the plane. The joint frame sits at `offset` from its
// parent joint frame (rotated by the parent's cumulative angle); a rigid link
// of `link_length` extends along the joint's local x axis once the joint
// angle is applied.
struct JointSpec {
    int parent = -1;  // -1 for a chain root
    std::array<double, 2> offset{0.0, 0.0};
    double link_length = 1.0;
    std::array<double, 2> limits{-1.8, 1.8};
};

// A hand-like embodiment: a forest of kinematic chains whose roots are tied
// together by undirected structural edges forming a path across the palm.
struct EmbodimentGraph {
    std::string name;
    std::vector<JointSpec> joints;
    std::vector<std::pair<int, int>> root_edges;

    int joint_count() const { return static_cast<int>(joints.size()); }

    bool is_root(int j) const { return joints[static_cast<std::size_t>(j)].parent < 0; }

    std::vector<int> roots() const {
        std::vector<int> out;
        for (int j = 0; j < joint_count(); ++j)
            if (is_root(j)) out.push_back(j);
        return out;
    }

    std::vector<std::vector<int>> children() const {
        std::vector<std::vector<int>> out(joints.size());
        for (int j = 0; j < joint_count(); ++j) {
            const int p = joints[static_cast<std::size_t>(j)].parent;
            if (p >= 0) out[static_cast<std::size_t>(p)].push_back(j);
        }
        for (auto& c : out) std::sort(c.begin(), c.end());
        return out;
    }

    // Joints from the chain root down to j, inclusive.
    std::vector<int> ancestry_path(int j) const {
        std::vector<int> path;
        int cur = j;
        while (cur >= 0) {
            path.push_back(cur);
            cur = joints[static_cast<std::size_t>(cur)].parent;
            if (path.size() > joints.size())
                throw StructuralError("parent chain cycle at joint " + std::to_string(j) +
                                      " in embodiment " + name);
        }
        std::reverse(path.begin(), path.end());
        return path;
    }
};

// Validates the structural invariants and throws StructuralError naming the
// embodiment and the offending joint or edge on the first violation.
inline void validate(const EmbodimentGraph& g) {
    const int n = g.joint_count();
    if (n < 1) throw StructuralError("embodiment " + g.name + " has no joints");
    for (int j = 0; j < n; ++j) {
        const JointSpec& js = g.joints[static_cast<std::size_t>(j)];
        if (js.parent >= n || js.parent == j)
            throw StructuralError("embodiment " + g.name + ": joint " + std::to_string(j) +
                                  " has invalid parent " + std::to_string(js.parent));
        if (js.link_length < 0.0)
            throw StructuralError("embodiment " + g.name + ": joint " + std::to_string(j) +
                                  " has negative link length");
        if (!(js.limits[0] < js.limits[1]))
            throw StructuralError("embodiment " + g.name + ": joint " + std::to_string(j) +
                                  " has empty limit interval");
    }
    // Forest check: walking parents from every joint must terminate.
    for (int j = 0; j < n; ++j) (void)g.ancestry_path(j);

    const std::vector<int> roots = g.roots();
    std::vector<int> root_degree(static_cast<std::size_t>(n), 0);
    for (const auto& [a, b] : g.root_edges) {
        if (a < 0 || a >= n || b < 0 || b >= n || a == b)
            throw StructuralError("embodiment " + g.name + ": malformed root edge (" +
                                  std::to_string(a) + ", " + std::to_string(b) + ")");
        if (!g.is_root(a) || !g.is_root(b))
            throw StructuralError("embodiment " + g.name + ": root edge (" + std::to_string(a) +
                                  ", " + std::to_string(b) + ") touches a non-root joint");
        root_degree[static_cast<std::size_t>(a)] += 1;
        root_degree[static_cast<std::size_t>(b)] += 1;
    }
    if (g.root_edges.size() + 1 != roots.size())
        throw StructuralError("embodiment " + g.name + ": " + std::to_string(g.root_edges.size()) +
                              " root edges cannot form a path over " +
                              std::to_string(roots.size()) + " chain roots");
    for (int r : roots)
        if (root_degree[static_cast<std::size_t>(r)] > 2)
            throw StructuralError("embodiment " + g.name + ": root " + std::to_string(r) +
                                  " has root-edge degree > 2");

    // Connectivity over the union of parent-child and root edges.
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        const int p = g.joints[static_cast<std::size_t>(j)].parent;
        if (p >= 0) {
            adj[static_cast<std::size_t>(j)].push_back(p);
            adj[static_cast<std::size_t>(p)].push_back(j);
        }
    }
    for (const auto& [a, b] : g.root_edges) {
        adj[static_cast<std::size_t>(a)].push_back(b);
        adj[static_cast<std::size_t>(b)].push_back(a);
    }
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::deque<int> queue{0};
    seen[0] = 1;
    int reached = 0;
    while (!queue.empty()) {
        const int u = queue.front();
        queue.pop_front();
        reached += 1;
        for (int v : adj[static_cast<std::size_t>(u)]) {
            if (!seen[static_cast<std::size_t>(v)]) {
                seen[static_cast<std::size_t>(v)] = 1;
                queue.push_back(v);
            }
        }
    }
    if (reached != n)
        throw StructuralError("embodiment " + g.name + " is disconnected (" +
                              std::to_string(reached) + " of " + std::to_string(n) +
                              " joints reachable)");
}

// Pairwise relations consumed by the attention bias tables. spd holds
// shortest-path distances over the undirected structural graph; parent_of
// and child_of hold the distance gated by ancestry direction (zero when the
// relation does not hold).
struct DistanceMaps {
    int n = 0;
    std::vector<int> spd;        // n*n, row major
    std::vector<int> parent_of;  // d(i,j) when i is a proper ancestor of j
    std::vector<int> child_of;   // d(i,j) when i is a proper descendant of j

    int at_spd(int i, int j) const { return spd[static_cast<std::size_t>(i * n + j)]; }
    int at_parent(int i, int j) const { return parent_of[static_cast<std::size_t>(i * n + j)]; }
    int at_child(int i, int j) const { return child_of[static_cast<std::size_t>(i * n + j)]; }

    int max_spd() const {
        int m = 0;
        for (int d : spd) m = std::max(m, d);
        return m;
    }
};

inline DistanceMaps compute_distance_maps(const EmbodimentGraph& g) {
    validate(g);
    const int n = g.joint_count();
    DistanceMaps maps;
    maps.n = n;
    maps.spd.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0);
    maps.parent_of.assign(maps.spd.size(), 0);
    maps.child_of.assign(maps.spd.size(), 0);

    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        const int p = g.joints[static_cast<std::size_t>(j)].parent;
        if (p >= 0) {
            adj[static_cast<std::size_t>(j)].push_back(p);
            adj[static_cast<std::size_t>(p)].push_back(j);
        }
    }
    for (const auto& [a, b] : g.root_edges) {
        adj[static_cast<std::size_t>(a)].push_back(b);
        adj[static_cast<std::size_t>(b)].push_back(a);
    }

    std::vector<int> dist(static_cast<std::size_t>(n));
    for (int src = 0; src < n; ++src) {
        std::fill(dist.begin(), dist.end(), -1);
        dist[static_cast<std::size_t>(src)] = 0;
        std::deque<int> queue{src};
        while (!queue.empty()) {
            const int u = queue.front();
            queue.pop_front();
            for (int v : adj[static_cast<std::size_t>(u)]) {
                if (dist[static_cast<std::size_t>(v)] < 0) {
                    dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + 1;
                    queue.push_back(v);
                }
            }
        }
        for (int j = 0; j < n; ++j)
            maps.spd[static_cast<std::size_t>(src * n + j)] = dist[static_cast<std::size_t>(j)];
    }

    for (int j = 0; j < n; ++j) {
        int cur = g.joints[static_cast<std::size_t>(j)].parent;
        int hops = 1;
        while (cur >= 0) {
            // cur is a proper ancestor of j, `hops` edges up the chain.
            maps.parent_of[static_cast<std::size_t>(cur * n + j)] = hops;
            maps.child_of[static_cast<std::size_t>(j * n + cur)] = hops;
            cur = g.joints[static_cast<std::size_t>(cur)].parent;
            hops += 1;
        }
    }
    return maps;
}

// Chains ordered by ascending root joint index.
inline std::vector<int> root_order(const EmbodimentGraph& g) { return g.roots(); }

// Depth-first linearization used by the sequential positional encoding:
// chains are visited in ascending root index, and within a chain children
// are visited in ascending joint index. Returns position-in-sequence per
// joint. `reversed` flips the whole sequence, giving the opposite node
// order used by the order-sensitivity experiment.
inline std::vector<int> dfs_linearize(const EmbodimentGraph& g, bool reversed = false) {
    const std::vector<std::vector<int>> kids = g.children();
    std::vector<int> pos(g.joints.size(), -1);
    int next = 0;
    std::vector<int> stack;
    for (int root : g.roots()) {
        stack.push_back(root);
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            pos[static_cast<std::size_t>(u)] = next++;
            const auto& c = kids[static_cast<std::size_t>(u)];
            for (auto it = c.rbegin(); it != c.rend(); ++it) stack.push_back(*it);
        }
    }
    if (reversed) {
        const int last = next - 1;
        for (auto& p : pos) p = last - p;
    }
    return pos;
}

inline nlohmann::ordered_json to_json(const EmbodimentGraph& g) {
    nlohmann::ordered_json j;
    j["name"] = g.name;
    j["joints"] = nlohmann::ordered_json::array();
    for (const JointSpec& js : g.joints) {
        nlohmann::ordered_json jj;
        if (js.parent < 0)
            jj["parent"] = nullptr;
        else
            jj["parent"] = js.parent;
        jj["offset"] = {js.offset[0], js.offset[1]};
        jj["link_length"] = js.link_length;
        jj["limits"] = {js.limits[0], js.limits[1]};
        j["joints"].push_back(std::move(jj));
    }
    j["root_edges"] = nlohmann::ordered_json::array();
    for (const auto& [a, b] : g.root_edges) j["root_edges"].push_back({a, b});
    return j;
}

inline EmbodimentGraph from_json(const nlohmann::json& j) {
    EmbodimentGraph g;
    try {
        g.name = j.at("name").get<std::string>();
        for (const auto& jj : j.at("joints")) {
            JointSpec js;
            const auto& p = jj.at("parent");
            js.parent = p.is_null() ? -1 : p.get<int>();
            js.offset = {jj.at("offset").at(0).get<double>(), jj.at("offset").at(1).get<double>()};
            js.link_length = jj.at("link_length").get<double>();
            js.limits = {jj.at("limits").at(0).get<double>(), jj.at("limits").at(1).get<double>()};
            g.joints.push_back(js);
        }
        for (const auto& e : j.at("root_edges"))
            g.root_edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed embodiment json: ") + e.what());
    }
    validate(g);
    return g;
}

inline void save_embodiment(const std::filesystem::path& path, const EmbodimentGraph& g) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os << to_json(g).dump(2) << '\n';
    if (!os) throw IoError("short write: " + path.string());
}

inline EmbodimentGraph load_embodiment(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open embodiment file: " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("cannot parse " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

}  // namespace get
