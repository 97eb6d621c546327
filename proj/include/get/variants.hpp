#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "get/graph.hpp"
#include "get/rng.hpp"

namespace get {

// One way a chain slot can be populated: a code letter used in embodiment
// names and the link lengths of the chain's joints (empty = slot absent).
struct ChainVariant {
    std::string code;
    std::vector<double> links;

    int joint_count() const { return static_cast<int>(links.size()); }
};

// The procedural hand family: one thumb slot plus a row of main finger
// slots, each drawn from a small variant list. Chains sit side by side with
// a fixed spacing; chain roots are tied into a path across the palm.
struct HandCatalog {
    std::vector<ChainVariant> thumb;
    std::vector<ChainVariant> finger;
    int main_slots = 3;
    double chain_spacing = 2.5;
    std::array<double, 2> joint_limits{-2.4, 2.4};

    // Thumb: full or absent. Main fingers: full, distal segment removed,
    // middle joint removed with its two segments fused, two-joint stub, or
    // absent.
    static HandCatalog standard() {
        HandCatalog c;
        c.thumb = {
            {"T", {1.0, 1.0, 1.0, 1.0}},
            {"N", {}},
        };
        c.finger = {
            {"F", {1.0, 1.0, 1.0, 1.0}},
            {"D", {1.0, 1.0, 1.0}},
            {"M", {1.0, 2.0, 1.0}},
            {"S", {1.0, 1.0}},
            {"N", {}},
        };
        return c;
    }

    std::int64_t combo_count() const {
        std::int64_t n = static_cast<std::int64_t>(thumb.size());
        for (int s = 0; s < main_slots; ++s) n *= static_cast<std::int64_t>(finger.size());
        return n;
    }
};

// Capability filters applied to each slot assignment. The two-joint rule has
// two defensible readings of "a finger with two joints"; both are
// implemented and the inclusive one is the default.
enum class TwoJointRule { AtLeastTwo, ExactlyTwo };

struct FilterRules {
    bool require_two_nonempty = true;  // at least two chains present
    bool require_capable_main = true;  // at least one main finger per the two-joint rule
    TwoJointRule two_joint_rule = TwoJointRule::AtLeastTwo;
};

struct EnumerationResult {
    std::vector<EmbodimentGraph> graphs;
    std::int64_t combo_count = 0;
    std::int64_t excluded_two_nonempty = 0;
    std::int64_t excluded_capable_main = 0;
    std::int64_t excluded = 0;  // union of the rule violations
};

namespace detail {

inline void append_chain(EmbodimentGraph& g, const std::vector<double>& links, double base_y,
                         const std::array<double, 2>& limits, std::vector<int>& chain_roots) {
    if (links.empty()) return;
    int prev = -1;
    for (std::size_t k = 0; k < links.size(); ++k) {
        JointSpec js;
        js.parent = prev;
        js.offset = prev < 0 ? std::array<double, 2>{0.0, base_y}
                             : std::array<double, 2>{links[k - 1], 0.0};
        js.link_length = links[k];
        js.limits = limits;
        g.joints.push_back(js);
        if (prev < 0) chain_roots.push_back(g.joint_count() - 1);
        prev = g.joint_count() - 1;
    }
}

}  // namespace detail

// Builds the embodiment for one slot assignment. Slot 0 is the thumb; main
// slots follow. Slot s keeps its base at (0, spacing*s) whether or not the
// neighbouring slots are populated, so a given finger always sees the same
// workspace. The assignment must populate at least one slot.
inline EmbodimentGraph build_hand(const HandCatalog& catalog, std::size_t thumb_choice,
                                  const std::vector<std::size_t>& finger_choices) {
    if (thumb_choice >= catalog.thumb.size())
        throw ConfigError("thumb variant index out of range");
    if (static_cast<int>(finger_choices.size()) != catalog.main_slots)
        throw ConfigError("expected " + std::to_string(catalog.main_slots) +
                          " finger choices, got " + std::to_string(finger_choices.size()));
    EmbodimentGraph g;
    g.name = "hand_" + catalog.thumb[thumb_choice].code + "_";
    std::vector<int> chain_roots;
    detail::append_chain(g, catalog.thumb[thumb_choice].links, 0.0, catalog.joint_limits,
                         chain_roots);
    for (int s = 0; s < catalog.main_slots; ++s) {
        const std::size_t choice = finger_choices[static_cast<std::size_t>(s)];
        if (choice >= catalog.finger.size())
            throw ConfigError("finger variant index out of range");
        g.name += catalog.finger[choice].code;
        detail::append_chain(g, catalog.finger[choice].links,
                             catalog.chain_spacing * static_cast<double>(s + 1),
                             catalog.joint_limits, chain_roots);
    }
    for (std::size_t i = 1; i < chain_roots.size(); ++i)
        g.root_edges.emplace_back(chain_roots[i - 1], chain_roots[i]);
    if (g.joints.empty())
        throw StructuralError("slot assignment populates no chains");
    validate(g);
    return g;
}

// Walks the full slot-assignment grid, applies the filters, and constructs a
// graph per surviving assignment. The combo count includes assignments that
// populate no slot even though such an assignment cannot become a graph;
// with any capability filter active those are excluded anyway.
inline EnumerationResult enumerate_hand_variants(const HandCatalog& catalog,
                                                 const FilterRules& rules = {}) {
    EnumerationResult result;
    const std::size_t nf = catalog.finger.size();
    std::vector<std::size_t> choices(static_cast<std::size_t>(catalog.main_slots), 0);
    for (std::size_t t = 0; t < catalog.thumb.size(); ++t) {
        std::fill(choices.begin(), choices.end(), 0);
        while (true) {
            result.combo_count += 1;

            int nonempty = catalog.thumb[t].joint_count() > 0 ? 1 : 0;
            bool capable_main = false;
            int total_joints = catalog.thumb[t].joint_count();
            for (std::size_t c : choices) {
                const int jc = catalog.finger[c].joint_count();
                if (jc > 0) nonempty += 1;
                total_joints += jc;
                const bool capable = rules.two_joint_rule == TwoJointRule::AtLeastTwo ? jc >= 2
                                                                                      : jc == 2;
                capable_main = capable_main || capable;
            }
            const bool bad_nonempty = rules.require_two_nonempty && nonempty < 2;
            const bool bad_capable = rules.require_capable_main && !capable_main;
            if (bad_nonempty) result.excluded_two_nonempty += 1;
            if (bad_capable) result.excluded_capable_main += 1;
            if (bad_nonempty || bad_capable) {
                result.excluded += 1;
            } else if (total_joints > 0) {
                result.graphs.push_back(build_hand(catalog, t, choices));
            }

            // next assignment, rightmost slot fastest
            std::size_t s = choices.size();
            while (s > 0) {
                --s;
                choices[s] += 1;
                if (choices[s] < nf) break;
                choices[s] = 0;
                if (s == 0) goto next_thumb;
            }
            if (choices.empty()) break;
        }
    next_thumb:;
    }
    return result;
}

// Lengthens the links of the named joints by an additive `delta`: the
// joint's own link grows and so does the offset of any child riding on that
// link (its norm grows by delta, direction preserved). Structure, names and
// everything else stay untouched.
inline EmbodimentGraph apply_link_extension(const EmbodimentGraph& src,
                                            const std::vector<int>& joint_indices, double delta) {
    if (delta < 0.0) throw ConfigError("link extension delta must be non-negative");
    EmbodimentGraph g = src;
    const int n = g.joint_count();
    for (int j : joint_indices) {
        if (j < 0 || j >= n)
            throw ConfigError("link extension joint index " + std::to_string(j) +
                              " out of range for " + g.name);
        g.joints[static_cast<std::size_t>(j)].link_length += delta;
        for (int c = 0; c < n; ++c) {
            JointSpec& cs = g.joints[static_cast<std::size_t>(c)];
            if (cs.parent != j) continue;
            const double len = std::hypot(cs.offset[0], cs.offset[1]);
            if (len == 0.0) {
                cs.offset[0] += delta;
            } else {
                const double s = (len + delta) / len;
                cs.offset[0] *= s;
                cs.offset[1] *= s;
            }
        }
    }
    validate(g);
    return g;
}

// Geometry perturbation for held-out evaluation: each joint is selected with
// probability one half (at least one always ends up selected) and its link
// grows by `fraction` of its own length. The returned graph gets a name
// suffix so it never collides with its source embodiment.
inline EmbodimentGraph extend_for_new_geo(const EmbodimentGraph& src, double fraction,
                                          SplitRng& rng, const std::string& suffix = "_ext") {
    const int n = src.joint_count();
    std::vector<int> picked;
    for (int j = 0; j < n; ++j)
        if (rng.uniform01() < 0.5) picked.push_back(j);
    if (picked.empty()) picked.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(n))));
    EmbodimentGraph g = src;
    for (int j : picked)
        g = apply_link_extension(g, {j},
                                 fraction * src.joints[static_cast<std::size_t>(j)].link_length);
    g.name += suffix;
    return g;
}

}  // namespace get
