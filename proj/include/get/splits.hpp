#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "get/dataset.hpp"
#include "get/variants.hpp"

namespace get {

struct SplitSpec {
    int train = 24;
    int new_graph = 12;
    int new_geo = 12;        // geometry-extended training graphs
    int new_graph_geo = 12;  // geometry-extended held-out graphs
    double extension_fraction = 0.25;
};

struct SplitResult {
    std::vector<EmbodimentGraph> train;
    std::vector<EmbodimentGraph> new_graph;
    std::vector<EmbodimentGraph> new_geo;
    std::vector<EmbodimentGraph> new_graph_geo;
    std::vector<std::string> probe_failures;  // pool graphs the expert cannot drive
};

// Partitions a pool of candidate embodiments into the four evaluation
// splits. Assignment is a seeded hash order over names, so the same pool and
// seed always produce the same partition regardless of input order. The two
// geometry splits extend source graphs joint-by-joint and re-probe, walking
// further down the source list when an extension fails the probe. All four
// splits are disjoint by name (extensions carry a suffix).
inline SplitResult make_splits(std::vector<EmbodimentGraph> pool, const TaskSpec& task,
                               std::uint64_t seed, const SplitSpec& spec = {}) {
    SplitResult out;
    std::vector<EmbodimentGraph> competent;
    for (EmbodimentGraph& g : pool) {
        if (competence_probe(g, task).passed)
            competent.push_back(std::move(g));
        else
            out.probe_failures.push_back(g.name);
    }
    std::sort(competent.begin(), competent.end(),
              [seed](const EmbodimentGraph& a, const EmbodimentGraph& b) {
                  const std::uint64_t ha = SplitRng::mix(seed ^ fnv1a64(a.name));
                  const std::uint64_t hb = SplitRng::mix(seed ^ fnv1a64(b.name));
                  return ha != hb ? ha < hb : a.name < b.name;
              });
    if (static_cast<int>(competent.size()) < spec.train + spec.new_graph)
        throw ConfigError("embodiment pool too small: " + std::to_string(competent.size()) +
                          " competent graphs for train=" + std::to_string(spec.train) +
                          " + new_graph=" + std::to_string(spec.new_graph));
    out.train.assign(competent.begin(), competent.begin() + spec.train);
    out.new_graph.assign(competent.begin() + spec.train,
                         competent.begin() + spec.train + spec.new_graph);

    SplitRng geo_root = SplitRng(seed).split("geometry");
    constexpr int kExtensionAttempts = 8;
    auto extend_from = [&](const std::vector<EmbodimentGraph>& sources, int want,
                           const char* label) {
        std::vector<EmbodimentGraph> picked;
        for (const EmbodimentGraph& src : sources) {
            if (static_cast<int>(picked.size()) >= want) break;
            // An unlucky joint draw can produce an extension the expert
            // cannot drive; re-roll a few times before giving up on the
            // source so a tight source list can still fill its split.
            for (int attempt = 0; attempt < kExtensionAttempts; ++attempt) {
                SplitRng stream = geo_root.split(src.name).split(attempt);
                EmbodimentGraph ext = extend_for_new_geo(src, spec.extension_fraction, stream);
                if (competence_probe(ext, task).passed) {
                    picked.push_back(std::move(ext));
                    break;
                }
                out.probe_failures.push_back(ext.name);
            }
        }
        if (static_cast<int>(picked.size()) < want)
            throw ConfigError(std::string("cannot fill ") + label + " split: only " +
                              std::to_string(picked.size()) + " of " + std::to_string(want) +
                              " extensions pass the probe");
        return picked;
    };
    out.new_geo = extend_from(out.train, spec.new_geo, "new_geo");
    out.new_graph_geo = extend_from(out.new_graph, spec.new_graph_geo, "new_graph_geo");
    return out;
}

}  // namespace get
