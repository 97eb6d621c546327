#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "get/autograd.hpp"
#include "get/optim.hpp"
#include "get/rng.hpp"
#include "get/tokenizer.hpp"

namespace get {

enum class PeVariant { NONE, DFS, GRAPH };

inline std::string to_string(PeVariant v) {
    switch (v) {
        case PeVariant::NONE: return "NONE";
        case PeVariant::DFS: return "DFS";
        case PeVariant::GRAPH: return "GRAPH";
    }
    throw ConfigError("unknown pe_variant");
}

inline PeVariant pe_variant_from_string(const std::string& s) {
    if (s == "NONE") return PeVariant::NONE;
    if (s == "DFS") return PeVariant::DFS;
    if (s == "GRAPH") return PeVariant::GRAPH;
    throw ConfigError("unknown pe_variant: " + s);
}

struct GetConfig {
    int d_model = 64;
    int n_heads = 4;
    int n_layers = 3;
    int d_ff = 128;
    int history = 2;        // H past frames alongside the current one
    int max_distance = 16;  // bias tables cover distances 0..max_distance
    int max_dfs_positions = 32;
    PeVariant pe_variant = PeVariant::GRAPH;
    bool use_spatial = true;
    bool use_parent_child = true;
    bool use_self_model = true;
    bool use_policy_loss = true;
    double self_model_weight = 0.1;  // auxiliary term, kept small next to the policy loss
    double max_delta = 0.1;          // policy head output range, radians

    void check() const {
        if (d_model < 1 || n_heads < 1 || n_layers < 1 || d_ff < 1)
            throw ConfigError("model dimensions must be positive");
        if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
        if (history < 0) throw ConfigError("history must be non-negative");
        if (max_distance < 1) throw ConfigError("max_distance must be at least 1");
        if (max_dfs_positions < 1) throw ConfigError("max_dfs_positions must be positive");
        if (!(max_delta > 0.0)) throw ConfigError("max_delta must be positive");
        if (!use_policy_loss && !use_self_model)
            throw ConfigError("at least one of the policy and self-model losses must be active");
    }

    int token_features() const { return token_width(history); }
    int head_dim() const { return d_model / n_heads; }
};

inline nlohmann::ordered_json to_json(const GetConfig& c) {
    nlohmann::ordered_json j;
    j["d_model"] = c.d_model;
    j["n_heads"] = c.n_heads;
    j["n_layers"] = c.n_layers;
    j["d_ff"] = c.d_ff;
    j["history"] = c.history;
    j["max_distance"] = c.max_distance;
    j["max_dfs_positions"] = c.max_dfs_positions;
    j["pe_variant"] = to_string(c.pe_variant);
    j["use_spatial"] = c.use_spatial;
    j["use_parent_child"] = c.use_parent_child;
    j["use_self_model"] = c.use_self_model;
    j["use_policy_loss"] = c.use_policy_loss;
    j["self_model_weight"] = c.self_model_weight;
    j["max_delta"] = c.max_delta;
    return j;
}

inline GetConfig get_config_from_json(const nlohmann::json& j) {
    GetConfig c;
    try {
        for (const auto& [key, val] : j.items()) {
            if (key == "d_model") c.d_model = val.get<int>();
            else if (key == "n_heads") c.n_heads = val.get<int>();
            else if (key == "n_layers") c.n_layers = val.get<int>();
            else if (key == "d_ff") c.d_ff = val.get<int>();
            else if (key == "history") c.history = val.get<int>();
            else if (key == "max_distance") c.max_distance = val.get<int>();
            else if (key == "max_dfs_positions") c.max_dfs_positions = val.get<int>();
            else if (key == "pe_variant") c.pe_variant = pe_variant_from_string(val.get<std::string>());
            else if (key == "use_spatial") c.use_spatial = val.get<bool>();
            else if (key == "use_parent_child") c.use_parent_child = val.get<bool>();
            else if (key == "use_self_model") c.use_self_model = val.get<bool>();
            else if (key == "use_policy_loss") c.use_policy_loss = val.get<bool>();
            else if (key == "self_model_weight") c.self_model_weight = val.get<double>();
            else if (key == "max_delta") c.max_delta = val.get<double>();
            else throw ConfigError("unknown model config key: " + key);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed model config: ") + e.what());
    }
    c.check();
    return c;
}

// The Graph Embodiment Transformer. Parameters live in a ParamStore; each
// forward pass copies them onto a fresh expression tape, so a frozen model
// is safely shareable across threads while training keeps single-writer
// discipline.
class GetModel {
public:
    GetModel(GetConfig config, std::uint64_t seed) : cfg_(config) {
        cfg_.check();
        SplitRng root(seed);
        const int d = cfg_.d_model, F = cfg_.token_features();
        auto gauss = [&](const std::string& name, std::vector<std::int64_t> shape, double stddev) {
            SplitRng stream = root.split(name);
            params_.add(name, Tensor::gaussian(std::move(shape), stddev, stream));
        };
        auto zeros = [&](const std::string& name, std::vector<std::int64_t> shape) {
            params_.add(name, Tensor::zeros(std::move(shape)));
        };
        auto ones = [&](const std::string& name, std::vector<std::int64_t> shape) {
            params_.add(name, Tensor::full(std::move(shape), 1.0));
        };

        gauss("embed.w", {F, d}, 1.0 / std::sqrt(static_cast<double>(F)));
        zeros("embed.b", {d});
        if (cfg_.pe_variant == PeVariant::DFS)
            gauss("dfs_pe", {cfg_.max_dfs_positions, d}, 0.02);
        const double wstd = 1.0 / std::sqrt(static_cast<double>(d));
        for (int l = 0; l < cfg_.n_layers; ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            ones(p + "ln1.g", {d});
            zeros(p + "ln1.b", {d});
            gauss(p + "attn.wq", {d, d}, wstd);
            zeros(p + "attn.bq", {d});
            gauss(p + "attn.wk", {d, d}, wstd);
            zeros(p + "attn.bk", {d});
            gauss(p + "attn.wv", {d, d}, wstd);
            zeros(p + "attn.bv", {d});
            gauss(p + "attn.wo", {d, d}, wstd);
            zeros(p + "attn.bo", {d});
            if (cfg_.pe_variant == PeVariant::GRAPH) {
                const std::int64_t tlen =
                    static_cast<std::int64_t>(cfg_.n_heads) * (cfg_.max_distance + 1);
                if (cfg_.use_spatial) zeros(p + "bias.spatial", {tlen});
                if (cfg_.use_parent_child) {
                    zeros(p + "bias.parent", {tlen});
                    zeros(p + "bias.child", {tlen});
                }
            }
            ones(p + "ln2.g", {d});
            zeros(p + "ln2.b", {d});
            gauss(p + "ff.w1", {d, cfg_.d_ff}, wstd);
            zeros(p + "ff.b1", {cfg_.d_ff});
            gauss(p + "ff.w2", {cfg_.d_ff, d}, 1.0 / std::sqrt(static_cast<double>(cfg_.d_ff)));
            zeros(p + "ff.b2", {d});
        }
        ones("final_ln.g", {d});
        zeros("final_ln.b", {d});
        gauss("policy.w", {d, 1}, 0.01);
        zeros("policy.b", {1});
        gauss("fk.w", {d, 2}, wstd);
        zeros("fk.b", {2});
    }

    GetModel(GetConfig config, ParamStore params) : cfg_(config), params_(std::move(params)) {
        cfg_.check();
    }

    const GetConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    struct Forward {
        ExprGraph tape;
        VarId actions = -1;       // B×Jmax, scaled to radians
        VarId actions_unit = -1;  // B×Jmax, tanh output before the max_delta scale
        VarId fk = -1;            // B×Jmax×2
        VarId loss = -1;          // scalar, set by add_loss
        VarId action_loss = -1;   // scalar (unweighted term), -1 when inactive
        VarId fk_loss = -1;       // scalar (unweighted term), -1 when inactive
        std::vector<VarId> param_ids;  // aligned with ParamStore order; -1 if absent
    };

    Forward forward(const TokenBatch& batch, bool reversed_dfs = false) const {
        const int B = batch.batch_size();
        const int Jm = batch.jmax();
        const int F = static_cast<int>(batch.tokens.dim(2));
        if (F != cfg_.token_features())
            throw ShapeError("forward: batch token width " + std::to_string(F) +
                             " does not match config width " +
                             std::to_string(cfg_.token_features()));
        const int d = cfg_.d_model, h = cfg_.n_heads, dh = cfg_.head_dim();

        Forward f;
        ExprGraph& eg = f.tape;
        f.param_ids.assign(params_.size(), -1);
        auto pid = [&](const std::string& name) -> VarId {
            const std::size_t i = params_.index_of(name);
            if (f.param_ids[i] < 0) f.param_ids[i] = eg.param(params_.value(i));
            return f.param_ids[i];
        };

        const VarId tokens = eg.input(batch.tokens);
        Tensor mask_rows = batch.mask;
        mask_rows.shape = {B, Jm, 1};
        const VarId mrows = eg.input(mask_rows);

        VarId x = eg.add(eg.matmul(tokens, pid("embed.w")), pid("embed.b"));
        if (cfg_.pe_variant == PeVariant::DFS) {
            std::vector<std::int64_t> idx(static_cast<std::size_t>(B) * static_cast<std::size_t>(Jm), 0);
            for (int b = 0; b < B; ++b) {
                const auto& pos = batch.dfs_positions[static_cast<std::size_t>(b)];
                const int J = batch.joint_counts[static_cast<std::size_t>(b)];
                for (int j = 0; j < J; ++j) {
                    int p = pos[static_cast<std::size_t>(j)];
                    if (reversed_dfs) p = J - 1 - p;
                    p = std::min(p, cfg_.max_dfs_positions - 1);
                    idx[static_cast<std::size_t>(b * Jm + j)] = p;
                }
            }
            x = eg.add(x, eg.reshape(eg.gather_rows(pid("dfs_pe"), std::move(idx)), {B, Jm, d}));
        }
        x = eg.mul(x, mrows);

        // Constant per-forward attention plumbing: key-keep mask and, for the
        // GRAPH variant, flat bias-table indices laid out [b][head][i][j].
        Tensor keep = Tensor::zeros({B, h, Jm, Jm});
        for (int b = 0; b < B; ++b)
            for (int hh = 0; hh < h; ++hh)
                for (int i = 0; i < Jm; ++i)
                    for (int j = 0; j < Jm; ++j)
                        keep.data[static_cast<std::size_t>(((b * h + hh) * Jm + i) * Jm + j)] =
                            batch.mask.data[static_cast<std::size_t>(b * Jm + j)];
        std::vector<std::int64_t> spd_idx, par_idx, chi_idx;
        if (cfg_.pe_variant == PeVariant::GRAPH) {
            const auto build = [&](std::vector<std::int64_t>& dst, auto&& dist_fn) {
                dst.assign(static_cast<std::size_t>(B) * static_cast<std::size_t>(h) *
                               static_cast<std::size_t>(Jm) * static_cast<std::size_t>(Jm),
                           0);
                std::size_t w = 0;
                for (int b = 0; b < B; ++b) {
                    const DistanceMaps& maps = *batch.maps[static_cast<std::size_t>(b)];
                    const int J = batch.joint_counts[static_cast<std::size_t>(b)];
                    for (int hh = 0; hh < h; ++hh) {
                        const std::int64_t base =
                            static_cast<std::int64_t>(hh) * (cfg_.max_distance + 1);
                        for (int i = 0; i < Jm; ++i)
                            for (int j = 0; j < Jm; ++j, ++w)
                                if (i < J && j < J)
                                    dst[w] = base + std::min(dist_fn(maps, i, j), cfg_.max_distance);
                                else
                                    dst[w] = base;
                    }
                }
            };
            if (cfg_.use_spatial)
                build(spd_idx, [](const DistanceMaps& m, int i, int j) { return m.at_spd(i, j); });
            if (cfg_.use_parent_child) {
                build(par_idx, [](const DistanceMaps& m, int i, int j) { return m.at_parent(i, j); });
                build(chi_idx, [](const DistanceMaps& m, int i, int j) { return m.at_child(i, j); });
            }
        }

        for (int l = 0; l < cfg_.n_layers; ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            const VarId h1 = eg.layer_norm(x, pid(p + "ln1.g"), pid(p + "ln1.b"));
            const VarId q = eg.add(eg.matmul(h1, pid(p + "attn.wq")), pid(p + "attn.bq"));
            const VarId k = eg.add(eg.matmul(h1, pid(p + "attn.wk")), pid(p + "attn.bk"));
            const VarId v = eg.add(eg.matmul(h1, pid(p + "attn.wv")), pid(p + "attn.bv"));
            const VarId q4 = eg.transpose(eg.reshape(q, {B, Jm, h, dh}), {0, 2, 1, 3});
            const VarId k4t = eg.transpose(eg.reshape(k, {B, Jm, h, dh}), {0, 2, 3, 1});
            const VarId v4 = eg.transpose(eg.reshape(v, {B, Jm, h, dh}), {0, 2, 1, 3});
            VarId scores = eg.scale(eg.matmul(q4, k4t), 1.0 / std::sqrt(static_cast<double>(dh)));
            if (cfg_.pe_variant == PeVariant::GRAPH) {
                if (cfg_.use_spatial)
                    scores = eg.add(scores, eg.reshape(eg.gather_rows(pid(p + "bias.spatial"),
                                                                      spd_idx),
                                                       {B, h, Jm, Jm}));
                if (cfg_.use_parent_child) {
                    scores = eg.add(scores, eg.reshape(eg.gather_rows(pid(p + "bias.parent"),
                                                                      par_idx),
                                                       {B, h, Jm, Jm}));
                    scores = eg.add(scores, eg.reshape(eg.gather_rows(pid(p + "bias.child"),
                                                                      chi_idx),
                                                       {B, h, Jm, Jm}));
                }
            }
            scores = eg.masked_fill(scores, keep, -1e30);
            const VarId attn = eg.softmax_lastdim(scores);
            const VarId ctx = eg.reshape(eg.transpose(eg.matmul(attn, v4), {0, 2, 1, 3}),
                                         {B, Jm, d});
            VarId attn_out = eg.add(eg.matmul(ctx, pid(p + "attn.wo")), pid(p + "attn.bo"));
            attn_out = eg.mul(attn_out, mrows);
            x = eg.add(x, attn_out);

            const VarId h2 = eg.layer_norm(x, pid(p + "ln2.g"), pid(p + "ln2.b"));
            VarId ff = eg.add(
                eg.matmul(eg.gelu(eg.add(eg.matmul(h2, pid(p + "ff.w1")), pid(p + "ff.b1"))),
                          pid(p + "ff.w2")),
                pid(p + "ff.b2"));
            ff = eg.mul(ff, mrows);
            x = eg.add(x, ff);
        }

        VarId final_latent = eg.layer_norm(x, pid("final_ln.g"), pid("final_ln.b"));
        final_latent = eg.mul(final_latent, mrows);
        const VarId policy_raw = eg.add(eg.matmul(final_latent, pid("policy.w")), pid("policy.b"));
        f.actions_unit = eg.reshape(eg.tanh_act(policy_raw), {B, Jm});
        f.actions = eg.scale(f.actions_unit, cfg_.max_delta);
        f.fk = eg.add(eg.matmul(final_latent, pid("fk.w")), pid("fk.b"));
        return f;
    }

    // Behavior-cloning loss: per-sample mean over real joints, then mean over
    // the batch. The policy term compares tanh units against labels divided
    // by max_delta; in radians the squared errors are max_delta^2 smaller and
    // the gradient all but vanishes next to the self-model term. The
    // self-model term averages each joint's two coordinates.
    void add_loss(Forward& f, const TokenBatch& batch) const {
        if (!batch.has_labels) throw ShapeError("add_loss: batch has no labels");
        const int B = batch.batch_size();
        const int Jm = batch.jmax();
        ExprGraph& eg = f.tape;
        VarId total = -1;
        if (cfg_.use_policy_loss) {
            Tensor w = Tensor::zeros({B, Jm});
            for (int b = 0; b < B; ++b) {
                const double per = 1.0 / (static_cast<double>(B) *
                                          static_cast<double>(batch.joint_counts[static_cast<std::size_t>(b)]));
                for (int j = 0; j < batch.joint_counts[static_cast<std::size_t>(b)]; ++j)
                    w.data[static_cast<std::size_t>(b * Jm + j)] = per;
            }
            Tensor unit_labels = batch.actions;
            for (double& v : unit_labels.data) v /= cfg_.max_delta;
            f.action_loss = eg.weighted_sse(f.actions_unit, std::move(unit_labels), std::move(w));
            total = f.action_loss;
        }
        if (cfg_.use_self_model) {
            Tensor w = Tensor::zeros({B, Jm, 2});
            for (int b = 0; b < B; ++b) {
                const double per = 1.0 / (2.0 * static_cast<double>(B) *
                                          static_cast<double>(batch.joint_counts[static_cast<std::size_t>(b)]));
                for (int j = 0; j < batch.joint_counts[static_cast<std::size_t>(b)]; ++j) {
                    w.data[static_cast<std::size_t>((b * Jm + j) * 2)] = per;
                    w.data[static_cast<std::size_t>((b * Jm + j) * 2 + 1)] = per;
                }
            }
            f.fk_loss = eg.weighted_sse(f.fk, batch.fk, std::move(w));
            const VarId weighted = eg.scale(f.fk_loss, cfg_.self_model_weight);
            total = total < 0 ? weighted : eg.add(total, weighted);
        }
        f.loss = total;
    }

    // Gradients aligned with the ParamStore; parameters that never entered
    // the tape (inactive heads or tables) get an empty tensor.
    std::vector<Tensor> collect_grads(const Forward& f) const {
        std::vector<Tensor> grads(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const VarId id = f.param_ids[i];
            if (id < 0 || !f.tape.has_grad(id)) continue;
            grads[i] = f.tape.grad(id);
        }
        return grads;
    }

    // Per-sample action vector (first J entries of the padded row).
    static std::vector<double> sample_actions(const Forward& f, const TokenBatch& batch, int b) {
        const Tensor& a = f.tape.value(f.actions);
        const int Jm = batch.jmax();
        const int J = batch.joint_counts[static_cast<std::size_t>(b)];
        std::vector<double> out(static_cast<std::size_t>(J));
        for (int j = 0; j < J; ++j)
            out[static_cast<std::size_t>(j)] = a.data[static_cast<std::size_t>(b * Jm + j)];
        return out;
    }

    void save(const std::filesystem::path& ckpt_path) const {
        checkpoint::save(ckpt_path, params_);
        std::ofstream os(ckpt_path.string() + ".json", std::ios::trunc);
        if (!os) throw IoError("cannot write config side file for " + ckpt_path.string());
        os << to_json(cfg_).dump(2) << '\n';
    }

    static GetModel load(const std::filesystem::path& ckpt_path) {
        std::ifstream is(ckpt_path.string() + ".json");
        if (!is) throw IoError("missing config side file: " + ckpt_path.string() + ".json");
        nlohmann::json j;
        try {
            is >> j;
        } catch (const nlohmann::json::exception& e) {
            throw IoError("cannot parse config side file: " + std::string(e.what()));
        }
        return GetModel(get_config_from_json(j), checkpoint::load(ckpt_path));
    }

private:
    GetConfig cfg_;
    ParamStore params_;
};

}  // namespace get
