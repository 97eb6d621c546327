// Command-line front end for the embodiment-graph control pipeline:
// enumerate embodiments, record expert demos, train and evaluate policies,
// and drive the ablation experiments. One JSON config file feeds every
// subcommand; individual flags override single values.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "get/evalsuite.hpp"
#include "get/runconfig.hpp"
#include "get/version.hpp"

namespace fs = std::filesystem;

namespace {

struct Cli {
    std::string config_path;
    std::string out_root;

    // gen-embodiments
    CLI::App* gen_emb = nullptr;
    std::uint64_t emb_seed = 0;
    std::string emb_rule;
    std::string emb_out;

    // gen-demos
    CLI::App* gen_demos = nullptr;
    std::int64_t demo_steps = 0;
    std::uint64_t demo_seed = 0;
    double demo_noise = 0.0;
    std::string demo_embodiments;
    std::string demo_out;

    // train
    CLI::App* train = nullptr;
    std::string train_row = "GET";
    std::int64_t train_steps = 0;
    int train_batch = 0;
    double train_lr = 0.0;
    std::uint64_t train_seed = 0;
    std::string train_demos;
    std::string train_out;

    // eval
    CLI::App* eval = nullptr;
    std::string eval_checkpoint;
    std::string eval_policy;
    std::string eval_category;
    int eval_episodes = 0;
    std::uint64_t eval_eval_seed = 0;
    std::uint64_t eval_run_seed = 0;
    bool eval_reversed = false;
    std::string eval_embodiments;
    std::string eval_out;

    // ablate
    CLI::App* ablate = nullptr;
    std::vector<std::uint64_t> ablate_seeds;
    std::vector<std::string> ablate_rows;
    std::int64_t ablate_steps = 0;
    int ablate_workers = -1;
    int ablate_episodes = 0;
    std::string ablate_demos;
    std::string ablate_embodiments;
    std::string ablate_out;

    // fk-probe
    CLI::App* fk_probe = nullptr;
    std::vector<std::uint64_t> probe_seeds;
    std::vector<std::string> probe_rows;
    std::int64_t probe_steps = 0;
    std::int64_t probe_heldout_steps = 0;
    int probe_workers = -1;
    std::string probe_demos;
    std::string probe_embodiments;
    std::string probe_out;

    // dfs-sensitivity
    CLI::App* dfs = nullptr;
    std::vector<std::uint64_t> dfs_seeds;
    std::int64_t dfs_steps = 0;
    int dfs_episodes = 0;
    int dfs_workers = -1;
    std::string dfs_reuse_runs;
    std::string dfs_demos;
    std::string dfs_embodiments;
    std::string dfs_out;

    // size-sweep
    CLI::App* sweep = nullptr;
    std::vector<int> sweep_sizes;
    std::vector<std::uint64_t> sweep_seeds;
    std::int64_t sweep_steps = 0;
    int sweep_episodes = 0;
    int sweep_workers = -1;
    std::string sweep_demos;
    std::string sweep_embodiments;
    std::string sweep_out;
};

fs::path resolve(const std::string& flag_value, const fs::path& fallback) {
    return flag_value.empty() ? fallback : fs::path(flag_value);
}

get::DemoDataset load_demos(const fs::path& dir) {
    const fs::path manifest = dir / "train.manifest.json";
    const fs::path bin = dir / "train.bin";
    if (!fs::exists(manifest)) throw get::IoError("missing input: " + manifest.string());
    if (!fs::exists(bin)) throw get::IoError("missing input: " + bin.string());
    return get::demo_io::load(manifest, bin);
}

get::GetConfig grid_config(const get::GetConfig& base, const std::string& row) {
    for (const auto& [name, cfg] : get::make_ablation_grid(base))
        if (name == row) return cfg;
    throw get::ConfigError("unknown ablation row: " + row);
}

int run_gen_embodiments(const Cli& cli, get::RunConfig cfg) {
    if (cli.gen_emb->count("--seed")) cfg.splits.seed = cli.emb_seed;
    if (cli.gen_emb->count("--rule"))
        cfg.splits.rule = get::two_joint_rule_from_string(cli.emb_rule);
    const fs::path out = resolve(cli.emb_out, cfg.out_root / "embodiments");

    get::FilterRules rules;
    rules.two_joint_rule = cfg.splits.rule;
    const get::HandCatalog catalog = get::HandCatalog::standard();
    const get::EnumerationResult enumeration = get::enumerate_hand_variants(catalog, rules);
    std::cout << "pre-filter combinations: " << enumeration.combo_count << "\n";
    std::cout << "post-filter graphs: " << enumeration.graphs.size() << " (excluded "
              << enumeration.excluded << "; per rule, overlapping: "
              << enumeration.excluded_two_nonempty << " with fewer than two chains, "
              << enumeration.excluded_capable_main << " without a capable main finger)\n";

    const get::SplitResult splits =
        get::make_splits(enumeration.graphs, cfg.task, cfg.splits.seed, cfg.splits.spec);
    get::write_run_snapshot(out, "gen-embodiments", cfg);
    get::save_splits(out, splits, cfg.splits, enumeration, cfg.task);
    std::cout << "splits: train=" << splits.train.size() << " new_graph=" << splits.new_graph.size()
              << " new_geo=" << splits.new_geo.size()
              << " new_graph_geo=" << splits.new_graph_geo.size()
              << " (probe failures: " << splits.probe_failures.size() << ")\n";
    std::cout << "wrote " << (out / "splits.json").string() << "\n";
    return 0;
}

int run_gen_demos(const Cli& cli, get::RunConfig cfg) {
    if (cli.gen_demos->count("--steps")) cfg.demos.steps_per_embodiment = cli.demo_steps;
    if (cli.gen_demos->count("--seed")) cfg.demos.seed = cli.demo_seed;
    if (cli.gen_demos->count("--noise")) cfg.demos.action_noise = cli.demo_noise;
    const fs::path emb_dir = resolve(cli.demo_embodiments, cfg.out_root / "embodiments");
    const fs::path out = resolve(cli.demo_out, cfg.out_root / "demos");

    const get::SplitResult splits = get::load_splits(emb_dir);
    const get::DemoDataset ds =
        get::generate_demos(splits.train, cfg.task, cfg.demos.steps_per_embodiment,
                            cfg.demos.seed, cfg.demos.expert, cfg.demos.action_noise);
    get::write_run_snapshot(out, "gen-demos", cfg);
    get::demo_io::save(out / "train.manifest.json", out / "train.bin", ds);
    std::cout << "recorded " << ds.record_count() << " demos from " << ds.embodiment_count()
              << " embodiments";
    if (!ds.excluded.empty()) std::cout << " (" << ds.excluded.size() << " failed the probe)";
    std::cout << "\nwrote " << (out / "train.bin").string() << "\n";
    return 0;
}

int run_train(const Cli& cli, get::RunConfig cfg) {
    if (cli.train->count("--steps")) cfg.schedule.steps = cli.train_steps;
    if (cli.train->count("--batch")) cfg.schedule.batch_size = cli.train_batch;
    if (cli.train->count("--lr")) cfg.schedule.lr = cli.train_lr;
    if (cli.train->count("--seed")) cfg.schedule.seed = cli.train_seed;
    const fs::path demos_dir = resolve(cli.train_demos, cfg.out_root / "demos");
    const fs::path out =
        resolve(cli.train_out,
                cfg.out_root / "train" / get::run_dir_name(cli.train_row, cfg.schedule.seed));

    const get::DemoDataset ds = load_demos(demos_dir);
    const get::GetConfig config = grid_config(cfg.model, cli.train_row);
    get::write_run_snapshot(out, "train", cfg);
    const get::TrainResult tr = get::train(ds, config, cfg.schedule, out);
    std::cout << "row " << cli.train_row << " seed " << cfg.schedule.seed << ": final loss "
              << get::fmt_double(tr.final_train_loss) << "\n";
    std::cout << "checkpoint: " << tr.final_checkpoint.string() << "\n";
    return 0;
}

int run_eval(const Cli& cli, get::RunConfig cfg) {
    if (cli.eval->count("--policy")) cfg.eval.policy = cli.eval_policy;
    if (cli.eval->count("--category")) cfg.eval.category = cli.eval_category;
    if (cli.eval->count("--episodes")) cfg.eval.episodes = cli.eval_episodes;
    if (cli.eval->count("--eval-seed")) cfg.eval.eval_seed = cli.eval_eval_seed;
    if (cli.eval->count("--run-seed")) cfg.eval.run_seed = cli.eval_run_seed;
    if (cli.eval->count("--reversed-dfs")) cfg.eval.reversed_dfs = cli.eval_reversed;
    const fs::path emb_dir = resolve(cli.eval_embodiments, cfg.out_root / "embodiments");
    const fs::path out = resolve(cli.eval_out, cfg.out_root / "eval");

    if (cfg.eval.policy != "expert" && cfg.eval.policy != "checkpoint")
        throw get::ConfigError("eval policy must be 'checkpoint' or 'expert'");
    if (cfg.eval.policy == "checkpoint" && cli.eval_checkpoint.empty())
        throw get::ConfigError("eval needs --checkpoint unless --policy expert");

    const get::SplitResult splits = get::load_splits(emb_dir);
    const auto& graphs = get::category_graphs(splits, cfg.eval.category);
    get::CategoryEval ev;
    if (cfg.eval.policy == "expert") {
        ev = get::eval_expert_on_category(graphs, cfg.task, cfg.eval.eval_seed, cfg.eval.category,
                                          cfg.eval.run_seed, cfg.eval.episodes, cfg.demos.expert);
    } else {
        if (!fs::exists(cli.eval_checkpoint))
            throw get::IoError("missing input: " + cli.eval_checkpoint);
        const get::GetModel model = get::GetModel::load(cli.eval_checkpoint);
        ev = get::eval_model_on_category(model, graphs, cfg.task, cfg.eval.eval_seed,
                                         cfg.eval.category, cfg.eval.run_seed, cfg.eval.episodes,
                                         cfg.eval.reversed_dfs);
    }
    get::write_run_snapshot(out, "eval", cfg);
    nlohmann::ordered_json j;
    j["policy"] = cfg.eval.policy;
    if (cfg.eval.policy == "checkpoint") j["checkpoint"] = cli.eval_checkpoint;
    j["category"] = cfg.eval.category;
    j["episodes"] = cfg.eval.episodes;
    j["eval_seed"] = cfg.eval.eval_seed;
    j["run_seed"] = cfg.eval.run_seed;
    j["reversed_dfs"] = cfg.eval.reversed_dfs;
    j["result"] = get::detail::category_eval_to_json(ev);
    std::ofstream os(out / "eval.json", std::ios::trunc);
    if (!os) throw get::IoError("cannot write " + (out / "eval.json").string());
    os << j.dump(2) << '\n';
    std::cout << cfg.eval.category << " metric: " << get::fmt_double(ev.metric)
              << (ev.complete ? "" : " (incomplete)") << "\n";
    std::cout << "wrote " << (out / "eval.json").string() << "\n";
    return 0;
}

int run_ablate(const Cli& cli, get::RunConfig cfg) {
    if (cli.ablate->count("--seeds")) cfg.ablate.seeds = cli.ablate_seeds;
    if (cli.ablate->count("--rows")) cfg.ablate.rows = cli.ablate_rows;
    if (cli.ablate->count("--steps")) cfg.schedule.steps = cli.ablate_steps;
    if (cli.ablate->count("--workers")) cfg.ablate.workers = cli.ablate_workers;
    if (cli.ablate->count("--episodes")) cfg.ablate.eval_episodes = cli.ablate_episodes;
    const fs::path demos_dir = resolve(cli.ablate_demos, cfg.out_root / "demos");
    const fs::path emb_dir = resolve(cli.ablate_embodiments, cfg.out_root / "embodiments");
    const fs::path out = resolve(cli.ablate_out, cfg.out_root / "ablation");

    const get::DemoDataset ds = load_demos(demos_dir);
    const get::SplitResult splits = get::load_splits(emb_dir);
    get::AblationSpec spec;
    spec.base = cfg.model;
    spec.schedule = cfg.schedule;
    spec.seeds = cfg.ablate.seeds;
    spec.rows = cfg.ablate.rows;
    spec.eval_episodes = cfg.ablate.eval_episodes;
    spec.eval_seed = cfg.ablate.eval_seed;
    spec.workers = cfg.ablate.workers;
    get::write_run_snapshot(out, "ablate", cfg);
    const get::MatrixResult res = get::run_ablation_matrix(ds, splits, spec, out);

    std::printf("%-10s", "config");
    for (const std::string& cat : get::category_names()) std::printf(" %14s", cat.c_str());
    std::printf("\n");
    for (const std::string& row : res.rows) {
        std::printf("%-10s", row.c_str());
        for (const std::string& cat : get::category_names())
            std::printf(" %14.5f", res.mean_metric(row, cat));
        std::printf("\n");
    }
    std::printf("%-10s", "expert");
    for (const std::string& cat : get::category_names())
        std::printf(" %14.5f", res.expert_mean(cat));
    std::printf("\n");
    std::cout << "wrote " << res.csv_path.string() << "\n";
    return 0;
}

int run_fk_probe(const Cli& cli, get::RunConfig cfg) {
    if (cli.fk_probe->count("--seeds")) cfg.fk_probe.seeds = cli.probe_seeds;
    if (cli.fk_probe->count("--rows")) cfg.fk_probe.rows = cli.probe_rows;
    if (cli.fk_probe->count("--steps")) cfg.probe_schedule.steps = cli.probe_steps;
    if (cli.fk_probe->count("--heldout-steps")) cfg.fk_probe.heldout_steps = cli.probe_heldout_steps;
    if (cli.fk_probe->count("--workers")) cfg.fk_probe.workers = cli.probe_workers;
    const fs::path demos_dir = resolve(cli.probe_demos, cfg.out_root / "demos");
    const fs::path emb_dir = resolve(cli.probe_embodiments, cfg.out_root / "embodiments");
    const fs::path out = resolve(cli.probe_out, cfg.out_root / "fk_probe");

    const get::DemoDataset train_ds = load_demos(demos_dir);
    const get::SplitResult splits = get::load_splits(emb_dir);
    const get::DemoDataset heldout =
        get::generate_demos(splits.new_graph, cfg.task, cfg.fk_probe.heldout_steps, cfg.demos.seed,
                            cfg.demos.expert, cfg.demos.action_noise);
    get::FkProbeSpec spec;
    spec.base = cfg.model;
    spec.schedule = cfg.probe_schedule;
    spec.seeds = cfg.fk_probe.seeds;
    spec.rows = cfg.fk_probe.rows;
    spec.workers = cfg.fk_probe.workers;
    get::write_run_snapshot(out, "fk-probe", cfg);
    const get::FkProbeResult res = get::run_fk_probe(train_ds, heldout, spec, out);
    for (const std::string& row : res.rows)
        std::cout << row << ": heldout " << get::fmt_double(res.mean_heldout(row)) << ", train "
                  << get::fmt_double(res.mean_train(row)) << "\n";
    std::cout << "wrote " << res.json_path.string() << "\n";
    return 0;
}

int run_dfs_sensitivity(const Cli& cli, get::RunConfig cfg) {
    if (cli.dfs->count("--seeds")) cfg.dfs_sensitivity.seeds = cli.dfs_seeds;
    if (cli.dfs->count("--steps")) cfg.schedule.steps = cli.dfs_steps;
    if (cli.dfs->count("--episodes")) cfg.dfs_sensitivity.eval_episodes = cli.dfs_episodes;
    if (cli.dfs->count("--workers")) cfg.dfs_sensitivity.workers = cli.dfs_workers;
    const fs::path demos_dir = resolve(cli.dfs_demos, cfg.out_root / "demos");
    const fs::path emb_dir = resolve(cli.dfs_embodiments, cfg.out_root / "embodiments");
    const fs::path out = resolve(cli.dfs_out, cfg.out_root / "dfs_sensitivity");

    const get::DemoDataset ds = load_demos(demos_dir);
    const get::SplitResult splits = get::load_splits(emb_dir);
    get::write_run_snapshot(out, "dfs-sensitivity", cfg);

    get::DfsSensitivityResult res;
    if (!cli.dfs_reuse_runs.empty()) {
        // Score checkpoints from an earlier ablation run instead of training.
        const std::vector<get::GetModel> models =
            get::load_run_models(cli.dfs_reuse_runs, "ET+DFS", cfg.dfs_sensitivity.seeds);
        res = get::dfs_sensitivity_eval(models, cfg.dfs_sensitivity.seeds, splits.train, cfg.task,
                                        cfg.dfs_sensitivity.eval_seed,
                                        cfg.dfs_sensitivity.eval_episodes);
        nlohmann::ordered_json j;
        j["seeds"] = res.seeds;
        j["canonical"] = res.canonical;
        j["reversed"] = res.reversed;
        j["canonical_mean"] = res.canonical_mean;
        j["reversed_mean"] = res.reversed_mean;
        j["mean_degradation"] = res.mean_degradation;
        std::filesystem::create_directories(out);
        std::ofstream os(out / "dfs_sensitivity.json", std::ios::trunc);
        if (!os) throw get::IoError("cannot write dfs_sensitivity.json");
        os << j.dump(2) << '\n';
    } else {
        get::DfsSensitivitySpec spec;
        spec.base = cfg.model;
        spec.schedule = cfg.schedule;
        spec.seeds = cfg.dfs_sensitivity.seeds;
        spec.eval_episodes = cfg.dfs_sensitivity.eval_episodes;
        spec.eval_seed = cfg.dfs_sensitivity.eval_seed;
        spec.workers = cfg.dfs_sensitivity.workers;
        res = get::run_dfs_sensitivity(ds, splits, spec, out);
    }
    std::cout << "canonical mean error: " << get::fmt_double(res.canonical_mean) << "\n";
    std::cout << "reversed mean error:  " << get::fmt_double(res.reversed_mean) << "\n";
    std::cout << "degradation: " << get::fmt_double(100.0 * res.mean_degradation) << "%\n";
    return 0;
}

int run_size_sweep(const Cli& cli, get::RunConfig cfg) {
    if (cli.sweep->count("--sizes")) cfg.size_sweep.sizes = cli.sweep_sizes;
    if (cli.sweep->count("--seeds")) cfg.size_sweep.seeds = cli.sweep_seeds;
    if (cli.sweep->count("--steps")) cfg.schedule.steps = cli.sweep_steps;
    if (cli.sweep->count("--episodes")) cfg.size_sweep.eval_episodes = cli.sweep_episodes;
    if (cli.sweep->count("--workers")) cfg.size_sweep.workers = cli.sweep_workers;
    const fs::path demos_dir = resolve(cli.sweep_demos, cfg.out_root / "demos");
    const fs::path emb_dir = resolve(cli.sweep_embodiments, cfg.out_root / "embodiments");
    const fs::path out = resolve(cli.sweep_out, cfg.out_root / "size_sweep");

    const get::DemoDataset ds = load_demos(demos_dir);
    const get::SplitResult splits = get::load_splits(emb_dir);
    get::SizeSweepSpec spec;
    spec.config = cfg.model;
    spec.schedule = cfg.schedule;
    spec.sizes = cfg.size_sweep.sizes;
    spec.seeds = cfg.size_sweep.seeds;
    spec.eval_episodes = cfg.size_sweep.eval_episodes;
    spec.eval_seed = cfg.size_sweep.eval_seed;
    spec.workers = cfg.size_sweep.workers;
    get::write_run_snapshot(out, "size-sweep", cfg);
    const get::SizeSweepResult res = get::run_size_sweep(ds, splits, spec, out);
    for (int s : res.sizes)
        std::cout << "size " << s << ": new_graph mean "
                  << get::fmt_double(res.mean_new_graph(s)) << "\n";
    std::cout << "wrote " << res.json_path.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Graph embodiment transformer pipeline"};
    app.set_version_flag("--version", get::version_string());
    app.require_subcommand(1);
    Cli cli;
    app.add_option("--config", cli.config_path, "JSON config file (defaults used when absent)");
    app.add_option("--out-root", cli.out_root, "root directory for default outputs");

    cli.gen_emb = app.add_subcommand("gen-embodiments",
                                     "enumerate the hand catalog and write the four splits");
    cli.gen_emb->add_option("--seed", cli.emb_seed, "split assignment seed");
    cli.gen_emb->add_option("--rule", cli.emb_rule, "two-joint rule: at_least_two or exactly_two");
    cli.gen_emb->add_option("--out", cli.emb_out, "output directory");

    cli.gen_demos = app.add_subcommand("gen-demos", "record expert demonstrations");
    cli.gen_demos->add_option("--steps", cli.demo_steps, "steps per embodiment");
    cli.gen_demos->add_option("--seed", cli.demo_seed, "demo generation seed");
    cli.gen_demos->add_option("--noise", cli.demo_noise, "exploration noise stddev, radians");
    cli.gen_demos->add_option("--embodiments", cli.demo_embodiments, "embodiments directory");
    cli.gen_demos->add_option("--out", cli.demo_out, "output directory");

    cli.train = app.add_subcommand("train", "train one policy configuration");
    cli.train->add_option("--row", cli.train_row, "ablation row name (default GET)");
    cli.train->add_option("--steps", cli.train_steps, "optimizer steps");
    cli.train->add_option("--batch", cli.train_batch, "batch size");
    cli.train->add_option("--lr", cli.train_lr, "peak learning rate");
    cli.train->add_option("--seed", cli.train_seed, "training seed");
    cli.train->add_option("--demos", cli.train_demos, "demo directory");
    cli.train->add_option("--out", cli.train_out, "run directory");

    cli.eval = app.add_subcommand("eval", "evaluate a checkpoint or the expert on one category");
    cli.eval->add_option("--checkpoint", cli.eval_checkpoint, "model checkpoint path");
    cli.eval->add_option("--policy", cli.eval_policy, "checkpoint (default) or expert");
    cli.eval->add_option("--category", cli.eval_category,
                         "train, new_graph, new_geo, or new_graph_geo");
    cli.eval->add_option("--episodes", cli.eval_episodes, "episodes per embodiment");
    cli.eval->add_option("--eval-seed", cli.eval_eval_seed, "evaluation stream seed");
    cli.eval->add_option("--run-seed", cli.eval_run_seed, "run seed label for the streams");
    cli.eval->add_flag("--reversed-dfs", cli.eval_reversed, "evaluate with reversed joint order");
    cli.eval->add_option("--embodiments", cli.eval_embodiments, "embodiments directory");
    cli.eval->add_option("--out", cli.eval_out, "output directory");

    cli.ablate = app.add_subcommand("ablate", "train and score the full ablation matrix");
    cli.ablate->add_option("--seeds", cli.ablate_seeds, "training seeds")->delimiter(',');
    cli.ablate->add_option("--rows", cli.ablate_rows, "subset of ablation rows")->delimiter(',');
    cli.ablate->add_option("--steps", cli.ablate_steps, "optimizer steps per run");
    cli.ablate->add_option("--workers", cli.ablate_workers, "parallel jobs (0 = all cores)");
    cli.ablate->add_option("--episodes", cli.ablate_episodes, "eval episodes per embodiment");
    cli.ablate->add_option("--demos", cli.ablate_demos, "demo directory");
    cli.ablate->add_option("--embodiments", cli.ablate_embodiments, "embodiments directory");
    cli.ablate->add_option("--out", cli.ablate_out, "output directory");

    cli.fk_probe = app.add_subcommand("fk-probe", "structural probe via the FK head only");
    cli.fk_probe->add_option("--seeds", cli.probe_seeds, "training seeds")->delimiter(',');
    cli.fk_probe->add_option("--rows", cli.probe_rows, "rows to probe")->delimiter(',');
    cli.fk_probe->add_option("--steps", cli.probe_steps, "probe optimizer steps");
    cli.fk_probe->add_option("--heldout-steps", cli.probe_heldout_steps,
                             "demo steps per held-out embodiment");
    cli.fk_probe->add_option("--workers", cli.probe_workers, "parallel jobs (0 = all cores)");
    cli.fk_probe->add_option("--demos", cli.probe_demos, "demo directory");
    cli.fk_probe->add_option("--embodiments", cli.probe_embodiments, "embodiments directory");
    cli.fk_probe->add_option("--out", cli.probe_out, "output directory");

    cli.dfs = app.add_subcommand("dfs-sensitivity",
                                 "ET+DFS with canonical vs reversed joint order");
    cli.dfs->add_option("--seeds", cli.dfs_seeds, "training seeds")->delimiter(',');
    cli.dfs->add_option("--steps", cli.dfs_steps, "optimizer steps per run");
    cli.dfs->add_option("--episodes", cli.dfs_episodes, "eval episodes per embodiment");
    cli.dfs->add_option("--workers", cli.dfs_workers, "parallel jobs (0 = all cores)");
    cli.dfs->add_option("--reuse-runs", cli.dfs_reuse_runs,
                        "runs directory from an earlier ablate call");
    cli.dfs->add_option("--demos", cli.dfs_demos, "demo directory");
    cli.dfs->add_option("--embodiments", cli.dfs_embodiments, "embodiments directory");
    cli.dfs->add_option("--out", cli.dfs_out, "output directory");

    cli.sweep = app.add_subcommand("size-sweep", "zero-shot error vs training set size");
    cli.sweep->add_option("--sizes", cli.sweep_sizes, "training set sizes (0 = all)")
        ->delimiter(',');
    cli.sweep->add_option("--seeds", cli.sweep_seeds, "training seeds")->delimiter(',');
    cli.sweep->add_option("--steps", cli.sweep_steps, "optimizer steps per run");
    cli.sweep->add_option("--episodes", cli.sweep_episodes, "eval episodes per embodiment");
    cli.sweep->add_option("--workers", cli.sweep_workers, "parallel jobs (0 = all cores)");
    cli.sweep->add_option("--demos", cli.sweep_demos, "demo directory");
    cli.sweep->add_option("--embodiments", cli.sweep_embodiments, "embodiments directory");
    cli.sweep->add_option("--out", cli.sweep_out, "output directory");

    for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        get::RunConfig cfg;
        if (!cli.config_path.empty()) cfg = get::load_run_config(cli.config_path);
        if (!cli.out_root.empty()) cfg.out_root = cli.out_root;

        if (cli.gen_emb->parsed()) return run_gen_embodiments(cli, std::move(cfg));
        if (cli.gen_demos->parsed()) return run_gen_demos(cli, std::move(cfg));
        if (cli.train->parsed()) return run_train(cli, std::move(cfg));
        if (cli.eval->parsed()) return run_eval(cli, std::move(cfg));
        if (cli.ablate->parsed()) return run_ablate(cli, std::move(cfg));
        if (cli.fk_probe->parsed()) return run_fk_probe(cli, std::move(cfg));
        if (cli.dfs->parsed()) return run_dfs_sensitivity(cli, std::move(cfg));
        if (cli.sweep->parsed()) return run_size_sweep(cli, std::move(cfg));
        std::cerr << "no subcommand selected\n";
        return 2;
    } catch (const get::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const get::StructuralError& e) {
        std::cerr << "structural error: " << e.what() << "\n";
        return 2;
    } catch (const get::ShapeError& e) {
        std::cerr << "shape error: " << e.what() << "\n";
        return 2;
    } catch (const get::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const get::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
