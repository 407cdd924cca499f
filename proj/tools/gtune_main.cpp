// gtune: grounding-tuning toolkit CLI.
//
// Pipeline stages: curate -> atlas-build -> tune -> predict -> eval, plus
// synth / oracle / ablate. Flags override the config file, which overrides
// the built-in defaults. GTUNE_CONFIG names a config file when --config is
// not given.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "gtune/errors.hpp"
#include "gtune/pipeline.hpp"
#include "gtune/records.hpp"

namespace {

using gtune::pipeline::RunConfig;
using json = nlohmann::ordered_json;

struct CommonFlags {
    std::optional<std::string> config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> annotations, atlas_boxes, eval_records, synth_records, vocab,
        lexicon, codebook;
    bool pgm = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config, "JSON config file (env GTUNE_CONFIG)");
    cmd->add_option("--seed", f.seed, "master seed, expanded per stage");
    cmd->add_option("--out", f.out_dir, "output directory");
    cmd->add_option("--annotations", f.annotations, "entity annotations (JSONL)");
    cmd->add_option("--atlas-boxes", f.atlas_boxes, "bounding-box annotations (JSONL)");
    cmd->add_option("--eval-records", f.eval_records, "evaluation records (JSONL)");
    cmd->add_option("--synth-records", f.synth_records, "box-only records (JSONL)");
    cmd->add_option("--vocab", f.vocab, "token vocabulary (JSON)");
    cmd->add_option("--lexicon", f.lexicon, "curation lexicon (JSON)");
    cmd->add_option("--codebook", f.codebook, "pre-tuned codebook tensor (.gtt)");
    cmd->add_flag("--pgm", f.pgm, "also write portable graymaps");
}

bool parse_switch(const std::string& value, const std::string& flag) {
    if (value == "on") return true;
    if (value == "off") return false;
    throw gtune::ValidationError(flag + " must be 'on' or 'off'");
}

RunConfig build_config(const CommonFlags& f, const json& overrides) {
    RunConfig cfg;
    std::string config_path;
    if (f.config) {
        config_path = *f.config;
    } else if (const char* env = std::getenv("GTUNE_CONFIG")) {
        config_path = env;
    }
    if (!config_path.empty()) cfg = gtune::pipeline::load_config(config_path);

    json flags = overrides.is_object() ? overrides : json::object();
    auto path = [&](const char* key, const std::optional<std::string>& v) {
        if (v) flags["paths"][key] = *v;
    };
    path("annotations", f.annotations);
    path("atlas_boxes", f.atlas_boxes);
    path("eval_records", f.eval_records);
    path("synth_records", f.synth_records);
    path("vocab", f.vocab);
    path("lexicon", f.lexicon);
    path("codebook", f.codebook);
    path("out_dir", f.out_dir);
    if (f.seed) flags["seed"] = *f.seed;
    if (f.pgm) flags["emit_pgm"] = true;
    gtune::pipeline::apply_config(cfg, flags);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-attention grounding toolkit"};
    app.require_subcommand(1);

    CommonFlags flags;

    auto* curate = app.add_subcommand("curate", "annotations -> standardized prompts");
    add_common(curate, flags);
    std::optional<std::string> curate_scope;
    curate->add_option("--scope", curate_scope, "'sentence' or 'report'");

    auto* atlas_build = app.add_subcommand("atlas-build", "boxes -> location Gaussians");
    add_common(atlas_build, flags);

    auto* atlas_render = app.add_subcommand("atlas-render", "render Gaussian target grids");
    add_common(atlas_render, flags);
    std::string render_location = "all";
    std::size_t render_resolution = 512;
    atlas_render->add_option("--location", render_location, "canonical location or 'all'");
    atlas_render->add_option("--resolution", render_resolution, "grid resolution");

    auto* tune = app.add_subcommand("tune", "optimize anatomy token embeddings");
    add_common(tune, flags);
    std::optional<double> tune_alpha, tune_eps, tune_lr;
    std::optional<int> tune_steps;
    std::optional<std::string> tune_div, tune_optimizer;
    tune->add_option("--alpha", tune_alpha, "target regularizer weight");
    tune->add_option("--eps-mask", tune_eps, "Gaussian mask threshold");
    tune->add_option("--lr", tune_lr, "learning rate");
    tune->add_option("--steps", tune_steps, "optimization steps");
    tune->add_option("--div-loss", tune_div, "'on' or 'off'");
    tune->add_option("--optimizer", tune_optimizer, "'sgd' or 'adam'");

    auto* predict = app.add_subcommand("predict", "emit spatialized heatmaps");
    add_common(predict, flags);

    auto* eval_cmd = app.add_subcommand("eval", "phrase-grounding metrics");
    add_common(eval_cmd, flags);
    std::optional<std::string> eval_records_path;
    std::optional<std::string> eval_otsu;
    std::optional<int> eval_resamples, eval_workers;
    std::optional<std::vector<double>> eval_thresholds;
    eval_cmd->add_option("--records", eval_records_path,
                         "records with heatmap paths (default <out>/predictions.jsonl)");
    eval_cmd->add_option("--otsu", eval_otsu, "'on' or 'off'");
    eval_cmd->add_option("--resamples", eval_resamples, "bootstrap resamples");
    eval_cmd->add_option("--workers", eval_workers, "metric worker threads");
    eval_cmd->add_option("--thresholds", eval_thresholds, "mIoU thresholds")->expected(1, 16);

    auto* synth = app.add_subcommand("synth", "box-only records -> synthetic prompts");
    add_common(synth, flags);

    auto* oracle = app.add_subcommand("oracle", "Gaussian upper-bound baseline");
    add_common(oracle, flags);

    auto* ablate = app.add_subcommand("ablate", "alpha in {0, 0.1, 1} sweep");
    add_common(ablate, flags);

    auto* pipeline = app.add_subcommand("pipeline", "full run with stage caching");
    add_common(pipeline, flags);

    if (argc <= 1) {
        std::cout << app.help();
        return 1;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        json overrides = json::object();
        if (curate->parsed() && curate_scope) overrides["curate"]["scope"] = *curate_scope;
        if (tune->parsed()) {
            if (tune_alpha) overrides["tune"]["alpha"] = *tune_alpha;
            if (tune_eps) overrides["tune"]["eps_mask"] = *tune_eps;
            if (tune_lr) overrides["tune"]["lr"] = *tune_lr;
            if (tune_steps) overrides["tune"]["steps"] = *tune_steps;
            if (tune_div) overrides["tune"]["div_loss"] = parse_switch(*tune_div, "--div-loss");
            if (tune_optimizer) overrides["tune"]["optimizer"] = *tune_optimizer;
        }
        if (eval_cmd->parsed()) {
            if (eval_otsu) overrides["eval"]["otsu"] = parse_switch(*eval_otsu, "--otsu");
            if (eval_resamples) overrides["eval"]["resamples"] = *eval_resamples;
            if (eval_workers) overrides["eval"]["workers"] = *eval_workers;
            if (eval_thresholds) overrides["eval"]["thresholds"] = *eval_thresholds;
        }
        const RunConfig cfg = build_config(flags, overrides);

        gtune::pipeline::StageOutcome outcome;
        if (curate->parsed()) {
            outcome = gtune::pipeline::run_curate(cfg);
        } else if (atlas_build->parsed()) {
            outcome = gtune::pipeline::run_atlas_build(cfg);
        } else if (atlas_render->parsed()) {
            outcome = gtune::pipeline::run_atlas_render(cfg, render_location, render_resolution);
        } else if (tune->parsed()) {
            outcome = gtune::pipeline::run_tune(cfg);
        } else if (predict->parsed()) {
            outcome = gtune::pipeline::run_predict(cfg);
        } else if (eval_cmd->parsed()) {
            const std::string records = eval_records_path
                                            ? *eval_records_path
                                            : gtune::join_path(cfg.paths.out_dir,
                                                               "predictions.jsonl");
            outcome = gtune::pipeline::run_eval(cfg, records);
        } else if (synth->parsed()) {
            outcome = gtune::pipeline::run_synth(cfg);
        } else if (oracle->parsed()) {
            outcome = gtune::pipeline::run_oracle(cfg);
        } else if (ablate->parsed()) {
            outcome = gtune::pipeline::run_ablate(cfg);
        } else if (pipeline->parsed()) {
            outcome = gtune::pipeline::run_pipeline(cfg);
        }
        return outcome.data_errors > 0 ? 2 : 0;
    } catch (const gtune::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const gtune::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
