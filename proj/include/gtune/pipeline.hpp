#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "gtune/atlas.hpp"
#include "gtune/attention.hpp"
#include "gtune/curation.hpp"
#include "gtune/eval.hpp"
#include "gtune/tuning.hpp"

namespace gtune::pipeline {

struct RunPaths {
    std::string annotations;
    std::string atlas_boxes;
    std::string eval_records;
    std::string synth_records;
    std::string vocab;
    std::string lexicon;  // empty: builtin default
    std::string codebook;  // optional pre-tuned codebook (tensor path, sidecar .json)
    std::string out_dir = "out";
};

// Full run configuration. Precedence: flag > config file > default; unknown
// config keys are rejected.
struct RunConfig {
    std::uint64_t seed = 2024;
    RunPaths paths;
    attn::ToyBackendConfig backend;
    std::size_t embed_dim = 1024;
    float init_stddev = 1.0f;
    tuning::TuneConfig tune;
    eval::EvalConfig eval;
    curation::CurateOptions curate;
    bool predict_otsu = false;  // Otsu stays off for tuned heatmaps by default
    bool emit_pgm = false;
};

RunConfig load_config(const std::string& path);

// Applies a (possibly nested) JSON tree of overrides onto `cfg`; the CLI
// funnels its flags through here so precedence has a single code path.
void apply_config(RunConfig& cfg, const nlohmann::ordered_json& tree);

// Every stage returns how many data problems it skipped past; the CLI turns a
// nonzero count into exit code 2.
struct StageOutcome {
    std::size_t data_errors = 0;
};

StageOutcome run_curate(const RunConfig& cfg);
StageOutcome run_atlas_build(const RunConfig& cfg);
StageOutcome run_atlas_render(const RunConfig& cfg, const std::string& location,
                              std::size_t resolution);
StageOutcome run_tune(const RunConfig& cfg);
StageOutcome run_predict(const RunConfig& cfg);
StageOutcome run_eval(const RunConfig& cfg, const std::string& records_path);
StageOutcome run_synth(const RunConfig& cfg);
StageOutcome run_oracle(const RunConfig& cfg);
StageOutcome run_ablate(const RunConfig& cfg);
StageOutcome run_pipeline(const RunConfig& cfg);

// Joins curated samples with the atlas: one rendered Gaussian per sample,
// multi-location targets combined by elementwise max. Unresolvable locations
// are skipped with a note.
std::vector<tuning::TuneSample> make_tune_samples(
    const std::vector<curation::CuratedSample>& samples, const atlas::Atlas& lut,
    std::size_t side, std::vector<std::string>* notes = nullptr);

std::uint64_t hash_file(const std::string& path);

void ensure_dir(const std::string& path);

}  // namespace gtune::pipeline
