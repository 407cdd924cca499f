#include "gtune/pipeline.hpp"

#include <sys/stat.h>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "gtune/codebook.hpp"
#include "gtune/errors.hpp"
#include "gtune/records.hpp"
#include "gtune/rng.hpp"
#include "gtune/synth.hpp"

namespace gtune::pipeline {

namespace {
using json = nlohmann::ordered_json;
}

void ensure_dir(const std::string& path) {
    if (path.empty() || path == ".") return;
    std::string cur;
    std::stringstream ss(path);
    std::string part;
    while (std::getline(ss, part, '/')) {
        if (part.empty()) {
            cur += "/";
            continue;
        }
        cur += cur.empty() || cur.back() == '/' ? part : "/" + part;
        ::mkdir(cur.c_str(), 0755);
    }
    struct stat st{};
    if (::stat(path.c_str(), &st) != 0 || !S_ISDIR(st.st_mode)) {
        throw ValidationError("cannot create directory: " + path);
    }
}

std::uint64_t hash_file(const std::string& path) {
    const std::string bytes = read_text_file(path);
    return fnv1a64(bytes);
}

// ---------------------------------------------------------------------------
// config

namespace {

void expect_keys(const json& j, const std::vector<std::string>& known,
                 const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw ValidationError("unknown config key '" + key + "' in " + where);
        }
    }
}

void apply_paths(RunPaths& p, const json& j) {
    expect_keys(j,
                {"annotations", "atlas_boxes", "eval_records", "synth_records", "vocab",
                 "lexicon", "codebook", "out_dir"},
                "paths");
    if (j.contains("annotations")) p.annotations = j["annotations"].get<std::string>();
    if (j.contains("atlas_boxes")) p.atlas_boxes = j["atlas_boxes"].get<std::string>();
    if (j.contains("eval_records")) p.eval_records = j["eval_records"].get<std::string>();
    if (j.contains("synth_records")) p.synth_records = j["synth_records"].get<std::string>();
    if (j.contains("vocab")) p.vocab = j["vocab"].get<std::string>();
    if (j.contains("lexicon")) p.lexicon = j["lexicon"].get<std::string>();
    if (j.contains("codebook")) p.codebook = j["codebook"].get<std::string>();
    if (j.contains("out_dir")) p.out_dir = j["out_dir"].get<std::string>();
}

void apply_backend(attn::ToyBackendConfig& b, const json& j) {
    expect_keys(j,
                {"timesteps", "layers", "features", "tokens", "key_dim", "channels", "noise",
                 "query_scale", "timestep_start", "softmax_axis"},
                "backend");
    if (j.contains("timesteps")) b.dims.timesteps = j["timesteps"].get<std::size_t>();
    if (j.contains("layers")) b.dims.layers = j["layers"].get<std::size_t>();
    if (j.contains("features")) b.dims.features = j["features"].get<std::size_t>();
    if (j.contains("tokens")) b.dims.tokens = j["tokens"].get<std::size_t>();
    if (j.contains("key_dim")) b.key_dim = j["key_dim"].get<std::size_t>();
    if (j.contains("channels")) b.channels = j["channels"].get<std::size_t>();
    if (j.contains("noise")) b.noise = j["noise"].get<float>();
    if (j.contains("query_scale")) b.query_scale = j["query_scale"].get<float>();
    if (j.contains("timestep_start")) b.timestep_start = j["timestep_start"].get<int>();
    if (j.contains("softmax_axis")) {
        b.axis = attn::softmax_axis_from_string(j["softmax_axis"].get<std::string>());
    }
}

void apply_tune(tuning::TuneConfig& t, const json& j) {
    expect_keys(j,
                {"alpha", "eps_mask", "lr", "steps", "batch_size", "optimizer", "div_loss",
                 "alpha_inside_mask_only"},
                "tune");
    if (j.contains("alpha")) t.alpha = j["alpha"].get<double>();
    if (j.contains("eps_mask")) t.eps_mask = j["eps_mask"].get<double>();
    if (j.contains("lr")) t.lr = j["lr"].get<double>();
    if (j.contains("steps")) t.steps = j["steps"].get<int>();
    if (j.contains("batch_size")) t.batch_size = j["batch_size"].get<int>();
    if (j.contains("optimizer")) t.optimizer = j["optimizer"].get<std::string>();
    if (j.contains("div_loss")) t.div_loss = j["div_loss"].get<bool>();
    if (j.contains("alpha_inside_mask_only")) {
        t.alpha_inside_mask_only = j["alpha_inside_mask_only"].get<bool>();
    }
}

void apply_eval(eval::EvalConfig& e, const json& j) {
    expect_keys(j, {"otsu", "resamples", "level", "thresholds", "workers"}, "eval");
    if (j.contains("otsu")) e.otsu = j["otsu"].get<bool>();
    if (j.contains("resamples")) e.resamples = j["resamples"].get<int>();
    if (j.contains("level")) e.level = j["level"].get<double>();
    if (j.contains("thresholds")) {
        e.thresholds.clear();
        for (const auto& t : j["thresholds"]) e.thresholds.push_back(t.get<double>());
    }
    if (j.contains("workers")) e.workers = j["workers"].get<int>();
}

void apply_curate(curation::CurateOptions& c, const json& j) {
    expect_keys(j, {"scope", "multi_location_prompts"}, "curate");
    if (j.contains("scope")) {
        const std::string s = j["scope"].get<std::string>();
        if (s == "sentence") {
            c.scope = curation::Scope::Sentence;
        } else if (s == "report") {
            c.scope = curation::Scope::Report;
        } else {
            throw ValidationError("curate.scope must be 'sentence' or 'report'");
        }
    }
    if (j.contains("multi_location_prompts")) {
        c.multi_location_prompts = j["multi_location_prompts"].get<bool>();
    }
}

}  // namespace

void apply_config(RunConfig& cfg, const json& tree) {
    expect_keys(tree,
                {"seed", "paths", "backend", "embed_dim", "init_stddev", "tune", "eval",
                 "curate", "predict_otsu", "emit_pgm"},
                "config");
    if (tree.contains("seed")) cfg.seed = tree["seed"].get<std::uint64_t>();
    if (tree.contains("paths")) apply_paths(cfg.paths, tree["paths"]);
    if (tree.contains("backend")) apply_backend(cfg.backend, tree["backend"]);
    if (tree.contains("embed_dim")) cfg.embed_dim = tree["embed_dim"].get<std::size_t>();
    if (tree.contains("init_stddev")) cfg.init_stddev = tree["init_stddev"].get<float>();
    if (tree.contains("tune")) apply_tune(cfg.tune, tree["tune"]);
    if (tree.contains("eval")) apply_eval(cfg.eval, tree["eval"]);
    if (tree.contains("curate")) apply_curate(cfg.curate, tree["curate"]);
    if (tree.contains("predict_otsu")) cfg.predict_otsu = tree["predict_otsu"].get<bool>();
    if (tree.contains("emit_pgm")) cfg.emit_pgm = tree["emit_pgm"].get<bool>();
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config: " + path);
    json tree;
    try {
        in >> tree;
    } catch (const json::exception& e) {
        throw ValidationError("config parse error in " + path + ": " + e.what());
    }
    RunConfig cfg;
    apply_config(cfg, tree);
    return cfg;
}

// ---------------------------------------------------------------------------
// stage cache

namespace {

// Manifest entries hold out_dir-relative paths so reruns into different
// directories stay byte-identical.
class StageCache {
  public:
    explicit StageCache(std::string out_dir)
        : out_dir_(std::move(out_dir)), path_(join_path(out_dir_, "cache.json")) {
        std::ifstream in(path_);
        if (in) {
            try {
                in >> manifest_;
            } catch (const json::exception&) {
                manifest_ = json::object();  // stale cache is not fatal
            }
        }
        if (!manifest_.is_object()) manifest_ = json::object();
    }

    bool hit(const std::string& stage, std::uint64_t key,
             const std::vector<std::string>& outputs) const {
        if (!manifest_.contains(stage)) return false;
        if (manifest_[stage].value("key", std::string()) != key_str(key)) return false;
        for (const auto& f : outputs) {
            std::ifstream probe(join_path(out_dir_, f));
            if (!probe) return false;
        }
        return true;
    }

    void store(const std::string& stage, std::uint64_t key,
               const std::vector<std::string>& outputs) {
        json entry;
        entry["key"] = key_str(key);
        entry["outputs"] = outputs;
        manifest_[stage] = entry;
        write_text_file(path_, manifest_.dump(2) + "\n");
    }

  private:
    static std::string key_str(std::uint64_t key) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(key));
        return buf;
    }

    std::string out_dir_;
    std::string path_;
    json manifest_;
};

std::uint64_t combine(std::uint64_t h, std::uint64_t v) {
    return fnv1a64(&v, sizeof(v), h);
}

std::uint64_t hash_string(std::uint64_t h, const std::string& s) {
    return fnv1a64(s.data(), s.size(), h);
}

curation::Lexicon load_lexicon(const RunConfig& cfg) {
    return cfg.paths.lexicon.empty() ? curation::Lexicon::builtin_default()
                                     : curation::Lexicon::load(cfg.paths.lexicon);
}

void require_path(const std::string& path, const std::string& what) {
    if (path.empty()) throw ValidationError("missing required path: " + what);
    std::ifstream probe(path);
    if (!probe) throw ValidationError(what + " not readable: " + path);
}

std::string out_file(const RunConfig& cfg, const std::string& name) {
    return join_path(cfg.paths.out_dir, name);
}

std::uint64_t tune_key(const RunConfig& cfg) {
    std::uint64_t h = fnv1a64("tune");
    h = combine(h, cfg.seed);
    h = combine(h, hash_file(out_file(cfg, "curated.jsonl")));
    h = combine(h, hash_file(out_file(cfg, "atlas.tsv")));
    h = combine(h, hash_file(cfg.paths.vocab));
    std::ostringstream os;
    os << cfg.tune.alpha << "|" << cfg.tune.eps_mask << "|" << cfg.tune.lr << "|"
       << cfg.tune.steps << "|" << cfg.tune.optimizer << "|" << cfg.tune.div_loss << "|"
       << cfg.tune.alpha_inside_mask_only << "|" << cfg.embed_dim << "|" << cfg.init_stddev
       << "|" << cfg.backend.dims.timesteps << "|" << cfg.backend.dims.layers << "|"
       << cfg.backend.dims.features << "|" << cfg.backend.dims.tokens << "|"
       << cfg.backend.key_dim << "|" << cfg.backend.channels << "|" << cfg.backend.noise << "|"
       << cfg.backend.query_scale << "|" << cfg.backend.timestep_start << "|"
       << attn::to_string(cfg.backend.axis);
    return hash_string(h, os.str());
}

}  // namespace

// ---------------------------------------------------------------------------
// stages

std::vector<tuning::TuneSample> make_tune_samples(
    const std::vector<curation::CuratedSample>& samples, const atlas::Atlas& lut,
    std::size_t side, std::vector<std::string>* notes) {
    std::vector<tuning::TuneSample> out;
    for (const auto& s : samples) {
        bool ok = true;
        Tensor grid = Tensor::zeros({side, side});
        for (const auto& loc : s.locations) {
            if (!lut.contains(loc)) {
                ok = false;
                if (notes) {
                    notes->push_back("sample " + s.image_id + ": location '" + loc +
                                     "' not in atlas, skipped");
                }
                break;
            }
            const Tensor g = atlas::render_gaussian(lut.lookup(loc), side, side);
            for (std::size_t i = 0; i < grid.numel(); ++i) {
                grid.data[i] = std::max(grid.data[i], g.data[i]);
            }
        }
        if (!ok) continue;
        out.push_back({s.image_id, s.prompt, std::move(grid)});
    }
    return out;
}

StageOutcome run_curate(const RunConfig& cfg) {
    require_path(cfg.paths.annotations, "paths.annotations");
    ensure_dir(cfg.paths.out_dir);
    const AnnotationFile input = read_annotations(cfg.paths.annotations);
    for (const auto& d : input.malformed) {
        std::cerr << "curate: " << cfg.paths.annotations << ":" << d.line << ": " << d.message
                  << "\n";
    }
    const curation::Lexicon lexicon = load_lexicon(cfg);
    std::vector<curation::CuratedSample> samples;
    std::vector<std::string> notes;
    curation::CurationSummary summary =
        curation::curate(input.records, lexicon, cfg.curate, samples, &notes);
    summary.malformed += input.malformed.size();
    for (const auto& n : notes) std::cerr << "curate: " << n << "\n";
    write_curated(out_file(cfg, "curated.jsonl"), samples);
    write_curation_summary(out_file(cfg, "curation_summary.json"), summary);
    std::cout << "curate: " << summary.samples << " samples from " << summary.records
              << " records (" << summary.malformed << " malformed)\n";
    return {summary.malformed};
}

StageOutcome run_atlas_build(const RunConfig& cfg) {
    require_path(cfg.paths.atlas_boxes, "paths.atlas_boxes");
    ensure_dir(cfg.paths.out_dir);
    const AtlasBoxFile input = read_atlas_boxes(cfg.paths.atlas_boxes);
    for (const auto& d : input.malformed) {
        std::cerr << "atlas-build: " << cfg.paths.atlas_boxes << ":" << d.line << ": "
                  << d.message << "\n";
    }
    const atlas::Atlas lut = atlas::build_atlas(input.boxes);
    lut.save(out_file(cfg, "atlas.tsv"));
    std::cout << "atlas-build: " << lut.size() << " locations from " << input.boxes.size()
              << " boxes\n";
    return {input.malformed.size()};
}

StageOutcome run_atlas_render(const RunConfig& cfg, const std::string& location,
                              std::size_t resolution) {
    const std::string atlas_path = out_file(cfg, "atlas.tsv");
    require_path(atlas_path, "atlas file (run atlas-build first)");
    const atlas::Atlas lut = atlas::Atlas::load(atlas_path);
    ensure_dir(join_path(cfg.paths.out_dir, "grids"));
    std::vector<std::string> targets;
    if (location == "all") {
        targets = lut.locations();
    } else {
        targets = {location};
    }
    for (const auto& name : targets) {
        const Tensor grid = atlas::render_gaussian(lut.lookup(name), resolution, resolution);
        std::string file = name;
        std::replace(file.begin(), file.end(), ' ', '_');
        write_tensor(join_path(cfg.paths.out_dir, "grids/" + file + ".gtt"), grid);
        if (cfg.emit_pgm) {
            emit_pgm(grid, join_path(cfg.paths.out_dir, "grids/" + file + ".pgm"));
        }
    }
    std::cout << "atlas-render: " << targets.size() << " grid(s) at " << resolution << "x"
              << resolution << "\n";
    return {};
}

StageOutcome run_tune(const RunConfig& cfg) {
    require_path(cfg.paths.vocab, "paths.vocab");
    const std::string curated_path = out_file(cfg, "curated.jsonl");
    const std::string atlas_path = out_file(cfg, "atlas.tsv");
    require_path(curated_path, "curated samples (run curate first)");
    require_path(atlas_path, "atlas file (run atlas-build first)");

    const std::vector<curation::CuratedSample> curated = read_curated(curated_path);
    const atlas::Atlas lut = atlas::Atlas::load(atlas_path);

    const attn::ToyBackend backend(stage_seed(cfg.seed, "backend"), cfg.backend);
    std::vector<std::string> notes;
    const std::vector<tuning::TuneSample> samples =
        make_tune_samples(curated, lut, cfg.backend.dims.side(), &notes);
    for (const auto& n : notes) std::cerr << "tune: " << n << "\n";

    Codebook codebook =
        cfg.paths.codebook.empty()
            ? random_codebook(load_vocab(cfg.paths.vocab), cfg.embed_dim, cfg.seed,
                              cfg.init_stddev)
            : load_codebook(cfg.paths.codebook,
                            cfg.paths.codebook.substr(0, cfg.paths.codebook.rfind('.')) +
                                ".json");

    tuning::TuneConfig tune_cfg = cfg.tune;
    tune_cfg.seed = cfg.seed;
    const tuning::TuneResult result = tuning::optimize(samples, std::move(codebook), backend,
                                                       tune_cfg);
    save_codebook(result.codebook, out_file(cfg, "codebook.gtt"), out_file(cfg, "codebook.json"));
    write_trace(out_file(cfg, "trace.jsonl"), result.trace);
    std::cout << "tune: " << samples.size() << " sample(s), " << cfg.tune.steps
              << " steps, final loss_loc " << result.trace.back().loss_loc << "\n";
    return {notes.size()};
}

StageOutcome run_predict(const RunConfig& cfg) {
    require_path(cfg.paths.eval_records, "paths.eval_records");
    const std::string curated_path = out_file(cfg, "curated.jsonl");
    require_path(curated_path, "curated samples (run curate first)");
    const std::string codebook_path = out_file(cfg, "codebook.gtt");
    require_path(codebook_path, "codebook (run tune first)");

    const Codebook codebook = load_codebook(codebook_path, out_file(cfg, "codebook.json"));
    const attn::ToyBackend backend(stage_seed(cfg.seed, "backend"), cfg.backend);

    const std::vector<curation::CuratedSample> curated = read_curated(curated_path);
    std::map<std::string, const curation::CuratedSample*> by_image;
    std::size_t data_errors = 0;
    for (const auto& s : curated) {
        if (!by_image.emplace(s.image_id, &s).second) {
            std::cerr << "predict: duplicate prompt for image " << s.image_id
                      << ", keeping the first\n";
            ++data_errors;
        }
    }

    EvalRecordFile records = read_eval_records(cfg.paths.eval_records);
    data_errors += records.malformed.size();
    for (const auto& d : records.malformed) {
        std::cerr << "predict: " << cfg.paths.eval_records << ":" << d.line << ": " << d.message
                  << "\n";
    }
    ensure_dir(join_path(cfg.paths.out_dir, "heatmaps"));

    std::vector<eval::EvalRecord> out_records;
    for (auto& rec : records.records) {
        auto it = by_image.find(rec.image_id);
        if (it == by_image.end()) {
            std::cerr << "predict: no curated prompt for image " << rec.image_id
                      << ", skipped\n";
            ++data_errors;
            continue;
        }
        const attn::ForwardResult fr =
            backend.forward_prompt(codebook, it->second->prompt, rec.image_id);
        const Tensor raw = fr.mean_heatmap();
        const eval::Heatmap heatmap =
            eval::postprocess(raw, rec.height, rec.width, cfg.predict_otsu);
        const std::string rel = "heatmaps/" + rec.image_id + ".gtt";
        write_tensor(out_file(cfg, rel), heatmap.values);
        if (cfg.emit_pgm) {
            emit_pgm(heatmap.values, out_file(cfg, "heatmaps/" + rec.image_id + ".pgm"));
        }
        rec.heatmap_path = rel;
        out_records.push_back(rec);
    }
    write_eval_records(out_file(cfg, "predictions.jsonl"), out_records);
    std::cout << "predict: " << out_records.size() << " heatmap(s)\n";
    return {data_errors};
}

StageOutcome run_eval(const RunConfig& cfg, const std::string& records_path) {
    require_path(records_path, "eval records");
    EvalRecordFile file = read_eval_records(records_path);
    for (const auto& d : file.malformed) {
        std::cerr << "eval: " << records_path << ":" << d.line << ": " << d.message << "\n";
    }
    std::size_t data_errors = file.malformed.size();
    const std::string base = dirname_of(records_path);
    std::vector<eval::EvalRecord> ready;
    for (auto& rec : file.records) {
        if (rec.heatmap_path.empty()) {
            std::cerr << "eval: record " << rec.image_id << " has no heatmap, skipped\n";
            ++data_errors;
            continue;
        }
        rec.heatmap.values = read_tensor(join_path(base, rec.heatmap_path));
        rec.heatmap.provenance = eval::Provenance::Normalized;
        if (cfg.eval.otsu) {
            const double thr = eval::otsu_threshold(rec.heatmap.values);
            for (auto& v : rec.heatmap.values.data) {
                if (v < thr) v = 0.0f;
            }
            rec.heatmap.provenance = eval::Provenance::Otsu;
        }
        ready.push_back(std::move(rec));
    }
    eval::EvalConfig eval_cfg = cfg.eval;
    eval_cfg.seed = stage_seed(cfg.seed, "eval");
    const eval::EvalReport report = eval::evaluate(ready, eval_cfg);
    for (const auto& w : report.warnings) std::cerr << "eval: " << w << "\n";
    ensure_dir(cfg.paths.out_dir);
    write_text_file(out_file(cfg, "report.txt"), eval::format_report(report));
    write_report_jsonl(out_file(cfg, "report.jsonl"), report);
    std::cout << eval::format_report(report);
    return {data_errors};
}

StageOutcome run_synth(const RunConfig& cfg) {
    require_path(cfg.paths.synth_records, "paths.synth_records");
    const std::string atlas_path = out_file(cfg, "atlas.tsv");
    require_path(atlas_path, "atlas file (run atlas-build first)");
    const atlas::Atlas lut = atlas::Atlas::load(atlas_path);
    EvalRecordFile file = read_eval_records(cfg.paths.synth_records);
    for (const auto& d : file.malformed) {
        std::cerr << "synth: " << cfg.paths.synth_records << ":" << d.line << ": " << d.message
                  << "\n";
    }
    std::vector<curation::CuratedSample> samples;
    std::vector<std::string> notes;
    const synth::SynthStats stats =
        synth::synth_prompts(to_synth_inputs(file.records), lut, samples, &notes);
    for (const auto& n : notes) std::cerr << "synth: " << n << "\n";
    ensure_dir(cfg.paths.out_dir);
    write_curated(out_file(cfg, "synthetic.jsonl"), samples);
    std::cout << "synth: " << stats.samples << " prompt(s) from " << stats.records
              << " record(s)\n";
    return {file.malformed.size() + stats.skipped};
}

StageOutcome run_oracle(const RunConfig& cfg) {
    require_path(cfg.paths.eval_records, "paths.eval_records");
    EvalRecordFile file = read_eval_records(cfg.paths.eval_records);
    for (const auto& d : file.malformed) {
        std::cerr << "oracle: " << cfg.paths.eval_records << ":" << d.line << ": " << d.message
                  << "\n";
    }
    ensure_dir(join_path(cfg.paths.out_dir, "oracle_heatmaps"));
    std::vector<eval::EvalRecord> out_records;
    for (auto& rec : file.records) {
        const eval::Heatmap h = eval::oracle_heatmap(rec.boxes, rec.height, rec.width);
        const std::string rel = "oracle_heatmaps/" + rec.image_id + ".gtt";
        write_tensor(out_file(cfg, rel), h.values);
        if (cfg.emit_pgm) {
            emit_pgm(h.values, out_file(cfg, "oracle_heatmaps/" + rec.image_id + ".pgm"));
        }
        rec.heatmap_path = rel;
        rec.heatmap = h;
        out_records.push_back(std::move(rec));
    }
    write_eval_records(out_file(cfg, "oracle_records.jsonl"), out_records);
    eval::EvalConfig eval_cfg = cfg.eval;
    eval_cfg.seed = stage_seed(cfg.seed, "eval");
    const eval::EvalReport report = eval::evaluate(out_records, eval_cfg);
    write_text_file(out_file(cfg, "oracle_report.txt"), eval::format_report(report));
    write_report_jsonl(out_file(cfg, "oracle_report.jsonl"), report);
    std::cout << eval::format_report(report);
    return {file.malformed.size()};
}

StageOutcome run_ablate(const RunConfig& cfg) {
    StageOutcome total;
    for (const double alpha : {0.0, 0.1, 1.0}) {
        RunConfig sub = cfg;
        std::ostringstream name;
        name << "alpha-" << alpha;
        sub.paths.out_dir = join_path(cfg.paths.out_dir, "ablate/" + name.str());
        sub.tune.alpha = alpha;
        ensure_dir(sub.paths.out_dir);
        std::cout << "== ablate " << name.str() << " ==\n";
        const StageOutcome outcome = run_pipeline(sub);
        total.data_errors += outcome.data_errors;
    }
    return total;
}

StageOutcome run_pipeline(const RunConfig& cfg) {
    ensure_dir(cfg.paths.out_dir);
    StageCache cache(cfg.paths.out_dir);
    StageOutcome total;

    require_path(cfg.paths.annotations, "paths.annotations");
    require_path(cfg.paths.atlas_boxes, "paths.atlas_boxes");
    require_path(cfg.paths.eval_records, "paths.eval_records");
    require_path(cfg.paths.vocab, "paths.vocab");

    auto stage = [&](const std::string& name, std::uint64_t key,
                     const std::vector<std::string>& outputs, auto&& fn) {
        if (cache.hit(name, key, outputs)) {
            std::cout << name << ": cached\n";
            return;
        }
        const StageOutcome outcome = fn();
        total.data_errors += outcome.data_errors;
        cache.store(name, key, outputs);
    };

    // curate
    {
        std::uint64_t key = fnv1a64("curate");
        key = combine(key, hash_file(cfg.paths.annotations));
        if (!cfg.paths.lexicon.empty()) key = combine(key, hash_file(cfg.paths.lexicon));
        key = combine(key, cfg.curate.scope == curation::Scope::Report ? 1 : 0);
        key = combine(key, cfg.curate.multi_location_prompts ? 1 : 0);
        stage("curate", key, {"curated.jsonl"}, [&] { return run_curate(cfg); });
    }
    // atlas
    {
        std::uint64_t key = fnv1a64("atlas-build");
        key = combine(key, hash_file(cfg.paths.atlas_boxes));
        stage("atlas-build", key, {"atlas.tsv"}, [&] { return run_atlas_build(cfg); });
    }
    // tune
    const std::uint64_t tkey = tune_key(cfg);
    stage("tune", tkey, {"codebook.gtt", "codebook.json", "trace.jsonl"},
          [&] { return run_tune(cfg); });
    // predict
    std::uint64_t pkey = combine(tkey, fnv1a64("predict"));
    pkey = combine(pkey, hash_file(cfg.paths.eval_records));
    pkey = combine(pkey, cfg.predict_otsu ? 1 : 0);
    stage("predict", pkey, {"predictions.jsonl"}, [&] { return run_predict(cfg); });
    // eval
    {
        std::uint64_t key = combine(pkey, fnv1a64("eval"));
        std::ostringstream os;
        os << cfg.eval.otsu << "|" << cfg.eval.resamples << "|" << cfg.eval.level << "|"
           << cfg.eval.workers << "|";
        for (double t : cfg.eval.thresholds) os << t << ",";
        key = hash_string(key, os.str());
        key = combine(key, cfg.seed);
        stage("eval", key, {"report.txt", "report.jsonl"},
              [&] { return run_eval(cfg, out_file(cfg, "predictions.jsonl")); });
    }
    return total;
}

}  // namespace gtune::pipeline
