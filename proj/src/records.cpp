#include "gtune/records.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gtune/errors.hpp"

namespace gtune {

namespace {

using json = nlohmann::ordered_json;

// applies `parse` per line, collecting malformed lines instead of aborting
template <typename Fn>
void for_each_jsonl(const std::string& path, std::vector<LineDiagnostic>& malformed, Fn parse) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            parse(json::parse(line));
        } catch (const std::exception& e) {
            malformed.push_back({lineno, e.what()});
        }
    }
}

json boxes_to_json(const std::vector<eval::Box>& boxes) {
    json arr = json::array();
    for (const auto& b : boxes) arr.push_back({b.x_min, b.y_min, b.x_max, b.y_max});
    return arr;
}

std::vector<eval::Box> boxes_from_json(const json& arr) {
    std::vector<eval::Box> boxes;
    for (const auto& jb : arr) {
        if (!jb.is_array() || jb.size() != 4) throw DataError("box must be [x0, y0, x1, y1]");
        boxes.push_back({jb[0].get<double>(), jb[1].get<double>(), jb[2].get<double>(),
                         jb[3].get<double>()});
    }
    return boxes;
}

}  // namespace

AnnotationFile read_annotations(const std::string& path) {
    AnnotationFile out;
    for_each_jsonl(path, out.malformed, [&](const json& j) {
        curation::EntityAnnotation rec;
        rec.image_id = j.at("image_id").get<std::string>();
        rec.sentence = j.at("sentence").get<std::string>();
        rec.pathology = j.at("pathology").get<std::string>();
        for (const auto& js : j.at("spans")) {
            curation::Span span;
            span.start = js.at("start").get<std::size_t>();
            span.end = js.at("end").get<std::size_t>();
            span.label = js.at("label").get<std::string>();
            rec.spans.push_back(span);
        }
        out.records.push_back(std::move(rec));
    });
    return out;
}

void write_curated(const std::string& path, const std::vector<curation::CuratedSample>& samples) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    for (const auto& s : samples) {
        json j;
        j["image_id"] = s.image_id;
        j["prompt"] = s.prompt;
        j["locations"] = s.locations;
        j["pathology"] = s.pathology;
        out << j.dump() << "\n";
    }
}

std::vector<curation::CuratedSample> read_curated(const std::string& path) {
    std::vector<curation::CuratedSample> samples;
    std::vector<LineDiagnostic> malformed;
    for_each_jsonl(path, malformed, [&](const json& j) {
        curation::CuratedSample s;
        s.image_id = j.at("image_id").get<std::string>();
        s.prompt = j.at("prompt").get<std::string>();
        for (const auto& loc : j.at("locations")) s.locations.push_back(loc.get<std::string>());
        s.pathology = j.at("pathology").get<std::string>();
        samples.push_back(std::move(s));
    });
    if (!malformed.empty()) {
        throw DataError("curated file " + path + ": line " +
                        std::to_string(malformed.front().line) + ": " +
                        malformed.front().message);
    }
    return samples;
}

AtlasBoxFile read_atlas_boxes(const std::string& path) {
    AtlasBoxFile out;
    for_each_jsonl(path, out.malformed, [&](const json& j) {
        atlas::BBox b;
        b.image_id = j.at("image_id").get<std::string>();
        b.location = j.at("location").get<std::string>();
        b.x_min = j.at("x_min").get<double>();
        b.y_min = j.at("y_min").get<double>();
        b.x_max = j.at("x_max").get<double>();
        b.y_max = j.at("y_max").get<double>();
        b.validate();
        out.boxes.push_back(std::move(b));
    });
    return out;
}

EvalRecordFile read_eval_records(const std::string& path) {
    EvalRecordFile out;
    for_each_jsonl(path, out.malformed, [&](const json& j) {
        eval::EvalRecord rec;
        rec.image_id = j.at("image_id").get<std::string>();
        rec.class_name = j.at("class").get<std::string>();
        rec.boxes = boxes_from_json(j.at("boxes"));
        const auto& size = j.at("image_size");
        if (!size.is_array() || size.size() != 2) throw DataError("image_size must be [H, W]");
        rec.height = size[0].get<std::size_t>();
        rec.width = size[1].get<std::size_t>();
        if (j.contains("heatmap")) rec.heatmap_path = j.at("heatmap").get<std::string>();
        rec.validate();
        out.records.push_back(std::move(rec));
    });
    return out;
}

void write_eval_records(const std::string& path, const std::vector<eval::EvalRecord>& records) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    for (const auto& rec : records) {
        json j;
        j["image_id"] = rec.image_id;
        j["class"] = rec.class_name;
        j["boxes"] = boxes_to_json(rec.boxes);
        j["image_size"] = {rec.height, rec.width};
        if (!rec.heatmap_path.empty()) j["heatmap"] = rec.heatmap_path;
        out << j.dump() << "\n";
    }
}

std::vector<synth::SynthInput> to_synth_inputs(const std::vector<eval::EvalRecord>& records) {
    std::vector<synth::SynthInput> inputs;
    for (const auto& rec : records) {
        synth::SynthInput in;
        in.image_id = rec.image_id;
        in.class_name = rec.class_name;
        in.boxes = rec.boxes;
        in.height = rec.height;
        in.width = rec.width;
        inputs.push_back(std::move(in));
    }
    return inputs;
}

void write_trace(const std::string& path, const std::vector<tuning::TraceRow>& rows) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    for (const auto& r : rows) {
        json j;
        j["step"] = r.step;
        j["loss_div"] = r.loss_div;
        j["loss_loc"] = r.loss_loc;
        out << j.dump() << "\n";
    }
}

std::vector<tuning::TraceRow> read_trace(const std::string& path) {
    std::vector<tuning::TraceRow> rows;
    std::vector<LineDiagnostic> malformed;
    for_each_jsonl(path, malformed, [&](const json& j) {
        rows.push_back({j.at("step").get<int>(), j.at("loss_div").get<double>(),
                        j.at("loss_loc").get<double>()});
    });
    if (!malformed.empty()) throw DataError("trace file " + path + " has malformed lines");
    return rows;
}

void write_report_jsonl(const std::string& path, const eval::EvalReport& report) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    for (const auto& c : report.classes) {
        json j;
        j["class"] = c.class_name;
        j["n"] = c.n;
        j["cnr_mean"] = c.cnr_mean;
        j["cnr_lo"] = c.cnr_lo;
        j["cnr_hi"] = c.cnr_hi;
        j["miou_mean"] = c.miou_mean;
        j["miou_lo"] = c.miou_lo;
        j["miou_hi"] = c.miou_hi;
        j["cnr_missing"] = c.cnr_missing;
        j["cnr_capped"] = c.cnr_capped;
        out << j.dump() << "\n";
    }
    json avg;
    avg["class"] = "Average";
    avg["n"] = report.records;
    avg["cnr_mean"] = report.avg_cnr;
    avg["miou_mean"] = report.avg_miou;
    out << avg.dump() << "\n";
}

void write_curation_summary(const std::string& path, const curation::CurationSummary& s) {
    json j;
    j["records"] = s.records;
    j["kept_sentences"] = s.kept_sentences;
    j["skipped_no_mention"] = s.skipped_no_mention;
    j["skipped_negation"] = s.skipped_negation;
    j["skipped_resolution"] = s.skipped_resolution;
    j["malformed"] = s.malformed;
    j["dropped_terms"] = s.dropped_terms;
    j["without_location"] = s.without_location;
    j["samples"] = s.samples;
    j["per_location"] = s.per_location;
    j["per_pathology"] = s.per_pathology;
    write_text_file(path, j.dump(2) + "\n");
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    out << content;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void emit_pgm(const Tensor& values, const std::string& path) {
    if (values.rank() != 2) throw ValidationError("emit_pgm: need a 2D map");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    out << "P5\n" << values.shape[1] << " " << values.shape[0] << "\n255\n";
    for (float v : values.data) {
        long q = std::lround(255.0 * static_cast<double>(v));
        q = std::min(255L, std::max(0L, q));
        out.put(static_cast<char>(static_cast<unsigned char>(q)));
    }
}

std::string dirname_of(const std::string& path) {
    const auto pos = path.find_last_of('/');
    if (pos == std::string::npos) return ".";
    if (pos == 0) return "/";
    return path.substr(0, pos);
}

std::string join_path(const std::string& dir, const std::string& rel) {
    if (rel.empty()) return dir;
    if (rel.front() == '/') return rel;
    if (dir.empty() || dir == ".") return rel;
    return dir.back() == '/' ? dir + rel : dir + "/" + rel;
}

}  // namespace gtune
