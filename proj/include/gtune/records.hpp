#pragma once

#include <string>
#include <vector>

#include "gtune/atlas.hpp"
#include "gtune/curation.hpp"
#include "gtune/eval.hpp"
#include "gtune/synth.hpp"
#include "gtune/tensor.hpp"
#include "gtune/tuning.hpp"

namespace gtune {

// One diagnostic per malformed JSONL line; well-formed lines are unaffected.
struct LineDiagnostic {
    std::size_t line = 0;
    std::string message;
};

struct AnnotationFile {
    std::vector<curation::EntityAnnotation> records;
    std::vector<LineDiagnostic> malformed;
};
AnnotationFile read_annotations(const std::string& path);

void write_curated(const std::string& path, const std::vector<curation::CuratedSample>& samples);
std::vector<curation::CuratedSample> read_curated(const std::string& path);

struct AtlasBoxFile {
    std::vector<atlas::BBox> boxes;
    std::vector<LineDiagnostic> malformed;
};
AtlasBoxFile read_atlas_boxes(const std::string& path);

// Eval records and synth inputs share one schema; the heatmap path is
// optional on input and relative to the records file.
struct EvalRecordFile {
    std::vector<eval::EvalRecord> records;
    std::vector<LineDiagnostic> malformed;
};
EvalRecordFile read_eval_records(const std::string& path);
void write_eval_records(const std::string& path, const std::vector<eval::EvalRecord>& records);

std::vector<synth::SynthInput> to_synth_inputs(const std::vector<eval::EvalRecord>& records);

void write_trace(const std::string& path, const std::vector<tuning::TraceRow>& rows);
std::vector<tuning::TraceRow> read_trace(const std::string& path);

void write_report_jsonl(const std::string& path, const eval::EvalReport& report);
void write_curation_summary(const std::string& path, const curation::CurationSummary& summary);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// 8-bit binary portable graymap, value = round(255 * v) clamped to [0, 255].
void emit_pgm(const Tensor& values, const std::string& path);

std::string dirname_of(const std::string& path);
std::string join_path(const std::string& dir, const std::string& rel);

}  // namespace gtune
