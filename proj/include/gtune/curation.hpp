#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace gtune::curation {

inline const std::vector<std::string> kPathologies = {
    "Atelectasis",  "Cardiomegaly",     "Consolidation", "Edema",
    "Lung Opacity", "Pleural Effusion", "Pneumonia",     "Pneumothorax"};

// Negation / resolution cues and per-pathology synonym phrases. The shipped
// default covers the documented examples; site-specific lists go in a config.
struct Lexicon {
    std::vector<std::string> negation;
    std::vector<std::string> resolution;
    std::map<std::string, std::vector<std::string>> synonyms;  // pathology -> phrases

    static Lexicon builtin_default();
    static Lexicon load(const std::string& path);
    void validate() const;
};

struct Span {
    std::size_t start = 0, end = 0;
    std::string label;  // "ANAT-DP" spans carry locations; others are ignored
};

struct EntityAnnotation {
    std::string image_id;
    std::string sentence;
    std::vector<Span> spans;
    std::string pathology;

    void validate() const;  // spans inside the sentence, known pathology
};

struct CuratedSample {
    std::string image_id;
    std::string prompt;
    std::vector<std::string> locations;
    std::string pathology;
};

enum class SkipReason { None, NoMention, Negation, Resolution };

struct FilterDecision {
    bool keep = false;
    SkipReason reason = SkipReason::None;
};

// Keep iff the sentence mentions the pathology or a synonym (whole-word,
// case-insensitive, plural-aware via trailing s/es) and carries no negation or
// resolution cue.
FilterDecision filter_sentence(const std::string& sentence, const std::string& pathology,
                               const Lexicon& lexicon);

struct DroppedTerm {
    std::string term;
    std::string why;
};

// Raw ANAT-DP span texts -> canonical terms: left/right pairs over one region
// collapse to "bilateral {region}", "bilateral base" becomes "bibasilar",
// unmappable terms are dropped and recorded. Deduplicated, order-stable.
std::vector<std::string> normalize_locations(const std::vector<std::string>& raw_terms,
                                             std::vector<DroppedTerm>* dropped = nullptr);

// "{location} {pathology}" with multi-location terms bound by " <and> ". The
// degenerate "cardiomegaly cardiomegaly" prompt collapses to one word.
std::string build_prompt(const std::vector<std::string>& locations,
                         const std::string& pathology);

enum class Scope { Sentence, Report };

struct CurateOptions {
    Scope scope = Scope::Report;
    bool multi_location_prompts = true;  // off: one single-location sample per term
};

struct CurationSummary {
    std::size_t records = 0;
    std::size_t kept_sentences = 0;
    std::size_t skipped_no_mention = 0;
    std::size_t skipped_negation = 0;
    std::size_t skipped_resolution = 0;
    std::size_t malformed = 0;
    std::size_t dropped_terms = 0;
    std::size_t without_location = 0;
    std::size_t samples = 0;
    std::map<std::string, std::size_t> per_location;
    std::map<std::string, std::size_t> per_pathology;
};

// filter -> normalize -> prompt over a record stream. Invalid records are
// skipped and counted; diagnostics accumulate in `notes` when given.
CurationSummary curate(const std::vector<EntityAnnotation>& records, const Lexicon& lexicon,
                       const CurateOptions& options, std::vector<CuratedSample>& out,
                       std::vector<std::string>* notes = nullptr);

bool is_known_pathology(const std::string& name);
std::string lowercase(const std::string& s);

}  // namespace gtune::curation
