#include "gtune/curation.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <json.hpp>

#include "gtune/errors.hpp"
#include "gtune/locations.hpp"

namespace gtune::curation {

namespace {
using json = nlohmann::ordered_json;
}

std::string lowercase(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool is_known_pathology(const std::string& name) {
    return std::find(kPathologies.begin(), kPathologies.end(), name) != kPathologies.end();
}

Lexicon Lexicon::builtin_default() {
    Lexicon lex;
    lex.negation = {"no", "without"};
    lex.resolution = {"resolved"};
    lex.synonyms["Pneumonia"] = {"opacity", "consolidation"};
    return lex;
}

Lexicon Lexicon::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open lexicon: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("lexicon parse error in " + path + ": " + e.what());
    }
    Lexicon lex;
    for (const auto& w : j.at("negation")) lex.negation.push_back(lowercase(w.get<std::string>()));
    for (const auto& w : j.at("resolution")) {
        lex.resolution.push_back(lowercase(w.get<std::string>()));
    }
    if (j.contains("synonyms")) {
        for (const auto& [pathology, words] : j.at("synonyms").items()) {
            if (!is_known_pathology(pathology)) {
                throw DataError("lexicon synonyms for unknown pathology '" + pathology + "'");
            }
            for (const auto& w : words) {
                lex.synonyms[pathology].push_back(lowercase(w.get<std::string>()));
            }
        }
    }
    lex.validate();
    return lex;
}

void Lexicon::validate() const {
    if (negation.empty()) throw DataError("lexicon: empty negation list");
    if (resolution.empty()) throw DataError("lexicon: empty resolution list");
}

void EntityAnnotation::validate() const {
    if (image_id.empty()) throw DataError("record without image_id");
    if (!is_known_pathology(pathology)) {
        throw DataError("unknown pathology '" + pathology + "' (" + image_id + ")");
    }
    for (const auto& s : spans) {
        if (s.start >= s.end || s.end > sentence.size()) {
            throw DataError("span out of bounds in record " + image_id);
        }
    }
}

namespace {

std::vector<std::string> words_of(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : lowercase(text)) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(c);
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

// whole-word match, plural-aware via a trailing "s"/"es" rule
bool word_matches(const std::string& word, const std::string& term) {
    return word == term || word == term + "s" || word == term + "es";
}

bool phrase_present(const std::vector<std::string>& words, const std::string& phrase) {
    const std::vector<std::string> target = words_of(phrase);
    if (target.empty() || words.size() < target.size()) return false;
    for (std::size_t i = 0; i + target.size() <= words.size(); ++i) {
        bool all = true;
        for (std::size_t j = 0; j < target.size(); ++j) {
            if (!word_matches(words[i + j], target[j])) {
                all = false;
                break;
            }
        }
        if (all) return true;
    }
    return false;
}

}  // namespace

FilterDecision filter_sentence(const std::string& sentence, const std::string& pathology,
                               const Lexicon& lexicon) {
    if (!is_known_pathology(pathology)) {
        throw DataError("unknown pathology '" + pathology + "'");
    }
    const std::vector<std::string> words = words_of(sentence);

    bool mentioned = phrase_present(words, pathology);
    if (!mentioned) {
        auto syn = lexicon.synonyms.find(pathology);
        if (syn != lexicon.synonyms.end()) {
            for (const auto& phrase : syn->second) {
                if (phrase_present(words, phrase)) {
                    mentioned = true;
                    break;
                }
            }
        }
    }
    if (!mentioned) return {false, SkipReason::NoMention};

    for (const auto& cue : lexicon.negation) {
        if (phrase_present(words, cue)) return {false, SkipReason::Negation};
    }
    for (const auto& cue : lexicon.resolution) {
        if (phrase_present(words, cue)) return {false, SkipReason::Resolution};
    }
    return {true, SkipReason::None};
}

namespace {

const std::map<std::string, std::string>& region_words() {
    static const std::map<std::string, std::string> map = {
        {"apical", "apical"},     {"apex", "apical"},        {"apices", "apical"},
        {"upper", "upper"},       {"middle", "middle"},      {"mid", "middle"},
        {"lower", "lower"},       {"costophrenic", "costophrenic"},
        {"pleural", "pleural"},   {"base", "base"},          {"bases", "base"},
        {"basilar", "base"},      {"basal", "base"},         {"lingular", "lingular"},
        {"lingula", "lingular"},  {"cardiomegaly", "cardiomegaly"},
        {"cardiac", "cardiomegaly"}, {"heart", "cardiomegaly"}, {"pulmonary", "pulmonary"},
    };
    return map;
}

const std::map<std::string, std::string>& laterality_words() {
    static const std::map<std::string, std::string> map = {
        {"left", "left"}, {"right", "right"}, {"bilateral", "bilateral"}, {"both", "bilateral"}};
    return map;
}

// canonical term or an empty string when the raw term cannot be mapped
std::string map_raw_term(const std::string& raw, std::string* why) {
    std::string laterality, region;
    for (const auto& w : words_of(raw)) {
        if (w == "bibasilar") return "bibasilar";
        if (laterality.empty()) {
            auto lat = laterality_words().find(w);
            if (lat != laterality_words().end()) {
                laterality = lat->second;
                continue;
            }
        }
        if (region.empty()) {
            auto reg = region_words().find(w);
            if (reg != region_words().end()) region = reg->second;
        }
    }
    if (region == "lingular" || region == "cardiomegaly" || region == "pulmonary") {
        return region;  // lateralityless canonical terms
    }
    if (laterality.empty() && region.empty()) {
        *why = "no anatomical cue";
        return "";
    }
    if (laterality.empty()) {
        *why = "region without laterality";
        return "";
    }
    std::string term = region.empty() ? laterality : laterality + " " + region;
    if (term == "bilateral base") term = "bibasilar";
    return term;
}

void push_unique(std::vector<std::string>& terms, const std::string& term) {
    if (std::find(terms.begin(), terms.end(), term) == terms.end()) terms.push_back(term);
}

}  // namespace

std::vector<std::string> normalize_locations(const std::vector<std::string>& raw_terms,
                                             std::vector<DroppedTerm>* dropped) {
    std::vector<std::string> terms;
    for (const auto& raw : raw_terms) {
        std::string why;
        const std::string mapped = map_raw_term(raw, &why);
        if (mapped.empty()) {
            if (dropped) dropped->push_back({raw, why});
            continue;
        }
        push_unique(terms, mapped);
    }

    // bilaterally symmetrical pairs collapse, keeping the earlier position
    for (const auto& region : kRegions) {
        const std::string left = region.empty() ? "left" : "left " + region;
        const std::string right = region.empty() ? "right" : "right " + region;
        auto li = std::find(terms.begin(), terms.end(), left);
        auto ri = std::find(terms.begin(), terms.end(), right);
        if (li == terms.end() || ri == terms.end()) continue;
        std::string merged = region.empty() ? "bilateral" : "bilateral " + region;
        if (merged == "bilateral base") merged = "bibasilar";
        auto first = li < ri ? li : ri;
        auto second = li < ri ? ri : li;
        if (std::find(terms.begin(), terms.end(), merged) != terms.end()) {
            terms.erase(second);
            terms.erase(first);
        } else {
            *first = merged;
            terms.erase(second);
        }
    }
    return terms;
}

std::string build_prompt(const std::vector<std::string>& locations,
                         const std::string& pathology) {
    if (locations.empty()) throw ValidationError("build_prompt: empty location list");
    const std::string pathology_lc = lowercase(pathology);
    if (locations.size() == 1 && locations[0] == pathology_lc) {
        return pathology_lc;  // "cardiomegaly cardiomegaly" collapses
    }
    std::string prompt;
    for (std::size_t i = 0; i < locations.size(); ++i) {
        if (i) prompt += " <and> ";
        prompt += locations[i];
    }
    return prompt + " " + pathology_lc;
}

CurationSummary curate(const std::vector<EntityAnnotation>& records, const Lexicon& lexicon,
                       const CurateOptions& options, std::vector<CuratedSample>& out,
                       std::vector<std::string>* notes) {
    CurationSummary stats;
    auto note = [&](const std::string& msg) {
        if (notes) notes->push_back(msg);
    };

    struct Group {
        std::string image_id, pathology;
        std::vector<std::string> raw_terms;
    };
    std::vector<Group> groups;  // first-seen order
    std::map<std::string, std::size_t> group_index;

    auto emit = [&](const std::string& image_id, const std::string& pathology,
                    const std::vector<std::string>& raw_terms) {
        std::vector<DroppedTerm> dropped;
        const std::vector<std::string> locations = normalize_locations(raw_terms, &dropped);
        stats.dropped_terms += dropped.size();
        for (const auto& d : dropped) {
            note("dropped term '" + d.term + "' (" + d.why + ") in " + image_id);
        }
        if (locations.empty()) {
            ++stats.without_location;
            note("no mappable location for " + image_id + ", sample dropped");
            return;
        }
        std::vector<std::vector<std::string>> prompt_sets;
        if (options.multi_location_prompts || locations.size() == 1) {
            prompt_sets.push_back(locations);
        } else {
            for (const auto& loc : locations) prompt_sets.push_back({loc});
        }
        for (auto& set : prompt_sets) {
            CuratedSample sample;
            sample.image_id = image_id;
            sample.locations = set;
            sample.pathology = pathology;
            sample.prompt = build_prompt(set, pathology);
            for (const auto& loc : set) ++stats.per_location[loc];
            ++stats.per_pathology[pathology];
            ++stats.samples;
            out.push_back(std::move(sample));
        }
    };

    for (const auto& record : records) {
        ++stats.records;
        try {
            record.validate();
        } catch (const DataError& e) {
            ++stats.malformed;
            note(std::string("malformed record: ") + e.what());
            continue;
        }
        const FilterDecision decision =
            filter_sentence(record.sentence, record.pathology, lexicon);
        if (!decision.keep) {
            switch (decision.reason) {
                case SkipReason::NoMention: ++stats.skipped_no_mention; break;
                case SkipReason::Negation: ++stats.skipped_negation; break;
                case SkipReason::Resolution: ++stats.skipped_resolution; break;
                case SkipReason::None: break;
            }
            continue;
        }
        ++stats.kept_sentences;

        std::vector<std::string> raw_terms;
        for (const auto& span : record.spans) {
            if (span.label != "ANAT-DP") continue;
            raw_terms.push_back(
                lowercase(record.sentence.substr(span.start, span.end - span.start)));
        }

        if (options.scope == Scope::Sentence) {
            emit(record.image_id, record.pathology, raw_terms);
        } else {
            const std::string key = record.image_id + "\x1f" + record.pathology;
            auto it = group_index.find(key);
            if (it == group_index.end()) {
                group_index.emplace(key, groups.size());
                groups.push_back({record.image_id, record.pathology, std::move(raw_terms)});
            } else {
                auto& terms = groups[it->second].raw_terms;
                terms.insert(terms.end(), raw_terms.begin(), raw_terms.end());
            }
        }
    }

    if (options.scope == Scope::Report) {
        for (const auto& g : groups) emit(g.image_id, g.pathology, g.raw_terms);
    }
    return stats;
}

}  // namespace gtune::curation
