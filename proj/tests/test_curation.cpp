#include <doctest.h>

#include <algorithm>

#include "gtune/curation.hpp"
#include "gtune/errors.hpp"
#include "gtune/locations.hpp"
#include "gtune/records.hpp"
#include "gtune/rng.hpp"

using namespace gtune;
using namespace gtune::curation;

TEST_SUITE_BEGIN("curation");

TEST_CASE("filter_sentence: negation, resolution, synonyms") {
    const Lexicon lex = Lexicon::builtin_default();

    auto d = filter_sentence("no pleural effusion", "Pleural Effusion", lex);
    CHECK_FALSE(d.keep);
    CHECK(d.reason == SkipReason::Negation);

    d = filter_sentence("right basilar opacity", "Pneumonia", lex);
    CHECK(d.keep);  // synonym route

    d = filter_sentence("left lower lobe pneumonia", "Pneumonia", lex);
    CHECK(d.keep);

    d = filter_sentence("the effusion has resolved", "Pleural Effusion", lex);
    CHECK_FALSE(d.keep);
    CHECK(d.reason == SkipReason::NoMention);  // "effusion" alone is not the phrase

    d = filter_sentence("pleural effusion has resolved", "Pleural Effusion", lex);
    CHECK_FALSE(d.keep);
    CHECK(d.reason == SkipReason::Resolution);

    d = filter_sentence("clear lungs", "Pneumonia", lex);
    CHECK_FALSE(d.keep);
    CHECK(d.reason == SkipReason::NoMention);

    // plural-aware phrase match
    d = filter_sentence("small bilateral pleural effusions", "Pleural Effusion", lex);
    CHECK(d.keep);

    CHECK_THROWS_AS(filter_sentence("anything", "Fracture", lex), DataError);
}

TEST_CASE("normalize_locations merges and rewrites") {
    CHECK(normalize_locations({"left lower", "right lower"}) ==
          std::vector<std::string>{"bilateral lower"});
    CHECK(normalize_locations({"left base", "right base"}) ==
          std::vector<std::string>{"bibasilar"});
    CHECK(normalize_locations({"left apical"}) == std::vector<std::string>{"left apical"});
    CHECK(normalize_locations({"left lung", "right lung"}) ==
          std::vector<std::string>{"bilateral"});
    CHECK(normalize_locations({"lingula"}) == std::vector<std::string>{"lingular"});
    CHECK(normalize_locations({"heart"}) == std::vector<std::string>{"cardiomegaly"});
    CHECK(normalize_locations({"right apex"}) == std::vector<std::string>{"right apical"});
    CHECK(normalize_locations({"left mid lung"}) == std::vector<std::string>{"left middle"});

    // dedup is order-stable
    CHECK(normalize_locations({"right upper", "left lower", "right upper"}) ==
          std::vector<std::string>{"right upper", "left lower"});

    // unmappable terms drop with a reason
    std::vector<DroppedTerm> dropped;
    CHECK(normalize_locations({"trace", "left base"}, &dropped) ==
          std::vector<std::string>{"left base"});
    REQUIRE(dropped.size() == 1);
    CHECK(dropped[0].term == "trace");
}

TEST_CASE("normalize_locations is idempotent and merge-symmetric") {
    Rng rng(21);
    const std::vector<std::string> raw_pool = {
        "left lower",  "right lower", "left base",   "right base", "left apical",
        "right upper", "left lung",   "right lung",  "lingula",    "heart",
        "pulmonary",   "mediastinum", "left pleural", "right pleural"};
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::string> raw;
        const std::size_t n = 1 + rng.index(6);
        for (std::size_t i = 0; i < n; ++i) raw.push_back(raw_pool[rng.index(raw_pool.size())]);

        const auto once = normalize_locations(raw);
        // closed vocabulary
        for (const auto& term : once) CHECK(is_canonical_location(term));
        // idempotence
        CHECK(normalize_locations(once) == once);
        // left/right order does not affect the merged set
        std::vector<std::string> reversed(raw.rbegin(), raw.rend());
        auto swapped = normalize_locations(reversed);
        std::sort(swapped.begin(), swapped.end());
        auto sorted_once = once;
        std::sort(sorted_once.begin(), sorted_once.end());
        CHECK(swapped == sorted_once);
    }
}

TEST_CASE("build_prompt formats and collapses") {
    CHECK(build_prompt({"right apical"}, "Pneumothorax") == "right apical pneumothorax");
    CHECK(build_prompt({"left lower", "right upper"}, "Lung Opacity") ==
          "left lower <and> right upper lung opacity");
    CHECK(build_prompt({"cardiomegaly"}, "Cardiomegaly") == "cardiomegaly");
    CHECK_THROWS_AS(build_prompt({}, "Pneumonia"), ValidationError);
}

TEST_CASE("curate applies filter, merge, and prompt construction") {
    const Lexicon lex = Lexicon::builtin_default();

    std::vector<EntityAnnotation> records;
    {
        EntityAnnotation r;
        r.image_id = "a";
        r.sentence = "left basilar consolidation.";
        r.spans = {{0, 12, "ANAT-DP"}};
        r.pathology = "Consolidation";
        records.push_back(r);
    }
    {
        EntityAnnotation r;  // same report, second sentence
        r.image_id = "a";
        r.sentence = "also right basilar consolidation.";
        r.spans = {{5, 18, "ANAT-DP"}};
        r.pathology = "Consolidation";
        records.push_back(r);
    }

    // report scope merges across sentences into bibasilar
    std::vector<CuratedSample> out;
    CurateOptions opts;
    opts.scope = Scope::Report;
    CurationSummary stats = curate(records, lex, opts, out);
    REQUIRE(out.size() == 1);
    CHECK(out[0].prompt == "bibasilar consolidation");
    CHECK(stats.samples == 1);
    CHECK(stats.kept_sentences == 2);

    // sentence scope keeps them separate
    out.clear();
    opts.scope = Scope::Sentence;
    stats = curate(records, lex, opts, out);
    REQUIRE(out.size() == 2);
    CHECK(out[0].prompt == "left base consolidation");
    CHECK(out[1].prompt == "right base consolidation");

    // empty stream
    out.clear();
    stats = curate({}, lex, opts, out);
    CHECK(out.empty());
    CHECK(stats.samples == 0);

    // record whose terms are all unmappable emits nothing but counts
    {
        EntityAnnotation r;
        r.image_id = "b";
        r.sentence = "there is a trace pneumothorax.";
        r.spans = {{11, 16, "ANAT-DP"}};
        r.pathology = "Pneumothorax";
        out.clear();
        stats = curate({r}, lex, opts, out);
        CHECK(out.empty());
        CHECK(stats.without_location == 1);
        CHECK(stats.dropped_terms == 1);
    }

    // malformed record: span out of bounds
    {
        EntityAnnotation r;
        r.image_id = "c";
        r.sentence = "short.";
        r.spans = {{0, 99, "ANAT-DP"}};
        r.pathology = "Pneumonia";
        out.clear();
        stats = curate({r}, lex, opts, out);
        CHECK(stats.malformed == 1);
        CHECK(out.empty());
    }
}

TEST_CASE("curated samples never carry negated sentences or foreign terms") {
    // property over the shipped fixture: closed vocabulary + negation-free
    const std::string annotations =
        std::string(GTUNE_SOURCE_DIR) + "/data/toy/annotations.jsonl";
    const AnnotationFile file = read_annotations(annotations);
    REQUIRE(file.malformed.empty());
    REQUIRE(file.records.size() == 20);

    const Lexicon lex = Lexicon::builtin_default();
    std::vector<CuratedSample> out;
    curate(file.records, lex, CurateOptions{}, out);
    REQUIRE(!out.empty());
    for (const auto& s : out) {
        for (const auto& loc : s.locations) CHECK(is_canonical_location(loc));
        // prompt equals join(locations, " <and> ") + " " + pathology (or collapses)
        CHECK(s.prompt == build_prompt(s.locations, s.pathology));
        for (const auto& rec : file.records) {
            if (rec.image_id != s.image_id) continue;
            const auto d = filter_sentence(rec.sentence, rec.pathology, lex);
            if (d.keep) continue;
            CHECK(d.reason == SkipReason::NoMention);  // never a negated source
        }
    }
}

TEST_CASE("golden prompts from the 20-sentence fixture, byte-exact") {
    const std::string src = std::string(GTUNE_SOURCE_DIR);
    const AnnotationFile file = read_annotations(src + "/data/toy/annotations.jsonl");
    REQUIRE(file.malformed.empty());

    const Lexicon lex = Lexicon::load(src + "/data/lexicon.json");
    std::vector<CuratedSample> out;
    curate(file.records, lex, CurateOptions{}, out);

    const std::string got_path = std::string(GTUNE_BINARY_DIR) + "/curated_golden_check.jsonl";
    write_curated(got_path, out);
    CHECK(read_text_file(got_path) == read_text_file(src + "/data/toy/golden_prompts.jsonl"));
}

TEST_SUITE_END();
