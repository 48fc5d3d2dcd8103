#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cascade/log_io.hpp"
#include "cascade/types.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace cascade;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    auto dir = fs::temp_directory_path() / "cascade_core_test";
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void spit(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

PredictionRecord class_record(const std::string& id, const std::string& pred,
                              const std::string& gold, std::vector<double> probs) {
    PredictionRecord rec;
    rec.example_id = id;
    rec.prediction = pred;
    rec.gold = gold;
    ClassDistribution dist;
    dist.probs = std::move(probs);
    rec.output = dist;
    rec.correct = pred == gold;
    return rec;
}

} // namespace

TEST_CASE("count_at_fraction follows the ceiling rule") {
    CHECK(count_at_fraction(0.0, 10) == 0);
    CHECK(count_at_fraction(1.0, 10) == 10);
    CHECK(count_at_fraction(0.25, 4) == 1);
    CHECK(count_at_fraction(0.5, 4) == 2);
    CHECK(count_at_fraction(0.26, 4) == 2);
    // any positive fraction covers at least one example
    CHECK(count_at_fraction(0.001, 10) == 1);
    // 0.07 * 300 lands a hair above 21; the nudge keeps it from becoming 22
    CHECK(count_at_fraction(0.07, 300) == 21);
    CHECK(count_at_fraction(0.29, 100) == 29);
    CHECK_THROWS_AS(count_at_fraction(-0.1, 10), Error);
    CHECK_THROWS_AS(count_at_fraction(1.1, 10), Error);
}

TEST_CASE("class distribution validation") {
    ClassDistribution ok;
    ok.probs = {0.6, 0.4};
    CHECK_NOTHROW(ok.validate());

    ClassDistribution short_dist;
    short_dist.probs = {1.0};
    CHECK_THROWS_AS(short_dist.validate(), Error);

    ClassDistribution unnormalized;
    unnormalized.probs = {0.6, 0.6};
    CHECK_THROWS_WITH_AS(unnormalized.validate(),
                         doctest::Contains("distribution not normalized"), Error);

    ClassDistribution negative;
    negative.probs = {1.2, -0.2};
    CHECK_THROWS_AS(negative.validate(), Error);
}

TEST_CASE("token distribution validation") {
    TokenDistribution ok;
    ok.top = {{"a", 0.7}, {"b", 0.2}};
    CHECK_NOTHROW(ok.validate());

    TokenDistribution single;
    single.top = {{"a", 1.0}};
    CHECK_THROWS_WITH_AS(single.validate(), doctest::Contains("fewer than 2"), Error);

    TokenDistribution ascending;
    ascending.top = {{"a", 0.2}, {"b", 0.7}};
    CHECK_THROWS_AS(ascending.validate(), Error);

    TokenDistribution oversum;
    oversum.top = {{"a", 0.8}, {"b", 0.7}};
    CHECK_THROWS_AS(oversum.validate(), Error);
}

TEST_CASE("size tags round trip and rank") {
    for (auto tag : {SizeTag::Small, SizeTag::Base, SizeTag::Large, SizeTag::Xl3b}) {
        CHECK(size_tag_from_string(to_string(tag)) == tag);
    }
    CHECK(size_tag_from_string("small") == SizeTag::Small);
    CHECK(size_tag_from_string("3B") == SizeTag::Xl3b);
    CHECK(size_rank(SizeTag::Small) < size_rank(SizeTag::Base));
    CHECK(size_rank(SizeTag::Base) < size_rank(SizeTag::Large));
    CHECK(size_rank(SizeTag::Large) < size_rank(SizeTag::Xl3b));
    CHECK(size_rank(SizeTag::Other) == -1);
    CHECK_THROWS_AS(size_tag_from_string("huge"), Error);
}

TEST_CASE("exact match and normalization") {
    CHECK(exact_match("Paris", "Paris"));
    CHECK_FALSE(exact_match("paris", "Paris"));
    CHECK(exact_match("paris.", "Paris", true));
    CHECK(exact_match("  the  answer ", "The answer!", true));
    CHECK(normalize_answer(" A, b.  C ") == "a b c");
    CHECK(normalize_answer("?!") == "");
}

TEST_CASE("prediction record accessors") {
    auto rec = class_record("e1", "yes", "yes", {0.9, 0.1});
    CHECK(rec.is_classification());
    CHECK(rec.class_dist().probs.size() == 2);
    CHECK_THROWS_AS(rec.token_dists(), Error);
    CHECK(rec.require_correct());

    PredictionRecord unlabeled = rec;
    unlabeled.gold.reset();
    unlabeled.correct.reset();
    CHECK_THROWS_WITH_AS(unlabeled.require_correct(), doctest::Contains("e1"), Error);
}

TEST_CASE("run alignment") {
    ModelRun a;
    a.model_id = "a";
    a.records.emplace("e1", class_record("e1", "x", "x", {1.0, 0.0}));
    a.records.emplace("e2", class_record("e2", "x", "x", {1.0, 0.0}));
    ModelRun b = a;
    b.model_id = "b";
    CHECK(aligned(a, b));

    auto set = validate_alignment({a, b});
    CHECK(set.size() == 2);

    ModelRun c = a;
    c.records.erase("e2");
    c.records.emplace("e3", class_record("e3", "x", "x", {1.0, 0.0}));
    CHECK_FALSE(aligned(a, c));
    CHECK_THROWS_WITH_AS(validate_alignment({a, c}), doctest::Contains("e3"), Error);
    CHECK_THROWS_AS(validate_alignment({}), Error);

    ModelRun empty;
    empty.model_id = "empty";
    CHECK_THROWS_AS(validate_alignment({empty}), Error);
}

TEST_CASE("run accuracy") {
    ModelRun run;
    run.records.emplace("e1", class_record("e1", "x", "x", {1.0, 0.0}));
    run.records.emplace("e2", class_record("e2", "y", "x", {1.0, 0.0}));
    CHECK(run.accuracy() == 0.5);

    PredictionRecord nogold = class_record("e3", "x", "x", {1.0, 0.0});
    nogold.gold.reset();
    nogold.correct.reset();
    run.records.emplace("e3", nogold);
    CHECK_THROWS_AS(run.accuracy(), Error);
}

TEST_CASE("classification log round trip") {
    const auto dir = temp_dir();
    const auto path = dir / "class_roundtrip.jsonl";

    ModelRun run;
    run.model_id = "class_roundtrip";
    run.records.emplace("e1", class_record("e1", "yes", "yes", {0.9, 0.1}));
    run.records.emplace("e2", class_record("e2", "no", "yes", {0.25, 0.75}));
    run.records.at("e1").labels = std::vector<std::string>{"yes", "no"};

    write_prediction_log(run, path);
    const auto loaded = load_prediction_log(path, LogSchema::Classification);
    CHECK(loaded == run);
    CHECK(detect_log_schema(path) == LogSchema::Classification);
    CHECK(load_prediction_log_auto(path) == run);
}

TEST_CASE("seq2seq log round trip") {
    const auto dir = temp_dir();
    const auto path = dir / "seq_roundtrip.jsonl";

    ModelRun run;
    run.model_id = "seq_roundtrip";
    PredictionRecord rec;
    rec.example_id = "q1";
    rec.prediction = "two words";
    rec.gold = "two words";
    rec.correct = true;
    std::vector<TokenDistribution> tokens(2);
    tokens[0].top = {{"two", 0.8}, {"three", 0.1}};
    tokens[1].top = {{"words", 0.55}, {"word", 0.25}, {"worlds", 0.1}};
    rec.output = tokens;
    run.records.emplace("q1", rec);

    write_prediction_log(run, path);
    CHECK(detect_log_schema(path) == LogSchema::Seq2Seq);
    const auto loaded = load_prediction_log(path, LogSchema::Seq2Seq);
    CHECK(loaded == run);
}

TEST_CASE("ingest errors carry the line number") {
    const auto dir = temp_dir();

    const auto dup = dir / "dup.jsonl";
    spit(dup, R"({"example_id":"e1","prediction":"a","probs":[0.5,0.5]}
{"example_id":"e1","prediction":"a","probs":[0.5,0.5]}
)");
    CHECK_THROWS_WITH_AS(load_prediction_log(dup, LogSchema::Classification),
                         doctest::Contains(":2:"), Error);

    const auto bad = dir / "bad.jsonl";
    spit(bad, "{\"example_id\":\"e1\",\"prediction\":\"a\",\"probs\":[0.5,0.5]}\nnot json\n");
    CHECK_THROWS_WITH_AS(load_prediction_log(bad, LogSchema::Classification),
                         doctest::Contains(":2:"), Error);

    const auto empty = dir / "empty.jsonl";
    spit(empty, "");
    CHECK_THROWS_AS(load_prediction_log(empty, LogSchema::Classification), Error);

    const auto badprobs = dir / "badprobs.jsonl";
    spit(badprobs, R"({"example_id":"e1","prediction":"a","probs":[0.9,0.9]}
)");
    CHECK_THROWS_WITH_AS(load_prediction_log(badprobs, LogSchema::Classification),
                         doctest::Contains("not normalized"), Error);

    const auto labels_arity = dir / "labels_arity.jsonl";
    spit(labels_arity,
         R"({"example_id":"e1","prediction":"a","probs":[0.5,0.5],"labels":["a"]}
)");
    CHECK_THROWS_AS(load_prediction_log(labels_arity, LogSchema::Classification), Error);

    CHECK_THROWS_AS(load_prediction_log(dir / "missing.jsonl", LogSchema::Classification),
                    Error);
}

TEST_CASE("gold drives the correct flag, with optional normalization") {
    const auto dir = temp_dir();
    const auto path = dir / "goldnorm.jsonl";
    spit(path, R"({"example_id":"e1","gold":"Paris","prediction":"paris.","probs":[0.7,0.3]}
)");
    auto strict = load_prediction_log(path, LogSchema::Classification);
    CHECK(strict.records.at("e1").correct == false);

    IngestOptions norm;
    norm.normalize_answers = true;
    auto relaxed = load_prediction_log(path, LogSchema::Classification, norm);
    CHECK(relaxed.records.at("e1").correct == true);

    const auto nogold = dir / "nogold.jsonl";
    spit(nogold, R"({"example_id":"e1","prediction":"a","probs":[0.5,0.5]}
)");
    auto unlabeled = load_prediction_log(nogold, LogSchema::Classification);
    CHECK_FALSE(unlabeled.records.at("e1").correct.has_value());
}

TEST_CASE("manifest round trip resolves relative paths") {
    const auto dir = temp_dir() / "manifest_rt";
    fs::create_directories(dir);

    ModelRun run;
    run.model_id = "run0";
    run.records.emplace("e1", class_record("e1", "a", "a", {1.0, 0.0}));
    write_prediction_log(run, dir / "run0.jsonl");

    Manifest manifest;
    manifest.dataset = "demo";
    manifest.split = "test";
    manifest.entries.push_back({"run0.jsonl", SizeTag::Base, 4});
    write_manifest(manifest, dir / "manifest.json");

    const auto loaded = load_manifest(dir / "manifest.json");
    CHECK(loaded.dataset == "demo");
    CHECK(loaded.split == "test");
    REQUIRE(loaded.entries.size() == 1);
    CHECK(loaded.entries[0].path == "run0.jsonl");
    CHECK(loaded.entries[0].size_tag == SizeTag::Base);
    CHECK(loaded.entries[0].run_index == 4);

    const auto runs = load_manifest_runs(dir / "manifest.json");
    REQUIRE(runs.size() == 1);
    CHECK(runs[0].model_id == "run0");
    CHECK(runs[0].size_tag == SizeTag::Base);
    CHECK(runs[0].run_index == 4);
    CHECK(runs[0].records == run.records);

    CHECK_THROWS_AS(load_manifest(dir / "nope.json"), Error);
}

TEST_CASE("csv writer formatting and quoting") {
    const auto dir = temp_dir();
    const auto path = dir / "table.csv";

    Table t;
    t.header = {"name", "value", "count"};
    t.rows.push_back({std::string{"plain"}, 0.25, std::int64_t{3}});
    t.rows.push_back({std::string{"comma, inside"}, 1.0 / 3.0, std::int64_t{-1}});
    t.rows.push_back({std::string{"quote \" and\nnewline"}, 12345.0, std::int64_t{0}});
    write_table(t, path);

    CHECK(slurp(path) == "name,value,count\n"
                         "plain,0.25,3\n"
                         "\"comma, inside\",0.3333333333,-1\n"
                         "\"quote \"\" and\nnewline\",12345,0\n");

    Table bad;
    bad.header = {"a", "b"};
    bad.rows.push_back({std::string{"only one"}});
    CHECK_THROWS_AS(write_table(bad, path), Error);
}

TEST_CASE("format_real is compact and 10-significant-digit") {
    CHECK(format_real(0.1) == "0.1");
    CHECK(format_real(1.0) == "1");
    CHECK(format_real(0.0) == "0");
    CHECK(format_real(1.0 / 3.0) == "0.3333333333");
    CHECK(format_real(-2.5) == "-2.5");
}
