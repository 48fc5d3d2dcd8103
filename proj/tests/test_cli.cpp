#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cascade/calibration.hpp"
#include "cascade/cli.hpp"
#include "cascade/log_io.hpp"
#include "cascade/uncertainty.hpp"

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace cascade;

namespace {

int run_cli(std::initializer_list<std::string> args) {
    std::vector<std::string> owned(args);
    std::vector<const char*> argv;
    argv.push_back("cascade");
    for (const auto& a : owned) argv.push_back(a.c_str());
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), {});
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) lines.push_back(cur);
    return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

// Generates a small synthetic dataset once and hands out the log paths.
struct Dataset {
    TempDir dir{"cascade-cli-data"};
    std::string root;

    Dataset() {
        root = dir / "synth";
        const auto cfg = dir / "cfg.json";
        std::ofstream out(cfg);
        out << R"({"n_examples": 80, "n_classes": 3, "committee_size": 2,
                   "seed": 17, "large_advantage": 0.9, "certain_regression": 0.1})";
        out.close();
        REQUIRE(run_cli({"synth", "--config", cfg, "--out", root}) == 0);
    }

    std::string small() const { return root + "/small-r0.jsonl"; }
    std::string small2() const { return root + "/small-r1.jsonl"; }
    std::string large() const { return root + "/large-r0.jsonl"; }
    std::string manifest() const { return root + "/manifest.json"; }
};

} // namespace

TEST_CASE("usage errors exit with 2") {
    CHECK(run_cli({}) == 2);
    CHECK(run_cli({"swerve"}) == 2);
    CHECK(run_cli({"score"}) == 2); // missing required flags
    CHECK(run_cli({"--help"}) == 0);
    CHECK(run_cli({"curve", "--help"}) == 0);
}

TEST_CASE("cli subcommands produce the pinned outputs") {
    Dataset data;
    TempDir out("cascade-cli-out");

    SUBCASE("score writes one row per example") {
        const auto csv = out / "scores.csv";
        REQUIRE(run_cli({"score", "--small", data.small(), "--kind", "margin",
                         "--out", csv}) == 0);
        auto lines = lines_of(slurp(csv));
        REQUIRE(lines.size() == 81);
        CHECK(lines[0] == "example_id,kind,score");
        CHECK(split_csv(lines[1])[0] == "ex-000000");
        CHECK(split_csv(lines[1])[1] == "margin");

        CHECK(run_cli({"score", "--small", data.small(), "--kind", "sideways",
                       "--out", csv}) == 2);
    }

    SUBCASE("curve endpoints match the run accuracies") {
        const auto csv = out / "curve.csv";
        REQUIRE(run_cli({"curve", "--small", data.small(), "--large", data.large(),
                         "--grid-step", "0.1", "--out", csv}) == 0);
        auto lines = lines_of(slurp(csv));
        REQUIRE(lines.size() == 12);
        CHECK(lines[0] == "fraction,accuracy,small_accuracy,large_accuracy,ranking_kind");
        auto first = split_csv(lines[1]);
        auto last = split_csv(lines.back());
        CHECK(first[0] == "0");
        CHECK(first[1] == first[2]);
        CHECK(last[0] == "1");
        CHECK(last[1] == last[3]);
    }

    SUBCASE("hump and concavity write single-row summaries") {
        const auto h = out / "hump.csv";
        REQUIRE(run_cli({"hump", "--small", data.small(), "--large", data.large(),
                         "--out", h}) == 0);
        auto lines = lines_of(slurp(h));
        REQUIRE(lines.size() == 2);
        CHECK(lines[0] == "hump_size,peak_fraction,peak_accuracy");

        const auto c = out / "conc.csv";
        REQUIRE(run_cli({"concavity", "--small", data.small(), "--large", data.large(),
                         "--out", c}) == 0);
        CHECK(lines_of(slurp(c))[0] == "average_concavity");
    }

    SUBCASE("buckets, percentiles, churn-table, histogram") {
        const auto b = out / "buckets.csv";
        REQUIRE(run_cli({"buckets", "--small", data.small(), "--large", data.large(),
                         "--buckets", "4", "--direction", "at_least", "--out", b}) == 0);
        auto blines = lines_of(slurp(b));
        REQUIRE(blines.size() == 5);

        const auto p = out / "pct.csv";
        REQUIRE(run_cli({"percentiles", "--runs", data.manifest(), "--small",
                         data.small(), "--buckets", "10", "--out", p}) == 0);
        auto plines = lines_of(slurp(p));
        REQUIRE(plines.size() == 11);
        CHECK(split_csv(plines[0]).size() == 2 + 4); // bucket, n, four runs

        const auto q = out / "churn.csv";
        REQUIRE(run_cli({"churn-table", "--runs", data.small(), "--runs", data.small2(),
                         "--out", q}) == 0);
        auto qlines = lines_of(slurp(q));
        REQUIRE(qlines.size() == 6);
        CHECK(qlines[0] == "bucket,lo_quantile,hi_quantile,n,churn_mean,churn_se");
        CHECK(split_csv(qlines[1])[0] == "Q1");

        // a single run cannot produce a churn table
        CHECK(run_cli({"churn-table", "--runs", data.small(), "--out", q}) == 1);

        const auto hg = out / "hist.csv";
        REQUIRE(run_cli({"histogram", "--small", data.small(), "--large", data.large(),
                         "--bucket", "only_partner_correct", "--buckets", "8",
                         "--out", hg}) == 0);
        auto hlines = lines_of(slurp(hg));
        CHECK(hlines[0] == "bin_lo,bin_hi,count");
        REQUIRE(hlines.size() >= 2);

        CHECK(run_cli({"histogram", "--small", data.small(), "--bucket",
                       "only_partner_correct", "--buckets", "8", "--out", hg}) == 1);
    }

    SUBCASE("pairs over a manifest") {
        const auto csv = out / "pairs.csv";
        REQUIRE(run_cli({"pairs", "--runs", data.manifest(), "--grid-step", "0.05",
                         "--out", csv}) == 0);
        auto lines = lines_of(slurp(csv));
        REQUIRE(lines.size() >= 2);
        CHECK(split_csv(lines[0])[0] == "small_id");
    }

    SUBCASE("calibrate round trips through the policy file") {
        const auto policy_path = out / "policy.json";
        REQUIRE(run_cli({"calibrate", "--small", data.small(), "--fraction", "0.25",
                         "--out", policy_path}) == 0);
        auto policy = load_policy(policy_path);
        CHECK(policy.kind == UncertaintyKind::Margin);

        auto run = load_prediction_log_auto(data.small());
        auto expected = threshold_for_fraction(score_run(run, UncertaintyKind::Margin),
                                               0.25);
        CHECK(policy.threshold == expected.threshold);
        CHECK(policy.expected_deferral_fraction == expected.expected_deferral_fraction);

        CHECK(run_cli({"calibrate", "--small", data.small(), "--out", policy_path}) == 2);
        CHECK(run_cli({"calibrate", "--small", data.small(), "--fraction", "0.2",
                       "--target-accuracy", "0.9", "--out", policy_path}) == 2);
        CHECK(run_cli({"calibrate", "--small", data.small(), "--target-accuracy",
                       "0.9", "--out", policy_path}) == 1); // needs --large
    }

    SUBCASE("synth is deterministic across invocations") {
        const auto again = out / "synth2";
        const auto cfg = out / "cfg.json";
        {
            std::ofstream cfg_out(cfg);
            cfg_out << R"({"n_examples": 80, "n_classes": 3, "committee_size": 2,
                           "seed": 17, "large_advantage": 0.9,
                           "certain_regression": 0.1})";
        }
        REQUIRE(run_cli({"synth", "--config", cfg, "--out", again}) == 0);
        for (const auto* leaf :
             {"manifest.json", "small-r0.jsonl", "small-r1.jsonl", "large-r0.jsonl",
              "large-r1.jsonl"}) {
            CHECK(slurp(data.root + "/" + leaf) == slurp(again + "/" + leaf));
        }

        // a seed override changes the data
        const auto reseeded = out / "synth3";
        REQUIRE(run_cli({"synth", "--config", cfg, "--seed", "18", "--out",
                         reseeded}) == 0);
        CHECK(slurp(data.small()) != slurp(reseeded + "/small-r0.jsonl"));
    }
}

TEST_CASE("normalization is opt-in and changes accuracy") {
    TempDir dir("cascade-cli-norm");

    ModelRun small;
    small.model_id = "tiny";
    ModelRun large;
    large.model_id = "big";
    for (int i = 0; i < 4; ++i) {
        PredictionRecord rec;
        rec.example_id = "n" + std::to_string(i);
        rec.gold = "Yes";
        rec.prediction = i < 2 ? "  yes" : "Yes"; // half need normalization
        ClassDistribution dist;
        dist.probs = {0.8, 0.2};
        rec.output = dist;
        rec.correct = rec.prediction == *rec.gold;

        auto big = rec;
        big.prediction = "Yes";
        big.correct = true;
        small.records.emplace(rec.example_id, std::move(rec));
        large.records.emplace(big.example_id, std::move(big));
    }
    const auto small_path = dir / "tiny.jsonl";
    const auto large_path = dir / "big.jsonl";
    write_prediction_log(small, small_path);
    write_prediction_log(large, large_path);

    auto small_acc_of = [&](bool normalize) {
        const auto csv = dir / (normalize ? std::string("norm.csv") : std::string("raw.csv"));
        std::vector<std::string> args = {"curve",      "--small", small_path,
                                         "--large",    large_path, "--grid-step",
                                         "0.5",        "--out",    csv};
        if (normalize) args.push_back("--normalize");
        std::vector<const char*> argv;
        argv.push_back("cascade");
        for (const auto& a : args) argv.push_back(a.c_str());
        REQUIRE(cli::run(static_cast<int>(argv.size()), argv.data()) == 0);
        return split_csv(lines_of(slurp(csv))[1])[2];
    };

    CHECK(small_acc_of(false) == "0.5");
    CHECK(small_acc_of(true) == "1");
}
