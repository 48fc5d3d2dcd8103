#include "cascade/cli.hpp"

#include "cascade/analysis.hpp"
#include "cascade/calibration.hpp"
#include "cascade/log_io.hpp"
#include "cascade/logging.hpp"
#include "cascade/router.hpp"
#include "cascade/synthgen.hpp"
#include "cascade/types.hpp"
#include "cascade/uncertainty.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <memory>
#include <optional>
#include <thread>

namespace cascade::cli {

namespace {

// Shared flag state; one instance lives for the duration of run().
struct Options {
    bool normalize = false;
    std::string small_path;
    std::string large_path;
    std::vector<std::string> run_paths;
    std::vector<std::string> committee_paths;
    std::string kind = "margin";
    double grid_step = 0.01;
    std::string direction = "at_most";
    std::size_t buckets = 100;
    std::string bucket = "small_correct";
    std::optional<double> gap_lo;
    std::optional<double> gap_hi;
    std::optional<double> target_accuracy;
    std::optional<double> fraction;
    std::optional<std::uint64_t> seed;
    std::string config_path;
    std::string out_path;
};

ModelRun load_run(const std::string& path, const Options& opts) {
    IngestOptions ingest;
    ingest.normalize_answers = opts.normalize;
    return load_prediction_log_auto(path, ingest);
}

// A .json path is a manifest; anything else is a single log.
std::vector<ModelRun> load_many(const std::vector<std::string>& paths, const Options& opts) {
    IngestOptions ingest;
    ingest.normalize_answers = opts.normalize;
    std::vector<ModelRun> runs;
    for (const auto& p : paths) {
        if (std::filesystem::path(p).extension() == ".json") {
            auto loaded = load_manifest_runs(p, ingest);
            std::move(loaded.begin(), loaded.end(), std::back_inserter(runs));
        } else {
            runs.push_back(load_prediction_log_auto(p, ingest));
        }
    }
    return runs;
}

// Reference run + the other committee members -> ScoreMap of any kind.
// For pairwise kinds the reference itself joins the committee.
ScoreMap make_scores(UncertaintyKind kind, const ModelRun& reference,
                     const std::vector<ModelRun>& committee) {
    switch (kind) {
    case UncertaintyKind::Margin:
    case UncertaintyKind::Entropy:
    case UncertaintyKind::SeqMargin:
        return score_run(reference, kind);
    case UncertaintyKind::CommitteeMargin:
    case UncertaintyKind::CommitteeEntropy: {
        RunSet members;
        members.runs.push_back(reference);
        for (const auto& run : committee) members.runs.push_back(run);
        const auto base = kind == UncertaintyKind::CommitteeMargin
                              ? UncertaintyKind::Margin
                              : UncertaintyKind::Entropy;
        return committee_average(base, members);
    }
    case UncertaintyKind::Churn: {
        if (committee.empty()) {
            throw Error("kind churn needs at least one --committee run");
        }
        RunSet members;
        for (const auto& run : committee) members.runs.push_back(run);
        return churn_uncertainty(reference, members);
    }
    case UncertaintyKind::CommitteeChurn: {
        RunSet members;
        members.runs.push_back(reference);
        for (const auto& run : committee) members.runs.push_back(run);
        if (members.runs.size() < 2) {
            throw Error("kind committee_churn needs at least 2 runs "
                        "(--small plus --committee)");
        }
        return committee_churn_uncertainty(members);
    }
    }
    throw Error("unknown uncertainty kind");
}

ScoreMap scores_from_flags(const Options& opts) {
    const auto kind = kind_from_name(opts.kind);
    const ModelRun reference = load_run(opts.small_path, opts);
    const auto committee = load_many(opts.committee_paths, opts);
    return make_scores(kind, reference, committee);
}

SwitcherCurve curve_from_flags(const Options& opts) {
    const ModelRun small = load_run(opts.small_path, opts);
    const ModelRun large = load_run(opts.large_path, opts);
    const auto committee = load_many(opts.committee_paths, opts);
    const auto scores = make_scores(kind_from_name(opts.kind), small, committee);
    return switcher_curve(small, large, scores, opts.grid_step);
}

void add_normalize(CLI::App* sub, Options& opts) {
    sub->add_flag("--normalize", opts.normalize,
                  "lowercase/strip punctuation before matching gold answers");
}

void add_kind(CLI::App* sub, Options& opts) {
    sub->add_option("--kind", opts.kind, "uncertainty kind")
        ->check(CLI::IsMember({"margin", "entropy", "seq_margin", "committee_margin",
                               "committee_entropy", "churn", "committee_churn"}))
        ->capture_default_str();
}

void add_committee(CLI::App* sub, Options& opts) {
    sub->add_option("--committee", opts.committee_paths,
                    "additional committee run logs (repeatable)")
        ->check(CLI::ExistingFile);
}

void add_out(CLI::App* sub, Options& opts, const char* what) {
    sub->add_option("--out", opts.out_path, what)->required();
}

std::atomic<bool> g_stop_requested{false};

void handle_stop_signal(int) { g_stop_requested.store(true); }

} // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"model-cascade uncertainty analysis and routing toolkit"};
    app.require_subcommand(1);

    auto opts = std::make_shared<Options>();

    // score: per-example uncertainty CSV
    {
        auto* sub = app.add_subcommand("score", "score per-example uncertainty");
        sub->add_option("--small", opts->small_path, "reference prediction log")
            ->required()
            ->check(CLI::ExistingFile);
        add_kind(sub, *opts);
        add_committee(sub, *opts);
        add_normalize(sub, *opts);
        add_out(sub, *opts, "output CSV (example_id,kind,score)");
        sub->callback([opts] {
            const auto scores = scores_from_flags(*opts);
            write_table(scores_table(scores), opts->out_path);
            std::cout << "wrote " << scores.scores.size() << " " << kind_name(scores.kind)
                      << " scores to " << opts->out_path << "\n";
        });
    }

    // curve: switcher curve CSV
    {
        auto* sub = app.add_subcommand("curve", "switcher accuracy vs deferral fraction");
        sub->add_option("--small", opts->small_path, "small model log")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--large", opts->large_path, "large model log")
            ->required()
            ->check(CLI::ExistingFile);
        add_kind(sub, *opts);
        add_committee(sub, *opts);
        sub->add_option("--grid-step", opts->grid_step, "fraction grid step")
            ->check(CLI::Range(1e-6, 1.0))
            ->capture_default_str();
        add_normalize(sub, *opts);
        add_out(sub, *opts, "output CSV");
        sub->callback([opts] {
            const auto curve = curve_from_flags(*opts);
            write_table(curve_table(curve), opts->out_path);
            std::cout << "wrote curve (" << curve.fractions.size() << " points) to "
                      << opts->out_path << "\n";
        });
    }

    // hump: peak excess over the better endpoint
    {
        auto* sub = app.add_subcommand("hump", "peak accuracy excess of the switcher curve");
        sub->add_option("--small", opts->small_path)->required()->check(CLI::ExistingFile);
        sub->add_option("--large", opts->large_path)->required()->check(CLI::ExistingFile);
        add_kind(sub, *opts);
        add_committee(sub, *opts);
        sub->add_option("--grid-step", opts->grid_step)->check(CLI::Range(1e-6, 1.0));
        add_normalize(sub, *opts);
        add_out(sub, *opts, "output CSV");
        sub->callback([opts] {
            const auto curve = curve_from_flags(*opts);
            const auto report = hump(curve);
            Table t;
            t.header = {"hump_size", "peak_fraction", "peak_accuracy"};
            t.rows.push_back({report.hump_size, report.peak_fraction, report.peak_accuracy});
            write_table(t, opts->out_path);
            std::cout << "hump_size " << format_real(report.hump_size) << " at fraction "
                      << format_real(report.peak_fraction) << "; wrote " << opts->out_path
                      << "\n";
        });
    }

    // concavity: mean excess over the random-routing chord
    {
        auto* sub = app.add_subcommand("concavity", "average excess over random routing");
        sub->add_option("--small", opts->small_path)->required()->check(CLI::ExistingFile);
        sub->add_option("--large", opts->large_path)->required()->check(CLI::ExistingFile);
        add_kind(sub, *opts);
        add_committee(sub, *opts);
        sub->add_option("--grid-step", opts->grid_step)->check(CLI::Range(1e-6, 1.0));
        add_normalize(sub, *opts);
        add_out(sub, *opts, "output CSV");
        sub->callback([opts] {
            const auto curve = curve_from_flags(*opts);
            const double value = average_concavity(curve);
            Table t;
            t.header = {"average_concavity"};
            t.rows.push_back({value});
            write_table(t, opts->out_path);
            std::cout << "average_concavity " << format_real(value) << "; wrote "
                      << opts->out_path << "\n";
        });
    }

    // buckets: four-way correctness profile across score thresholds
    {
        auto* sub = app.add_subcommand("buckets", "correctness buckets by score threshold");
        sub->add_option("--small", opts->small_path)->required()->check(CLI::ExistingFile);
        sub->add_option("--large", opts->large_path)->required()->check(CLI::ExistingFile);
        add_kind(sub, *opts);
        add_committee(sub, *opts);
        sub->add_option("--direction", opts->direction, "threshold direction")
            ->check(CLI::IsMember({"at_most", "at_least"}))
            ->capture_default_str();
        sub->add_option("--buckets", opts->buckets, "number of thresholds")
            ->check(CLI::Range(std::size_t{1}, std::size_t{100000}))
            ->capture_default_str();
        add_normalize(sub, *opts);
        add_out(sub, *opts, "output CSV");
        sub->callback([opts] {
            const ModelRun small = load_run(opts->small_path, *opts);
            const ModelRun large = load_run(opts->large_path, *opts);
            const auto committee = load_many(opts->committee_paths, *opts);
            const auto scores =
                make_scores(kind_from_name(opts->kind), small, committee);
            // Thresholds at evenly spaced score quantiles.
            std::vector<double> sorted;
            sorted.reserve(scores.scores.size());
            for (const auto& [id, s] : scores.scores) {
                (void)id;
                sorted.push_back(s);
            }
            std::sort(sorted.begin(), sorted.end());
            std::vector<double> thresholds;
            const std::size_t b = std::min(opts->buckets, sorted.size());
            for (std::size_t j = 1; j <= b; ++j) {
                const double q = static_cast<double>(j) / static_cast<double>(b);
                thresholds.push_back(sorted[count_at_fraction(q, sorted.size()) - 1]);
            }
            const auto profile = bucket_profile(small, large, scores, thresholds,
                                                direction_from_name(opts->direction));
            write_table(bucket_profile_table(profile), opts->out_path);
            std::cout << "wrote " << profile.rows.size() << " threshold rows to "
                      << opts->out_path << "\n";
        });
    }

    // percentiles: accuracy by uncertainty percentile, one column per run
    {
        auto* sub = app.add_subcommand("percentiles", "accuracy by uncertainty percentile");
        sub->add_option("--runs", opts->run_paths, "run logs or a manifest.json (repeatable)")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--small", opts->small_path,
                        "ranking reference log (default: first of --runs)")
            ->check(CLI::ExistingFile);
        add_kind(sub, *opts);
        add_committee(sub, *opts);
        sub->add_option("--buckets", opts->buckets, "number of percentile buckets")
            ->check(CLI::Range(std::size_t{1}, std::size_t{100000}))
            ->capture_default_str();
        add_normalize(sub, *opts);
        add_out(sub, *opts, "output CSV");
        sub->callback([opts] {
            const auto runs = load_many(opts->run_paths, *opts);
            if (runs.empty()) throw Error("no runs given");
            const ModelRun reference = opts->small_path.empty()
                                           ? runs.front()
                                           : load_run(opts->small_path, *opts);
            const auto committee = load_many(opts->committee_paths, *opts);
            const auto scores =
                make_scores(kind_from_name(opts->kind), reference, committee);
            const auto table = percentile_accuracy(runs, scores, opts->buckets);
            write_table(table, opts->out_path);
            std::cout << "wrote " << table.rows.size() << " percentile rows to "
                      << opts->out_path << "\n";
        });
    }

    // churn-table: Q1..Q5 churn statistics
    {
        auto* sub = app.add_subcommand("churn-table", "churn by uncertainty quantile");
        sub->add_option("--runs", opts->run_paths, "run logs or a manifest.json (repeatable)")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--small", opts->small_path,
                        "ranking reference log (default: first of --runs)")
            ->check(CLI::ExistingFile);
        add_kind(sub, *opts);
        add_committee(sub, *opts);
        add_normalize(sub, *opts);
        add_out(sub, *opts, "output CSV");
        sub->callback([opts] {
            const auto runs = load_many(opts->run_paths, *opts);
            RunSet target;
            target.runs = runs;
            const ModelRun reference = opts->small_path.empty()
                                           ? runs.front()
                                           : load_run(opts->small_path, *opts);
            const auto kind = kind_from_name(opts->kind);
            std::vector<ModelRun> committee = load_many(opts->committee_paths, *opts);
            if (committee.empty() && kind_needs_committee(kind)) {
                // Fall back to the target runs: reference's siblings.
                for (const auto& run : runs) {
                    if (run.model_id != reference.model_id) committee.push_back(run);
                }
            }
            const auto scores = make_scores(kind, reference, committee);
            const auto table = churn_by_quantile(target, scores);
            write_table(churn_table(table), opts->out_path);
            std::cout << "wrote churn quantile table to " << opts->out_path << "\n";
        });
    }

    // pairs: disagreement/gap/hump stats for small-large pairs
    {
        auto* sub = app.add_subcommand("pairs", "pairwise gap, disagreement, hump stats");
        sub->add_option("--small", opts->small_path)->check(CLI::ExistingFile);
        sub->add_option("--large", opts->large_path)->check(CLI::ExistingFile);
        sub->add_option("--runs", opts->run_paths,
                        "manifest.json or run logs; pairs every smaller size with "
                        "every larger size")
            ->check(CLI::ExistingFile);
        add_kind(sub, *opts);
        add_committee(sub, *opts);
        sub->add_option("--grid-step", opts->grid_step)->check(CLI::Range(1e-6, 1.0));
        sub->add_option("--gap-lo", opts->gap_lo,
                        "keep pairs with accuracy gap >= this (default 0.005 when filtering)");
        sub->add_option("--gap-hi", opts->gap_hi,
                        "keep pairs with accuracy gap <= this (default 0.01 when filtering)");
        add_normalize(sub, *opts);
        add_out(sub, *opts, "output CSV");
        sub->callback([opts] {
            std::optional<GapInterval> filter;
            if (opts->gap_lo || opts->gap_hi) {
                GapInterval g;
                if (opts->gap_lo) g.lo = *opts->gap_lo;
                if (opts->gap_hi) g.hi = *opts->gap_hi;
                filter = g;
            }
            const auto kind = kind_from_name(opts->kind);

            std::vector<std::pair<ModelRun, ModelRun>> pairs;
            if (!opts->small_path.empty() && !opts->large_path.empty()) {
                pairs.emplace_back(load_run(opts->small_path, *opts),
                                   load_run(opts->large_path, *opts));
            } else if (!opts->run_paths.empty()) {
                if (kind_needs_committee(kind)) {
                    throw Error("pairs over --runs supports per-run kinds only "
                                "(margin, entropy, seq_margin)");
                }
                const auto runs = load_many(opts->run_paths, *opts);
                for (const auto& a : runs) {
                    for (const auto& b : runs) {
                        if (size_rank(a.size_tag) < size_rank(b.size_tag)) {
                            pairs.emplace_back(a, b);
                        }
                    }
                }
            } else {
                throw Error("pairs needs --small/--large or --runs");
            }

            const auto committee = load_many(opts->committee_paths, *opts);
            Table t;
            t.header = {"small_id", "large_id", "accuracy_gap", "disagreement_fraction",
                        "hump_size"};
            std::size_t kept = 0;
            for (const auto& [small, large] : pairs) {
                const auto scores = make_scores(kind, small, committee);
                const auto curve = switcher_curve(small, large, scores, opts->grid_step);
                const auto stats = pair_stats(small, large, curve, filter);
                if (!stats) continue;
                ++kept;
                t.rows.push_back({stats->small_id, stats->large_id, stats->accuracy_gap,
                                  stats->disagreement_fraction, stats->hump_size});
            }
            write_table(t, opts->out_path);
            std::cout << "wrote " << kept << " of " << pairs.size() << " pairs to "
                      << opts->out_path << "\n";
        });
    }

    // histogram: score distribution within one correctness bucket
    {
        auto* sub = app.add_subcommand("histogram", "score histogram per correctness bucket");
        sub->add_option("--small", opts->small_path)->required()->check(CLI::ExistingFile);
        sub->add_option("--large", opts->large_path, "partner log for partner buckets")
            ->check(CLI::ExistingFile);
        add_kind(sub, *opts);
        add_committee(sub, *opts);
        sub->add_option("--bucket", opts->bucket, "correctness bucket")
            ->check(CLI::IsMember(
                {"small_correct", "small_wrong", "only_partner_correct", "both_wrong"}))
            ->capture_default_str();
        sub->add_option("--buckets", opts->buckets, "number of log-spaced bins")
            ->check(CLI::Range(std::size_t{1}, std::size_t{100000}))
            ->capture_default_str();
        add_normalize(sub, *opts);
        add_out(sub, *opts, "output CSV");
        sub->callback([opts] {
            const auto bucket = bucket_from_name(opts->bucket);
            const bool needs_partner = bucket == CorrectnessBucket::OnlyPartnerCorrect ||
                                       bucket == CorrectnessBucket::BothWrong;
            if (needs_partner && opts->large_path.empty()) {
                throw Error("bucket " + opts->bucket + " needs --large");
            }
            const ModelRun small = load_run(opts->small_path, *opts);
            const ModelRun partner =
                opts->large_path.empty() ? small : load_run(opts->large_path, *opts);
            const auto committee = load_many(opts->committee_paths, *opts);
            const auto scores =
                make_scores(kind_from_name(opts->kind), small, committee);

            double lo = 0.0;
            double hi = 0.0;
            std::size_t zeros = 0;
            for (const auto& [id, s] : scores.scores) {
                (void)id;
                if (s > 0.0) {
                    lo = lo == 0.0 ? s : std::min(lo, s);
                    hi = std::max(hi, s);
                } else {
                    ++zeros;
                }
            }
            if (hi == 0.0) {
                throw Error("all scores are non-positive; log-spaced bins need "
                            "positive scores");
            }
            if (!(hi > lo)) hi = lo * 10.0;
            const auto edges = log_spaced_edges(lo, hi, opts->buckets);
            const auto histogram =
                uncertainty_histogram(small, partner, scores, bucket, edges);
            write_table(histogram_table(histogram), opts->out_path);
            std::cout << "wrote " << histogram.counts.size() << " bins ("
                      << histogram.total() << " scores, " << zeros
                      << " non-positive dropped) to " << opts->out_path << "\n";
        });
    }

    // calibrate: threshold from a deferral budget or an accuracy target
    {
        auto* sub = app.add_subcommand("calibrate", "fit a routing threshold");
        sub->add_option("--small", opts->small_path, "calibration log")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--large", opts->large_path,
                        "large model log (required with --target-accuracy)")
            ->check(CLI::ExistingFile);
        add_kind(sub, *opts);
        add_committee(sub, *opts);
        sub->add_option("--grid-step", opts->grid_step)->check(CLI::Range(1e-6, 1.0));
        auto* frac = sub->add_option("--fraction", opts->fraction,
                                     "target deferral fraction in [0,1]")
                         ->check(CLI::Range(0.0, 1.0));
        auto* target = sub->add_option("--target-accuracy", opts->target_accuracy,
                                       "smallest deferral reaching this accuracy")
                           ->check(CLI::Range(0.0, 1.0));
        frac->excludes(target);
        target->excludes(frac);
        add_normalize(sub, *opts);
        add_out(sub, *opts, "output policy JSON");
        sub->callback([opts] {
            if (!opts->fraction && !opts->target_accuracy) {
                throw CLI::RequiredError("--fraction or --target-accuracy");
            }
            const auto scores = scores_from_flags(*opts);
            double fraction = 0.0;
            if (opts->fraction) {
                fraction = *opts->fraction;
            } else {
                if (opts->large_path.empty()) {
                    throw Error("--target-accuracy needs --large to build the curve");
                }
                const auto curve = curve_from_flags(*opts);
                const auto found = fraction_for_target_accuracy(curve, *opts->target_accuracy);
                if (!found) {
                    throw Error("target accuracy " + format_real(*opts->target_accuracy) +
                                " is not reached at any deferral fraction");
                }
                fraction = *found;
            }
            const auto policy = threshold_for_fraction(scores, fraction);
            save_policy(policy, opts->out_path);
            std::cout << "threshold " << format_real(policy.threshold) << " ("
                      << kind_name(policy.kind) << ", expected deferral "
                      << format_real(policy.expected_deferral_fraction) << ") written to "
                      << opts->out_path << "\n";
        });
    }

    // synth: deterministic synthetic dataset
    {
        auto* sub = app.add_subcommand("synth", "generate a synthetic small/large dataset");
        sub->add_option("--config", opts->config_path, "synth config JSON")
            ->check(CLI::ExistingFile);
        sub->add_option("--seed", opts->seed, "override the config seed");
        add_out(sub, *opts, "output directory");
        sub->callback([opts] {
            SynthConfig config;
            if (!opts->config_path.empty()) config = load_synth_config(opts->config_path);
            if (opts->seed) config.seed = *opts->seed;
            const auto data = generate(config);
            write_synth_dataset(data, opts->out_path);
            std::cout << "wrote " << data.small_committee.runs.size() << "+"
                      << data.large_committee.runs.size() << " runs of "
                      << data.example_ids.size() << " examples to " << opts->out_path
                      << "\n";
        });
    }

    // serve: run the deferral proxy until interrupted
    {
        auto* sub = app.add_subcommand("serve", "run the routing service");
        sub->add_option("--config", opts->config_path, "router config JSON")
            ->required()
            ->check(CLI::ExistingFile);
        sub->callback([opts] {
            RouterService service(load_router_config(opts->config_path));
            service.start();
            std::cout << "listening on " << service.config().listen_host << ":"
                      << service.port() << " (policy " << kind_name(service.config().policy.kind)
                      << " >= " << format_real(service.config().policy.threshold) << ")\n";
            g_stop_requested.store(false);
            std::signal(SIGINT, handle_stop_signal);
            std::signal(SIGTERM, handle_stop_signal);
            while (!g_stop_requested.load() && service.running()) {
                std::this_thread::sleep_for(std::chrono::milliseconds(50));
            }
            service.stop();
            std::cout << "stopped\n";
        });
    }

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace cascade::cli
