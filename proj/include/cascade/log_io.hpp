#pragma once

#include "cascade/types.hpp"

#include <cstdint>
#include <filesystem>
#include <variant>
#include <vector>

namespace cascade {

enum class LogSchema { Classification, Seq2Seq };

std::string to_string(LogSchema schema);
LogSchema log_schema_from_string(const std::string& name);

struct IngestOptions {
    /// Lowercase and strip punctuation before comparing prediction to gold.
    bool normalize_answers = false;
};

/// Parses a JSONL prediction log, one record per line. `correct` is filled
/// in whenever the record carries a gold label. The returned run's
/// model_id defaults to the file stem; size_tag and run_index are
/// overridden by the manifest loader when one is in play.
ModelRun load_prediction_log(const std::filesystem::path& path, LogSchema schema,
                             const IngestOptions& options = {});

/// Peeks at the first record to distinguish classification ("probs") from
/// seq2seq ("tokens") logs.
LogSchema detect_log_schema(const std::filesystem::path& path);

ModelRun load_prediction_log_auto(const std::filesystem::path& path,
                                  const IngestOptions& options = {});

/// Writes a run back out in the log format, ascending example_id.
/// Loading the result reproduces the run exactly.
void write_prediction_log(const ModelRun& run, const std::filesystem::path& path);

struct ManifestEntry {
    std::string path;
    SizeTag size_tag = SizeTag::Other;
    int run_index = 0;
};

struct Manifest {
    std::string dataset;
    std::string split;
    std::vector<ManifestEntry> entries;
};

Manifest load_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// Loads every run named by a manifest; relative log paths resolve against
/// the manifest's directory.
std::vector<ModelRun> load_manifest_runs(const std::filesystem::path& path,
                                         const IngestOptions& options = {});

/// Rectangular output table. Real cells are written with 10 significant
/// digits; everything downstream of the analyses goes through this.
struct Table {
    using Cell = std::variant<std::string, double, std::int64_t>;

    std::vector<std::string> header;
    std::vector<std::vector<Cell>> rows;
};

/// CSV with a header row, '\n' line endings and '.' decimal separator.
/// Rows must all match the header arity. Identical tables produce
/// byte-identical files.
void write_table(const Table& table, const std::filesystem::path& path);

/// Locale-independent formatting, 10 significant digits.
std::string format_real(double value);

} // namespace cascade
