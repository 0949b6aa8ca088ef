#ifndef SNOOPY_SERIALIZE_HPP
#define SNOOPY_SERIALIZE_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "snoopy/eval.hpp"
#include "snoopy/predictor.hpp"
#include "snoopy/profiler.hpp"
#include "snoopy/site_model.hpp"
#include "snoopy/traffic_sim.hpp"

namespace snoopy::io {

// Every persisted document carries this version; loaders reject anything else
// rather than attempting a silent migration.
inline constexpr int schema_version = 1;

// Writes content to a temporary sibling file and renames it into place, so a
// crash never leaves a half-written artifact behind.
void atomic_write(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

void save_website(const site::Website& site, const std::filesystem::path& path);
site::Website load_website(const std::filesystem::path& path);

// The reverse index is stored alongside the signatures and re-derived on
// load; a disagreement between the two marks a corrupt document.
void save_database(const prof::SnoopyDatabase& db, const std::filesystem::path& path);
prof::SnoopyDatabase load_database(const std::filesystem::path& path);

// One simulated browsing session: the observable trace plus, unless stripped
// for adversary-side consumption, the ground truth it came from.
struct SessionRecord {
    sim::BrowsingContext context;
    sim::EncryptedTrace trace;
    std::optional<sim::GroundTruth> ground_truth;
};

// Line-delimited format: a header line followed by one session per line.
// With blind=true the ground truth is stripped from the output.
void save_traces(const std::vector<SessionRecord>& sessions, const std::filesystem::path& path,
                 bool blind);
std::vector<SessionRecord> load_traces(const std::filesystem::path& path);

void save_experiment_spec(const eval::ExperimentSpec& spec, const std::filesystem::path& path);
eval::ExperimentSpec load_experiment_spec(const std::filesystem::path& path);

// Per-session prediction output, line-delimited like the trace files.
void save_predictions(const std::vector<pred::PredictionResult>& results,
                      const std::filesystem::path& path);

// CSV table: one row per grid cell plus a closing aggregate row.
void save_report_csv(const eval::AccuracyReport& report, const std::filesystem::path& path);

std::string website_to_string(const site::Website& site);
std::string database_to_string(const prof::SnoopyDatabase& db);

} // namespace snoopy::io

#endif // SNOOPY_SERIALIZE_HPP
