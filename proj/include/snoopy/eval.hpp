#ifndef SNOOPY_EVAL_HPP
#define SNOOPY_EVAL_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "snoopy/predictor.hpp"
#include "snoopy/profiler.hpp"
#include "snoopy/site_model.hpp"
#include "snoopy/traffic_sim.hpp"

namespace snoopy::eval {

// Page-level outcome counts for a session set. Every accessed page falls into
// exactly one of: accurately identified, wrongly identified (substituted by a
// page that was not accessed), not identified.
struct WebpageBreakdown {
    std::uint64_t accessed = 0;
    std::uint64_t accurately_identified = 0;
    std::uint64_t wrongly_identified = 0;
    std::uint64_t not_identified = 0;

    double accurately_identified_pct() const;
    double wrongly_identified_pct() const;
    double not_identified_pct() const;

    bool operator==(const WebpageBreakdown&) const = default;
};

// Resource-level outcome counts: accurate, incomplete (truncated transfer),
// conflict (unresolvable or resolved to the wrong resource).
struct ResourceBreakdown {
    std::uint64_t total = 0;
    std::uint64_t accurate = 0;
    std::uint64_t incomplete = 0;
    std::uint64_t conflict = 0;

    double accurate_pct() const;
    double incomplete_pct() const;
    double conflict_pct() const;

    bool operator==(const ResourceBreakdown&) const = default;
};

// One grid cell of an experiment: the browsing context a victim used.
struct CellKey {
    std::string os = "os_a";
    std::string browser = "browser_a";
    bool cache_enabled = false;
    bool cookies_allowed = false;
    int tab_count = 1;
    sim::NetworkProfile network;

    bool operator==(const CellKey&) const = default;
    bool operator<(const CellKey& other) const;
    std::string label() const;
};

struct CellResult {
    CellKey key;
    std::uint32_t sessions = 0;
    double fa_percent = 0.0;
    WebpageBreakdown webpages;
    ResourceBreakdown resources;
    std::string note; // non-empty when the cell was skipped
};

struct AccuracyReport {
    double fa_percent = 0.0;
    WebpageBreakdown webpages;
    ResourceBreakdown resources;
    std::vector<CellResult> cells;
    std::uint64_t consumed_queries = 0;
};

// Aggregates prediction outcomes against ground truth. The lists are parallel
// (one entry per session); a length mismatch throws std::invalid_argument.
AccuracyReport fingerprinting_accuracy(const std::vector<pred::PredictionResult>& results,
                                       const std::vector<sim::GroundTruth>& truths);

// The evaluation axes a victim's context ranges over.
struct GeneralizationFactors {
    std::vector<std::string> page_subset;                  // empty = every page
    std::vector<std::pair<bool, bool>> browsing_configs;   // (cache, cookies)
    std::vector<int> tab_counts;
    std::vector<std::string> os_list;
    std::vector<std::string> browser_list;
    std::vector<sim::NetworkProfile> network_profiles;
};

struct ExperimentSpec {
    GeneralizationFactors factors;
    int samples_per_page = 3;
    // 0 derives the exact demand pages * samples * variants.
    std::uint64_t budget = 0;
    std::uint32_t sessions_per_cell = 5;
    int pages_per_session = 3;
    std::uint64_t seed = 0;
    sim::BrowsingContext profiling_context;
    std::vector<prof::ProfilingVariant> profiling_variants = prof::default_profiling_variants();
    bool provide_bo_hint = true;
    bool provide_cache_hint = true;
};

// Profiles once under the experiment's profiling context, then simulates
// sessions_per_cell victim sessions for every cell of the factor grid and
// aggregates accuracy. Only profiling accesses draw from the budget; cells
// whose session walk is infeasible are skipped with a note.
AccuracyReport run_experiment(const ExperimentSpec& spec, const site::Website& website,
                              const sim::EncoderParams& params);

enum class Feature { resource_size, burst_pattern, rtdt };

const char* feature_name(Feature f);

struct StabilityEntry {
    std::string resource_id;
    std::vector<double> values; // one per context, same order as the input
    double cv = 0.0;            // stddev / mean; 0 when the mean is 0
};

struct StabilityTable {
    Feature feature = Feature::resource_size;
    std::vector<StabilityEntry> rows;
    // Session-level signed burst sequences (+n: n response records, -1: a
    // request), one per context; exposed for qualitative comparison.
    std::vector<std::vector<std::int64_t>> burst_sequences;
};

// Simulates one whole-site session per context and reports the per-resource
// coefficient of variation of the chosen feature across contexts. Only
// resources downloaded in every context are comparable and reported.
// resource_size: the summed record bytes; burst_pattern: the sub-trace's
// position in the session; rtdt: simulated transfer time under the context's
// network delays. Requires at least two contexts.
StabilityTable assess_feature_stability(const site::Website& website,
                                        const std::vector<sim::BrowsingContext>& contexts,
                                        Feature feature, const sim::EncoderParams& params,
                                        std::uint64_t seed);

struct LabeledTrace {
    sim::EncryptedTrace trace;
    std::string page_id;
};

// Pluggable page classifier: train on labeled traces, predict a page with a
// confidence in [0, 1]. Implementations must be deterministic.
class Classifier {
public:
    virtual ~Classifier() = default;
    virtual void train(const std::vector<LabeledTrace>& samples) = 0;
    virtual std::pair<std::string, double> predict(const sim::EncryptedTrace& trace) const = 0;
};

// Nearest-centroid baseline over the feature vector (total bytes, sub-trace
// count, top-5 sub-trace sizes descending). Confidence is the inverse-distance
// share of the winning centroid. Predicting before training throws
// std::logic_error; ties break to the lexicographically smallest page id.
class NearestCentroidClassifier : public Classifier {
public:
    void train(const std::vector<LabeledTrace>& samples) override;
    std::pair<std::string, double> predict(const sim::EncryptedTrace& trace) const override;

    static std::vector<double> features(const sim::EncryptedTrace& trace);

private:
    std::map<std::string, std::vector<double>> centroids_;
};

// p_v = the minimum over validation traces of the classifier's top-class
// confidence. Empty validation set throws std::invalid_argument.
double compute_validation_threshold(const Classifier& classifier,
                                    const std::vector<sim::EncryptedTrace>& validation_set);

struct EnsembleConfig {
    std::set<std::string> snoopy_page_set;
    std::set<std::string> ml_page_set;
    Classifier* classifier = nullptr; // non-owning
    double p_v = 0.325;
    double margin = 0.10;
};

struct EnsembleDecision {
    std::optional<std::string> page_id;
    bool used_classifier = false;
    double p_ml = 0.0;
    std::string note; // diagnostic when the classifier failed
};

// Runs the classifier first; when its confidence reaches p_v - margin its page
// wins, otherwise the trace falls through to signature-based prediction. A
// classifier failure also falls through, with a diagnostic note.
EnsembleDecision ensemble_predict(const sim::EncryptedTrace& trace,
                                  const prof::SnoopyDatabase& snoopy_db,
                                  const EnsembleConfig& config, const pred::ContextHints& hints);

// Returns a copy of the site where roughly the given fraction of pages is
// paired up and each pair's page-exclusive resources are resized to collide
// byte-for-byte. The returned set lists the colliding page ids.
site::Website make_collision_variant(const site::Website& site, double fraction,
                                     std::uint64_t seed, std::set<std::string>* colliding_pages);

} // namespace snoopy::eval

#endif // SNOOPY_EVAL_HPP
