#ifndef SNOOPY_PREDICTOR_HPP
#define SNOOPY_PREDICTOR_HPP

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "snoopy/profiler.hpp"
#include "snoopy/traffic_sim.hpp"

namespace snoopy::pred {

struct FValue {
    std::size_t index = 0;
    std::uint64_t f = 0;
    std::string group_key;
    bool truncated = false;
};

using FValues = std::vector<FValue>;

// Observer-side assumptions about the victim's environment.
struct ContextHints {
    // (os, browser) estimate; presence implies cookies are assumed enabled.
    std::optional<std::pair<std::string, std::string>> bo_hint;
    std::optional<bool> cache_assumed;
};

struct CandidateScore {
    std::string resource_id;
    std::int64_t freq = 0;
    std::uint64_t adjusted_sig = 0;
    std::int64_t diff = 0; // adjusted_sig - f, signed
    bool exact = false;

    double weight() const { return diff == 0 ? 0.0 : static_cast<double>(freq) / std::abs(static_cast<double>(diff)); }
};

enum class ResourceStatus { identified, unidentified_incomplete, unidentified_conflict };

struct StepDiagnostics {
    std::vector<std::string> relevant;   // after the range lookup
    std::vector<std::string> reachable;  // after reachability pruning
    std::vector<std::string> eliminated; // impossible under cookie adjustment
    std::vector<CandidateScore> scored;
};

struct ResolvedEntry {
    std::size_t index = 0;
    ResourceStatus status = ResourceStatus::unidentified_conflict;
    std::string resource_id; // empty unless identified
};

struct PredictionResult {
    std::vector<ResolvedEntry> predicted_resources;
    std::set<std::string> predicted_webpages;
    std::vector<std::string> extraction_order;
    std::vector<StepDiagnostics> diagnostics;
    std::size_t unmatched_heads = 0;
};

// One F value per sub-trace: the sum of its record sizes.
FValues split_trace(const sim::EncryptedTrace& trace);

// Multiset of resources whose profiled signature lies within
// [f - max(c_t) - extra_slack, f + max(c_s) + extra_slack].
std::vector<std::string> candidate_lookup(std::uint64_t f, const prof::SnoopyDatabase& db,
                                          std::uint64_t extra_slack = 0);

// Drops candidate instances attributable to pages outside the reachable set.
// Since profiling samples every page uniformly, a resource's instances split
// evenly across its pages and frequencies scale by the reachable share.
// An empty visited set leaves the multiset unchanged.
std::vector<std::string> prune_reachability(const std::vector<std::string>& candidates,
                                            const std::set<std::string>& visited,
                                            const prof::SnoopyDatabase& db);

// Core adjustment arithmetic: maps the signature into the observation's
// record-payload regime and applies cookie deltas as sig - c_t + c_s.
std::uint64_t adjusted_signature(std::uint64_t sig, std::int64_t ct_delta, std::int64_t cs_delta,
                                 std::uint32_t profiled_payload, std::uint32_t observed_payload,
                                 std::uint32_t record_overhead);

// Scores each unique candidate against f. Tracking deltas are evaluated for
// every predecessor URL consistent with the visited pages (best-scoring kept);
// the session-cookie delta applies on the session's first transfer when the
// bo hint resolves. Candidates whose every adjustment is impossible — the
// adjusted value falls below the minimal encodable size, or the observation
// sits below the candidate's smallest cookie-inclusive encoding — are
// eliminated.
std::vector<CandidateScore> adjust_cookie_variation(const std::vector<std::string>& candidates,
                                                    std::uint64_t f, bool first_of_session,
                                                    const std::set<std::string>& visited,
                                                    const ContextHints& hints,
                                                    const prof::SnoopyDatabase& db,
                                                    StepDiagnostics* diag = nullptr);

// Exact matches outrank every weighted candidate (highest frequency first);
// otherwise the highest freq/|diff| wins, breaking ties by smaller |diff|
// then lexicographic id. Empty input yields nullopt (a conflict).
std::optional<std::string> select_resource(const std::vector<CandidateScore>& scored);

// Runs the four resolution steps over a whole trace, threading the visited
// set of pages the resolved resources imply.
std::vector<ResolvedEntry> predict_resources(const sim::EncryptedTrace& trace,
                                             const prof::SnoopyDatabase& db,
                                             const ContextHints& hints,
                                             std::vector<StepDiagnostics>* diagnostics = nullptr);

// Recovers the accessed pages from the identified resource sequence: the
// first unconsumed resource selects candidate pages (those whose sequence
// starts with it, falling back to containment), a candidate matches when its
// download sequence is a subsequence of the remaining prediction, and the
// match with the smallest index span wins. With cache_assumed, cacheable
// resources of already-extracted pages count as implicitly present.
std::set<std::string> extract_webpages(const std::vector<ResolvedEntry>& predicted,
                                       const prof::SnoopyDatabase& db, const ContextHints& hints,
                                       std::vector<std::string>* order = nullptr,
                                       std::size_t* unmatched_heads = nullptr);

// Full pipeline: split, resolve, extract.
PredictionResult predict(const sim::EncryptedTrace& trace, const prof::SnoopyDatabase& db,
                         const ContextHints& hints);

// Payload/record-count helpers for the adjustment step.
std::uint64_t strip_record_overheads(std::uint64_t sig, std::uint32_t max_record_payload,
                                     std::uint32_t record_overhead);
std::uint64_t apply_record_overheads(std::uint64_t payload, std::uint32_t max_record_payload,
                                     std::uint32_t record_overhead);

// Widening applied by the pipeline on top of the plain lookup range: covers
// session-cookie bearing observations matched against cookie-free baselines
// and record-count differences between payload regimes.
std::uint64_t lookup_slack(const prof::SnoopyDatabase& db);

} // namespace snoopy::pred

#endif // SNOOPY_PREDICTOR_HPP
