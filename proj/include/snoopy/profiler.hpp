#ifndef SNOOPY_PROFILER_HPP
#define SNOOPY_PROFILER_HPP

#include <atomic>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "snoopy/site_model.hpp"
#include "snoopy/traffic_sim.hpp"

namespace snoopy::prof {

// Counter for the attacker's finite query model. One query = one page access.
// The counter is the single synchronization point, so concurrent collectors
// can share an instance without over-consuming.
class QueryBudget {
public:
    explicit QueryBudget(std::int64_t max_queries) : max_(max_queries), consumed_(0) {}
    QueryBudget(const QueryBudget& other)
        : max_(other.max_), consumed_(other.consumed_.load()) {}

    std::int64_t max_queries() const { return max_; }
    std::int64_t consumed() const { return consumed_.load(); }
    std::int64_t remaining() const { return max_ - consumed_.load(); }

    // Atomically reserves n queries; false when they would not fit.
    bool try_consume(std::int64_t n);

    // Throws BudgetExceededError (with the shortfall) when n queries would
    // not fit. Used to fail a campaign before any traffic is generated.
    void require(std::int64_t n) const;

private:
    std::int64_t max_;
    std::atomic<std::int64_t> consumed_;
};

// Browser configuration variant used during profiling.
struct ProfilingVariant {
    bool cache_enabled = false;
    bool cookies_allowed = false;

    bool operator==(const ProfilingVariant&) const = default;
};

// Cache-on/cookies-allowed plus cache-off/cookies-prohibited.
std::vector<ProfilingVariant> default_profiling_variants();

struct TSampleEntry {
    sim::SubTrace sub_trace;
    std::string resource_id;
    std::string page_id;
    sim::BrowsingContext profiling_context;
};

struct TSamples {
    std::vector<TSampleEntry> entries;
};

// <resource_id, signature> rows; one row per collected sample.
struct FeatureDB {
    std::vector<std::pair<std::string, std::uint64_t>> entries;
};

// Inverted index: signature -> multiset of resource ids (sorted; duplicates
// retained so frequencies survive).
struct ReverseFeatureDB {
    std::map<std::uint64_t, std::vector<std::string>> index;

    std::vector<std::string> lookup_exact(std::uint64_t f) const;
    // Multiset union over all keys in [lo, hi], sorted.
    std::vector<std::string> lookup_range(std::uint64_t lo, std::uint64_t hi) const;
};

// Per-resource cookie-induced size deltas, in encoded bytes.
// c_t: one entry per predecessor-page URL (resources without a tracking
// cookie have no table, represented as nullopt). c_s: one entry per
// configured browser/OS identifier string.
struct CookieVarEntry {
    std::optional<std::vector<std::pair<std::string, std::uint64_t>>> c_t;
    std::vector<std::pair<std::string, std::uint64_t>> c_s;
};

struct CookieVarTable {
    std::map<std::string, CookieVarEntry> by_resource;

    std::uint64_t max_ct() const;
    std::uint64_t max_cs() const;
    const CookieVarEntry* find(const std::string& resource_id) const;
};

// Affine estimate of the encoding function, fitted by least squares over
// (plaintext + header, signature) pairs.
struct EncoderFit {
    double slope = 1.0;
    double intercept = 0.0;
    std::size_t pair_count = 0;
};

// Protocol constants an observer knows independently of any measurement:
// record framing overhead, per-OS record payload limits, response header base.
struct ProtocolModel {
    std::uint32_t record_overhead = 21;
    std::uint32_t response_header_base = 180;
    std::map<std::string, std::uint32_t> os_record_payload;
    // (os, browser) -> user-agent string; used to resolve session-cookie deltas.
    std::map<std::pair<std::string, std::string>, std::string> user_agent_strings;
};

struct SnoopyDatabase {
    site::Website website;
    FeatureDB feature_db;
    ReverseFeatureDB reverse_db;
    CookieVarTable cookie_var;
    sim::BrowsingContext profiling_context;
    std::vector<ProfilingVariant> profiling_variants;
    EncoderFit encoder_fit;
    ProtocolModel protocol;
    std::int64_t consumed_queries = 0;

    // Smallest profiled signature per resource: the cookie-free baseline under
    // noise-free collection (cookies only ever enlarge a transfer).
    std::map<std::string, std::uint64_t> base_signatures() const;
};

// Accesses every page samples_per_page times per variant in isolated
// single-page sessions, labeling each sub-trace with its resource. The full
// demand is reserved against the budget before any session runs; on shortfall
// a BudgetExceededError is thrown and nothing is collected.
TSamples collect_samples(const site::Website& site, const sim::BrowsingContext& context,
                         int samples_per_page, QueryBudget& budget,
                         const sim::EncoderParams& params, std::uint64_t seed,
                         const std::vector<ProfilingVariant>& variants = default_profiling_variants());

// Signature = sum of record sizes of the sample's sub-trace. Truncated
// samples are skipped with a warning.
FeatureDB build_signatures(const TSamples& samples, std::vector<std::string>* warnings = nullptr);

ReverseFeatureDB construct_dictionary(const FeatureDB& db);

// Least-squares fit over clean samples (session-first sub-traces of
// cookie-enabled variants are excluded: they carry the session cookie).
// Throws std::invalid_argument with fewer than two distinct sizes.
EncoderFit fit_encoder(const site::Website& site, const TSamples& samples,
                       const sim::EncoderParams& params);

// Builds c_t entries for every tracking-cookie resource (one per URL of any
// page that links into a page containing it, delta = slope * URL length) and
// c_s entries for every resource (one per configured identifier string,
// delta = slope * (session_cookie_base + string length)), rounded to bytes.
CookieVarTable compute_cookie_var(const site::Website& site, const EncoderFit& fit,
                                  const sim::EncoderParams& params);

// End-to-end profiling: collect, fit, build both dictionaries and the cookie
// tables. `context` fixes os/browser/network; cache and cookie settings are
// overridden per profiling variant.
SnoopyDatabase profile_website(const site::Website& site, const sim::BrowsingContext& context,
                               int samples_per_page, QueryBudget& budget,
                               const sim::EncoderParams& params, std::uint64_t seed,
                               const std::vector<ProfilingVariant>& variants = default_profiling_variants());

} // namespace snoopy::prof

#endif // SNOOPY_PROFILER_HPP
