#ifndef SNOOPY_TRAFFIC_SIM_HPP
#define SNOOPY_TRAFFIC_SIM_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "snoopy/site_model.hpp"

namespace snoopy::sim {

struct NetworkProfile {
    int delay_min_ms = 0;
    int delay_max_ms = 0;
    double drop_probability = 0.0;
    bool retransmit = true; // true: drops are recovered and sizes unaffected

    bool operator==(const NetworkProfile&) const = default;
};

// Client-side browsing configuration. max_record_payload is a property of the
// OS network stack, so contexts should be built via make_context which fills
// it from the per-OS table in EncoderParams.
struct BrowsingContext {
    std::string os = "os_a";
    std::uint32_t max_record_payload = 16384;
    std::string browser = "browser_a";
    bool cache_enabled = false;
    bool cookies_allowed = false;
    int tab_count = 1;
    NetworkProfile network;

    bool operator==(const BrowsingContext&) const = default;
};

// Parameters of the encrypted-transport encoder: affine ciphertext expansion
// applied to the consolidated payload, which is then split into records of at
// most max_record_payload bytes, each carrying a fixed framing overhead.
struct EncoderParams {
    std::uint32_t record_overhead = 21;
    std::uint32_t response_header_base = 180;
    std::uint32_t session_cookie_base = 60;
    double expansion_a = 1.0;
    std::uint64_t expansion_b = 0;
    std::map<std::string, std::uint32_t> os_record_payload;
    // (os, browser) -> browser/OS identifier string sent in headers.
    std::map<std::pair<std::string, std::string>, std::string> user_agent_strings;

    const std::string& bo_string(const std::string& os, const std::string& browser) const;
};

// Two OSes x two browsers with identifier strings of pairwise distinct length.
EncoderParams default_encoder_params();

BrowsingContext make_context(const std::string& os, const std::string& browser,
                             const EncoderParams& params, bool cache_enabled,
                             bool cookies_allowed, int tab_count = 1,
                             const NetworkProfile& network = {});

// Observable records of one resource transfer. group_key is an opaque stream
// identifier; it reveals which records belong together but not the resource.
struct SubTrace {
    std::string group_key;
    std::vector<std::uint64_t> record_sizes;
    std::uint64_t first_byte_index = 0;
    bool truncated = false;

    std::uint64_t total_bytes() const;

    bool operator==(const SubTrace&) const = default;
};

struct EncryptedTrace {
    std::vector<SubTrace> sub_traces;
    // Optional (os, browser) estimate available to an observer.
    std::optional<std::pair<std::string, std::string>> context_hint;

    bool operator==(const EncryptedTrace&) const = default;
};

// Pages to visit per tab, in order. Within a tab every consecutive page pair
// must be a hyperlink edge; only the first page of a tab is unconstrained.
struct SessionPlan {
    std::vector<std::vector<std::string>> tab_pages;
    std::uint64_t interleaving_seed = 0;
};

struct GroundTruthEntry {
    std::string resource_id;
    std::string page_id;
    int tab_index = 0;
    bool downloaded = true; // false only for cache-suppressed fetches

    bool operator==(const GroundTruthEntry&) const = default;
};

// Entries appear in emission order; those with downloaded=true align 1:1 with
// the sub-traces of the simulated EncryptedTrace.
struct GroundTruth {
    std::vector<GroundTruthEntry> entries;
    std::set<std::string> session_pages;

    bool operator==(const GroundTruth&) const = default;
};

// Splits an encoded payload into per-record wire sizes.
std::vector<std::uint64_t> segment_records(std::uint64_t payload, std::uint32_t max_record_payload,
                                           std::uint32_t record_overhead);

// Encodes one resource transfer. The consolidated payload is
//   a * (plaintext + response_header_base + tc + sc) + b
// where tc = length(prev_url) if the resource carries a tracking cookie,
// cookies are allowed and a previous page exists, and sc = session_cookie_base
// + length(bo(os, browser)) on the first transfer of a cookie-enabled session.
SubTrace encode_resource(const site::Resource& resource, const BrowsingContext& context,
                         const EncoderParams& params, bool is_first_of_session,
                         const std::optional<std::string>& prev_url);

// Throws std::invalid_argument when the plan references unknown pages or
// violates the within-tab edge constraint.
void validate_plan(const site::Website& site, const SessionPlan& plan);

// Deterministically simulates one browsing session: per-tab page walks whose
// sub-traces interleave pseudo-randomly under the plan's interleaving seed,
// with a session-shared cache and per-tab tracking-cookie scope.
std::pair<EncryptedTrace, GroundTruth> simulate_session(const site::Website& site,
                                                        const SessionPlan& plan,
                                                        const BrowsingContext& context,
                                                        const EncoderParams& params,
                                                        std::uint64_t seed);

// Applies network effects. With retransmit=true sizes are unchanged (losses
// recover); otherwise each record is dropped independently with
// drop_probability and affected sub-traces are flagged truncated.
EncryptedTrace perturb_network(const EncryptedTrace& trace, const NetworkProfile& profile,
                               std::uint64_t seed);

// Random walk plan: total_pages spread over tab_count tabs following edges,
// preferring unvisited pages. Throws std::invalid_argument when infeasible
// (e.g. an edgeless site with more pages requested than tabs).
SessionPlan sample_session_plan(const site::Website& site, int tab_count, int total_pages,
                                std::uint64_t seed);

} // namespace snoopy::sim

#endif // SNOOPY_TRAFFIC_SIM_HPP
