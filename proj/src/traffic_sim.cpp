#include "snoopy/traffic_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "snoopy/rng.hpp"

namespace snoopy::sim {

const std::string& EncoderParams::bo_string(const std::string& os,
                                            const std::string& browser) const {
    auto it = user_agent_strings.find({os, browser});
    if (it == user_agent_strings.end())
        throw std::invalid_argument("no user-agent string configured for (" + os + ", " + browser +
                                    ")");
    return it->second;
}

EncoderParams default_encoder_params() {
    EncoderParams p;
    p.os_record_payload = {{"os_a", 16384}, {"os_b", 8192}};
    p.user_agent_strings = {
        {{"os_a", "browser_a"}, "browser_a/101.0 (os_a; x86_64)"},
        {{"os_a", "browser_b"}, "browser_b/99.4 (os_a; x86_64; rv:99)"},
        {{"os_b", "browser_a"}, "browser_a/101.0 (os_b; nt-10.0; win64)"},
        {{"os_b", "browser_b"}, "browser_b/99.4 (os_b; nt-10; win64; rv:99)"},
    };
    return p;
}

BrowsingContext make_context(const std::string& os, const std::string& browser,
                             const EncoderParams& params, bool cache_enabled, bool cookies_allowed,
                             int tab_count, const NetworkProfile& network) {
    auto it = params.os_record_payload.find(os);
    if (it == params.os_record_payload.end())
        throw std::invalid_argument("no record payload limit configured for OS: " + os);
    params.bo_string(os, browser); // validates the pair
    BrowsingContext c;
    c.os = os;
    c.max_record_payload = it->second;
    c.browser = browser;
    c.cache_enabled = cache_enabled;
    c.cookies_allowed = cookies_allowed;
    c.tab_count = tab_count;
    c.network = network;
    return c;
}

std::uint64_t SubTrace::total_bytes() const {
    return std::accumulate(record_sizes.begin(), record_sizes.end(), std::uint64_t{0});
}

std::vector<std::uint64_t> segment_records(std::uint64_t payload, std::uint32_t max_record_payload,
                                           std::uint32_t record_overhead) {
    if (max_record_payload == 0)
        throw std::invalid_argument("max_record_payload must be positive");
    std::vector<std::uint64_t> records;
    std::uint64_t remaining = payload;
    do {
        std::uint64_t chunk = std::min<std::uint64_t>(remaining, max_record_payload);
        records.push_back(chunk + record_overhead);
        remaining -= chunk;
    } while (remaining > 0);
    return records;
}

SubTrace encode_resource(const site::Resource& resource, const BrowsingContext& context,
                         const EncoderParams& params, bool is_first_of_session,
                         const std::optional<std::string>& prev_url) {
    if (resource.plaintext_size < 1)
        throw std::invalid_argument("resource has zero plaintext size: " + resource.id);

    std::uint64_t tc = 0;
    if (resource.carries_tracking_cookie && context.cookies_allowed && prev_url && !prev_url->empty())
        tc = prev_url->size();

    std::uint64_t sc = 0;
    if (context.cookies_allowed && is_first_of_session)
        sc = params.session_cookie_base + params.bo_string(context.os, context.browser).size();

    std::uint64_t consolidated =
        resource.plaintext_size + params.response_header_base + tc + sc;
    std::uint64_t payload =
        static_cast<std::uint64_t>(std::llround(params.expansion_a * static_cast<double>(consolidated))) +
        params.expansion_b;

    SubTrace st;
    st.record_sizes = segment_records(payload, context.max_record_payload, params.record_overhead);
    return st;
}

void validate_plan(const site::Website& site, const SessionPlan& plan) {
    if (plan.tab_pages.empty())
        throw std::invalid_argument("session plan has no tabs");
    for (const auto& tab : plan.tab_pages) {
        if (tab.empty())
            throw std::invalid_argument("session plan has an empty tab");
        for (const std::string& p : tab)
            site.page_at(p); // throws on unknown page
        for (std::size_t i = 1; i < tab.size(); ++i)
            if (!site.edges.count({tab[i - 1], tab[i]}))
                throw std::invalid_argument("plan step is not a hyperlink edge: " + tab[i - 1] +
                                            " -> " + tab[i]);
    }
}

namespace {

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

// Opaque per-transfer stream key. Derived from the (page, resource, occurrence)
// identity rather than emission order, so tab interleaving does not change the
// key multiset of a session.
std::string make_group_key(const std::string& page_id, const std::string& resource_id,
                           int occurrence) {
    std::string tag = page_id + "\x1f" + resource_id + "\x1f" + std::to_string(occurrence);
    return "g" + hex64(fnv1a64(tag));
}

} // namespace

std::pair<EncryptedTrace, GroundTruth> simulate_session(const site::Website& site,
                                                        const SessionPlan& plan,
                                                        const BrowsingContext& context,
                                                        const EncoderParams& params,
                                                        std::uint64_t seed) {
    validate_plan(site, plan);
    if (static_cast<int>(plan.tab_pages.size()) > std::max(context.tab_count, 1))
        throw std::invalid_argument("plan uses more tabs than the context allows");

    // Per-tab cursor over (page index, position in that page's sequence).
    struct Cursor {
        std::size_t page = 0;
        std::size_t pos = 0;
    };
    std::vector<Cursor> cursors(plan.tab_pages.size());

    EncryptedTrace trace;
    GroundTruth truth;
    for (const auto& tab : plan.tab_pages)
        for (const std::string& p : tab)
            truth.session_pages.insert(p);

    Rng scheduler(mix_seed(seed, "interleave", plan.interleaving_seed));
    std::set<std::string> cached;                   // session-wide browser cache
    std::map<std::pair<std::string, std::string>, int> occurrences;
    std::uint64_t byte_cursor = 0;
    bool any_downloaded = false;

    auto tab_done = [&](std::size_t t) { return cursors[t].page >= plan.tab_pages[t].size(); };

    while (true) {
        std::vector<std::size_t> active;
        for (std::size_t t = 0; t < plan.tab_pages.size(); ++t)
            if (!tab_done(t))
                active.push_back(t);
        if (active.empty())
            break;
        std::size_t t = active[scheduler.below(active.size())];

        const auto& tab = plan.tab_pages[t];
        Cursor& cur = cursors[t];
        const site::Webpage& page = site.page_at(tab[cur.page]);
        const std::string& rid = page.download_sequence[cur.pos];
        const site::Resource& res = site.resource_at(rid);

        std::optional<std::string> prev_url;
        if (cur.page > 0)
            prev_url = site.page_at(tab[cur.page - 1]).url;

        GroundTruthEntry gt;
        gt.resource_id = rid;
        gt.page_id = page.id;
        gt.tab_index = static_cast<int>(t);

        if (context.cache_enabled && res.cacheable && cached.count(rid)) {
            gt.downloaded = false;
            truth.entries.push_back(gt);
        } else {
            SubTrace st = encode_resource(res, context, params, !any_downloaded, prev_url);
            any_downloaded = true;
            int occ = occurrences[{page.id, rid}]++;
            st.group_key = make_group_key(page.id, rid, occ);
            st.first_byte_index = byte_cursor;
            byte_cursor += st.total_bytes();
            trace.sub_traces.push_back(std::move(st));
            gt.downloaded = true;
            truth.entries.push_back(gt);
            cached.insert(rid);
        }

        if (++cur.pos >= page.download_sequence.size()) {
            cur.pos = 0;
            ++cur.page;
        }
    }

    trace.context_hint = std::make_pair(context.os, context.browser);
    return {std::move(trace), std::move(truth)};
}

EncryptedTrace perturb_network(const EncryptedTrace& trace, const NetworkProfile& profile,
                               std::uint64_t seed) {
    if (profile.drop_probability < 0.0 || profile.drop_probability > 1.0)
        throw std::invalid_argument("drop_probability must lie in [0, 1]");
    EncryptedTrace out = trace;
    if (profile.retransmit || profile.drop_probability == 0.0)
        return out; // losses recover; observable sizes are delay-invariant

    Rng rng(mix_seed(seed, "drops"));
    for (SubTrace& st : out.sub_traces) {
        std::vector<std::uint64_t> kept;
        for (std::uint64_t size : st.record_sizes)
            if (!rng.bernoulli(profile.drop_probability))
                kept.push_back(size);
        if (kept.size() != st.record_sizes.size()) {
            st.truncated = true;
            st.record_sizes = std::move(kept);
        }
    }
    return out;
}

SessionPlan sample_session_plan(const site::Website& site, int tab_count, int total_pages,
                                std::uint64_t seed) {
    if (tab_count < 1)
        throw std::invalid_argument("tab_count must be >= 1");
    if (total_pages < 1 || total_pages > 15)
        throw std::invalid_argument("total_pages must lie in [1, 15]");
    if (tab_count > total_pages)
        throw std::invalid_argument("tab_count exceeds total_pages");
    if (site.edges.empty() && total_pages > tab_count)
        throw std::invalid_argument("walk infeasible: website has no edges and total_pages > tab_count");

    Rng rng(mix_seed(seed, "plan"));
    std::vector<int> quota(static_cast<std::size_t>(tab_count), total_pages / tab_count);
    for (int i = 0; i < total_pages % tab_count; ++i)
        ++quota[static_cast<std::size_t>(i)];

    std::vector<std::string> all_pages;
    for (const auto& p : site.pages)
        all_pages.push_back(p.id);

    std::map<std::string, std::vector<std::string>> successors;
    for (const auto& [u, v] : site.edges)
        successors[u].push_back(v);

    SessionPlan plan;
    plan.interleaving_seed = mix_seed(seed, "interleave-seed");

    auto has_successor = [&](const std::string& p) {
        auto it = successors.find(p);
        return it != successors.end() && !it->second.empty();
    };

    // A random walk can dead-end on a page without outgoing links even when a
    // valid walk exists, so failed attempts are redrawn deterministically.
    constexpr int max_attempts = 256;
    std::string failure = "walk infeasible";
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        plan.tab_pages.clear();
        std::set<std::string> visited;
        bool ok = true;

        for (int t = 0; t < tab_count && ok; ++t) {
            const int want = quota[static_cast<std::size_t>(t)];
            std::vector<std::string> walk;
            // Prefer starting on a page the session has not visited yet; a
            // multi-page tab must start somewhere it can leave again.
            std::vector<std::string> starts;
            for (const std::string& p : all_pages)
                if (!visited.count(p) && (want == 1 || has_successor(p)))
                    starts.push_back(p);
            if (starts.empty())
                for (const std::string& p : all_pages)
                    if (want == 1 || has_successor(p))
                        starts.push_back(p);
            if (starts.empty()) {
                failure = "walk infeasible: no page has outgoing links";
                ok = false;
                break;
            }
            std::string current = starts[rng.below(starts.size())];
            walk.push_back(current);
            visited.insert(current);

            while (static_cast<int>(walk.size()) < want) {
                auto it = successors.find(current);
                if (it == successors.end() || it->second.empty()) {
                    failure = "walk infeasible: page has no outgoing links: " + current;
                    ok = false;
                    break;
                }
                std::vector<std::string> fresh;
                for (const std::string& s : it->second)
                    if (!visited.count(s))
                        fresh.push_back(s);
                const std::vector<std::string>& pool = fresh.empty() ? it->second : fresh;
                current = pool[rng.below(pool.size())];
                walk.push_back(current);
                visited.insert(current);
            }
            if (ok)
                plan.tab_pages.push_back(std::move(walk));
        }
        if (ok)
            return plan;
    }
    throw std::invalid_argument(failure);
}

} // namespace snoopy::sim
