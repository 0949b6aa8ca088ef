#include "snoopy/profiler.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "snoopy/errors.hpp"
#include "snoopy/rng.hpp"

namespace snoopy::prof {

bool QueryBudget::try_consume(std::int64_t n) {
    std::int64_t current = consumed_.load();
    while (current + n <= max_) {
        if (consumed_.compare_exchange_weak(current, current + n))
            return true;
    }
    return false;
}

void QueryBudget::require(std::int64_t n) const {
    std::int64_t available = remaining();
    if (n > available)
        throw BudgetExceededError(n, available);
}

std::vector<ProfilingVariant> default_profiling_variants() {
    return {{true, true}, {false, false}};
}

std::vector<std::string> ReverseFeatureDB::lookup_exact(std::uint64_t f) const {
    auto it = index.find(f);
    return it == index.end() ? std::vector<std::string>{} : it->second;
}

std::vector<std::string> ReverseFeatureDB::lookup_range(std::uint64_t lo, std::uint64_t hi) const {
    std::vector<std::string> out;
    for (auto it = index.lower_bound(lo); it != index.end() && it->first <= hi; ++it)
        out.insert(out.end(), it->second.begin(), it->second.end());
    std::sort(out.begin(), out.end());
    return out;
}

std::uint64_t CookieVarTable::max_ct() const {
    std::uint64_t best = 0;
    for (const auto& [_, entry] : by_resource)
        if (entry.c_t)
            for (const auto& [url, delta] : *entry.c_t)
                best = std::max(best, delta);
    return best;
}

std::uint64_t CookieVarTable::max_cs() const {
    std::uint64_t best = 0;
    for (const auto& [_, entry] : by_resource)
        for (const auto& [bo, delta] : entry.c_s)
            best = std::max(best, delta);
    return best;
}

const CookieVarEntry* CookieVarTable::find(const std::string& resource_id) const {
    auto it = by_resource.find(resource_id);
    return it == by_resource.end() ? nullptr : &it->second;
}

std::map<std::string, std::uint64_t> SnoopyDatabase::base_signatures() const {
    std::map<std::string, std::uint64_t> base;
    for (const auto& [rid, sig] : feature_db.entries) {
        auto it = base.find(rid);
        if (it == base.end() || sig < it->second)
            base[rid] = sig;
    }
    return base;
}

TSamples collect_samples(const site::Website& site, const sim::BrowsingContext& context,
                         int samples_per_page, QueryBudget& budget,
                         const sim::EncoderParams& params, std::uint64_t seed,
                         const std::vector<ProfilingVariant>& variants) {
    if (site.pages.empty())
        throw std::invalid_argument("cannot profile an empty website");
    if (samples_per_page < 1)
        throw std::invalid_argument("samples_per_page must be >= 1");
    if (variants.empty())
        throw std::invalid_argument("at least one profiling variant is required");

    // Each page access is one query; reserve the whole campaign up front so a
    // shortfall aborts before any traffic is generated.
    std::int64_t demand = static_cast<std::int64_t>(site.pages.size()) * samples_per_page *
                          static_cast<std::int64_t>(variants.size());
    budget.require(demand);
    if (!budget.try_consume(demand))
        throw BudgetExceededError(demand, budget.remaining());

    TSamples samples;
    std::uint64_t session = 0;
    for (std::size_t vi = 0; vi < variants.size(); ++vi) {
        sim::BrowsingContext ctx = context;
        ctx.cache_enabled = variants[vi].cache_enabled;
        ctx.cookies_allowed = variants[vi].cookies_allowed;
        ctx.tab_count = 1;
        for (const site::Webpage& page : site.pages) {
            for (int s = 0; s < samples_per_page; ++s, ++session) {
                sim::SessionPlan plan;
                plan.tab_pages = {{page.id}};
                plan.interleaving_seed = 0;
                auto [trace, truth] =
                    sim::simulate_session(site, plan, ctx, params, mix_seed(seed, "profile", session));
                std::size_t t = 0;
                for (const sim::GroundTruthEntry& gt : truth.entries) {
                    if (!gt.downloaded)
                        continue; // cache-suppressed within the session
                    TSampleEntry entry;
                    entry.sub_trace = trace.sub_traces.at(t++);
                    entry.resource_id = gt.resource_id;
                    entry.page_id = gt.page_id;
                    entry.profiling_context = ctx;
                    samples.entries.push_back(std::move(entry));
                }
            }
        }
    }
    return samples;
}

FeatureDB build_signatures(const TSamples& samples, std::vector<std::string>* warnings) {
    FeatureDB db;
    for (const TSampleEntry& e : samples.entries) {
        if (e.sub_trace.truncated) {
            if (warnings)
                warnings->push_back("skipping truncated sample for resource " + e.resource_id);
            continue;
        }
        db.entries.emplace_back(e.resource_id, e.sub_trace.total_bytes());
    }
    return db;
}

ReverseFeatureDB construct_dictionary(const FeatureDB& db) {
    ReverseFeatureDB rev;
    for (const auto& [rid, sig] : db.entries)
        rev.index[sig].push_back(rid);
    for (auto& [_, ids] : rev.index)
        std::sort(ids.begin(), ids.end());
    return rev;
}

EncoderFit fit_encoder(const site::Website& site, const TSamples& samples,
                       const sim::EncoderParams& params) {
    // x = plaintext + response header, y = observed signature. Session-first
    // sub-traces of cookie-enabled variants carry the session cookie and would
    // bias the fit, so they are left out.
    std::vector<std::pair<double, double>> points;
    std::set<double> distinct_x;
    for (const TSampleEntry& e : samples.entries) {
        if (e.sub_trace.truncated)
            continue;
        if (e.profiling_context.cookies_allowed && e.sub_trace.first_byte_index == 0)
            continue;
        const site::Resource* res = site.find_resource(e.resource_id);
        if (!res)
            continue;
        double x = static_cast<double>(res->plaintext_size + params.response_header_base);
        double y = static_cast<double>(e.sub_trace.total_bytes());
        points.emplace_back(x, y);
        distinct_x.insert(x);
    }
    if (distinct_x.size() < 2)
        throw std::invalid_argument("encoder fit needs samples of at least two distinct sizes");

    long double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [x, y] : points) {
        sx += x;
        sy += y;
        sxx += static_cast<long double>(x) * x;
        sxy += static_cast<long double>(x) * y;
    }
    long double n = static_cast<long double>(points.size());
    long double denom = n * sxx - sx * sx;
    EncoderFit fit;
    fit.slope = static_cast<double>((n * sxy - sx * sy) / denom);
    fit.intercept = static_cast<double>((sy - fit.slope * sx) / n);
    fit.pair_count = points.size();
    return fit;
}

CookieVarTable compute_cookie_var(const site::Website& site, const EncoderFit& fit,
                                  const sim::EncoderParams& params) {
    CookieVarTable table;

    // Predecessor URLs per page: pages from which a user can navigate here.
    std::map<std::string, std::set<std::string>> pred_urls;
    for (const auto& [u, v] : site.edges)
        pred_urls[v].insert(site.page_at(u).url);

    std::vector<std::pair<std::string, std::uint64_t>> cs_template;
    for (const auto& [_, bo] : params.user_agent_strings) {
        double delta = fit.slope * static_cast<double>(params.session_cookie_base + bo.size());
        cs_template.emplace_back(bo, static_cast<std::uint64_t>(std::llround(delta)));
    }
    std::sort(cs_template.begin(), cs_template.end());

    for (const site::Resource& res : site.resources) {
        CookieVarEntry entry;
        entry.c_s = cs_template;
        if (res.carries_tracking_cookie) {
            std::set<std::string> urls;
            for (const std::string& page_id : site.pages_of(res.id))
                for (const std::string& url : pred_urls[page_id])
                    urls.insert(url);
            std::vector<std::pair<std::string, std::uint64_t>> ct;
            for (const std::string& url : urls)
                ct.emplace_back(url, static_cast<std::uint64_t>(std::llround(
                                         fit.slope * static_cast<double>(url.size()))));
            entry.c_t = std::move(ct);
        }
        table.by_resource[res.id] = std::move(entry);
    }
    return table;
}

SnoopyDatabase profile_website(const site::Website& site, const sim::BrowsingContext& context,
                               int samples_per_page, QueryBudget& budget,
                               const sim::EncoderParams& params, std::uint64_t seed,
                               const std::vector<ProfilingVariant>& variants) {
    site.validate();
    TSamples samples = collect_samples(site, context, samples_per_page, budget, params, seed, variants);

    SnoopyDatabase db;
    db.website = site;
    db.feature_db = build_signatures(samples);
    db.reverse_db = construct_dictionary(db.feature_db);
    db.encoder_fit = fit_encoder(site, samples, params);
    db.cookie_var = compute_cookie_var(site, db.encoder_fit, params);
    db.profiling_context = context;
    db.profiling_variants = variants;
    db.protocol.record_overhead = params.record_overhead;
    db.protocol.response_header_base = params.response_header_base;
    db.protocol.os_record_payload = params.os_record_payload;
    db.protocol.user_agent_strings = params.user_agent_strings;
    db.consumed_queries = budget.consumed();
    return db;
}

} // namespace snoopy::prof
