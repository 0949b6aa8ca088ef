#include "snoopy/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace snoopy::pred {

FValues split_trace(const sim::EncryptedTrace& trace) {
    FValues out;
    out.reserve(trace.sub_traces.size());
    for (std::size_t i = 0; i < trace.sub_traces.size(); ++i) {
        const sim::SubTrace& st = trace.sub_traces[i];
        out.push_back({i, st.total_bytes(), st.group_key, st.truncated});
    }
    return out;
}

std::uint64_t strip_record_overheads(std::uint64_t sig, std::uint32_t max_record_payload,
                                     std::uint32_t record_overhead) {
    // Invert payload -> payload + ceil(payload/mrp) * overhead by finding the
    // record count consistent with the total.
    if (record_overhead == 0)
        return sig;
    for (std::uint64_t k = 1; k * record_overhead < sig; ++k) {
        std::uint64_t payload = sig - k * record_overhead;
        if ((payload + max_record_payload - 1) / max_record_payload == k)
            return payload;
        if (payload <= max_record_payload && k > 1)
            break;
    }
    return sig > record_overhead ? sig - record_overhead : 1;
}

std::uint64_t apply_record_overheads(std::uint64_t payload, std::uint32_t max_record_payload,
                                     std::uint32_t record_overhead) {
    std::uint64_t records = (payload + max_record_payload - 1) / max_record_payload;
    if (records == 0)
        records = 1;
    return payload + records * record_overhead;
}

std::uint64_t lookup_slack(const prof::SnoopyDatabase& db) {
    std::uint64_t slack = db.cookie_var.max_cs();
    if (db.reverse_db.index.empty())
        return slack;
    std::uint32_t mrp_prof = db.profiling_context.max_record_payload;
    std::uint32_t oh = db.protocol.record_overhead;
    std::uint64_t max_payload =
        strip_record_overheads(db.reverse_db.index.rbegin()->first, mrp_prof, oh);
    std::uint32_t min_mrp = mrp_prof;
    for (const auto& [_, mrp] : db.protocol.os_record_payload)
        min_mrp = std::min(min_mrp, mrp);
    if (min_mrp > 0)
        slack += oh * (max_payload / min_mrp + 2);
    return slack;
}

std::vector<std::string> candidate_lookup(std::uint64_t f, const prof::SnoopyDatabase& db,
                                          std::uint64_t extra_slack) {
    std::uint64_t below = db.cookie_var.max_ct() + extra_slack;
    std::uint64_t lo = f > below ? f - below : 0;
    std::uint64_t hi = f + db.cookie_var.max_cs() + extra_slack;
    return db.reverse_db.lookup_range(lo, hi);
}

std::vector<std::string> prune_reachability(const std::vector<std::string>& candidates,
                                            const std::set<std::string>& visited,
                                            const prof::SnoopyDatabase& db) {
    if (visited.empty())
        return candidates;
    std::set<std::string> reachable = site::reachable_pages(db.website, visited);

    std::map<std::string, std::int64_t> freq;
    for (const std::string& r : candidates)
        ++freq[r];

    std::vector<std::string> out;
    for (const auto& [rid, count] : freq) {
        const std::vector<std::string>& pages = db.website.pages_of(rid);
        if (pages.empty())
            continue;
        std::int64_t on_reachable = 0;
        for (const std::string& p : pages)
            if (reachable.count(p))
                ++on_reachable;
        // Instances split evenly across the resource's pages, so the kept
        // frequency is the reachable share of the original.
        std::int64_t kept = count * on_reachable / static_cast<std::int64_t>(pages.size());
        for (std::int64_t i = 0; i < kept; ++i)
            out.push_back(rid);
    }
    return out;
}

std::uint64_t adjusted_signature(std::uint64_t sig, std::int64_t ct_delta, std::int64_t cs_delta,
                                 std::uint32_t profiled_payload, std::uint32_t observed_payload,
                                 std::uint32_t record_overhead) {
    std::int64_t payload =
        static_cast<std::int64_t>(strip_record_overheads(sig, profiled_payload, record_overhead)) -
        ct_delta + cs_delta;
    if (payload < 1)
        payload = 1;
    return apply_record_overheads(static_cast<std::uint64_t>(payload), observed_payload,
                                  record_overhead);
}

namespace {

// Smallest consolidated payload the encoder can emit (one plaintext byte).
std::int64_t minimal_encodable_payload(const prof::SnoopyDatabase& db) {
    double min_sig = db.encoder_fit.slope *
                         static_cast<double>(1 + db.protocol.response_header_base) +
                     db.encoder_fit.intercept;
    std::int64_t payload = std::llround(min_sig) - db.protocol.record_overhead;
    return std::max<std::int64_t>(payload, 1);
}

} // namespace

std::vector<CandidateScore> adjust_cookie_variation(const std::vector<std::string>& candidates,
                                                    std::uint64_t f, bool first_of_session,
                                                    const std::set<std::string>& visited,
                                                    const ContextHints& hints,
                                                    const prof::SnoopyDatabase& db,
                                                    StepDiagnostics* diag) {
    const std::uint32_t oh = db.protocol.record_overhead;
    const std::uint32_t mrp_prof = db.profiling_context.max_record_payload;

    // The bo hint fixes both the expected record-payload regime and the
    // session-cookie delta to apply; without it the profiling regime is kept
    // and cookie terms stay optional.
    std::uint32_t mrp_user = mrp_prof;
    std::string bo;
    bool bo_resolved = false;
    if (hints.bo_hint) {
        auto mrp_it = db.protocol.os_record_payload.find(hints.bo_hint->first);
        if (mrp_it != db.protocol.os_record_payload.end())
            mrp_user = mrp_it->second;
        auto ua_it = db.protocol.user_agent_strings.find(*hints.bo_hint);
        if (ua_it != db.protocol.user_agent_strings.end()) {
            bo = ua_it->second;
            bo_resolved = true;
        }
    }
    const bool cookies_assumed = hints.bo_hint.has_value();

    std::set<std::string> visited_urls;
    for (const std::string& p : visited)
        if (const site::Webpage* page = db.website.find_page(p))
            visited_urls.insert(page->url);

    std::map<std::string, std::uint64_t> base = db.base_signatures();
    const std::int64_t p_min = minimal_encodable_payload(db);

    std::map<std::string, std::int64_t> freq;
    for (const std::string& r : candidates)
        ++freq[r];

    std::vector<CandidateScore> out;
    for (const auto& [rid, count] : freq) {
        auto base_it = base.find(rid);
        if (base_it == base.end())
            continue;
        const std::uint64_t sig = base_it->second;
        const std::int64_t base_payload =
            static_cast<std::int64_t>(strip_record_overheads(sig, mrp_prof, oh));

        const prof::CookieVarEntry* cookie = db.cookie_var.find(rid);

        // Session-cookie options: a first-of-session transfer under a known
        // browser/OS may carry c_s, but the cookie-free reading stays open.
        std::vector<std::int64_t> cs_options{0};
        if (first_of_session && bo_resolved && cookie)
            for (const auto& [key, delta] : cookie->c_s)
                if (key == bo) {
                    cs_options.push_back(static_cast<std::int64_t>(delta));
                    break;
                }

        // Tracking-cookie options: one per predecessor URL consistent with
        // the visited pages. When cookies are assumed on and a predecessor is
        // known, the cookie is mandatory for a carrier; otherwise the
        // cookie-free interpretation stays available.
        std::vector<std::int64_t> ct_options;
        bool mandatory_ct = false;
        const bool carrier = cookie && cookie->c_t.has_value();
        if (carrier && !first_of_session) {
            for (const auto& [url, delta] : *cookie->c_t)
                if (visited_urls.count(url))
                    ct_options.push_back(static_cast<std::int64_t>(delta));
            if (ct_options.empty() || !cookies_assumed)
                ct_options.push_back(0);
            else
                mandatory_ct = true;
        } else {
            ct_options.push_back(0);
        }
        std::sort(ct_options.begin(), ct_options.end());

        // A mandatory cookie bounds the observation from below: f cannot be
        // smaller than the candidate's smallest cookie-inclusive encoding.
        if (mandatory_ct) {
            std::int64_t min_ct = *std::min_element(ct_options.begin(), ct_options.end());
            std::uint64_t min_possible = apply_record_overheads(
                static_cast<std::uint64_t>(base_payload + min_ct), mrp_user, oh);
            if (f < min_possible) {
                if (diag)
                    diag->eliminated.push_back(rid);
                continue;
            }
        }

        bool any_admissible = false;
        std::uint64_t best_adjusted = 0;
        std::uint64_t best_dist = 0;
        for (std::int64_t cs_delta : cs_options) {
            for (std::int64_t ct : ct_options) {
                // Profiled baselines are cookie-free (isolated single-page
                // collection), so a victim transfer carries the deltas on top.
                std::int64_t payload = base_payload + ct + cs_delta;
                if (payload < p_min)
                    continue; // below the minimal encodable size
                std::uint64_t adjusted =
                    apply_record_overheads(static_cast<std::uint64_t>(payload), mrp_user, oh);
                std::uint64_t dist = adjusted > f ? adjusted - f : f - adjusted;
                if (!any_admissible || dist < best_dist) {
                    any_admissible = true;
                    best_adjusted = adjusted;
                    best_dist = dist;
                }
            }
        }
        if (!any_admissible) {
            if (diag)
                diag->eliminated.push_back(rid);
            continue;
        }

        CandidateScore score;
        score.resource_id = rid;
        score.freq = count;
        score.adjusted_sig = best_adjusted;
        score.diff = static_cast<std::int64_t>(best_adjusted) - static_cast<std::int64_t>(f);
        score.exact = score.diff == 0;
        out.push_back(std::move(score));
    }
    if (diag)
        diag->scored = out;
    return out;
}

std::optional<std::string> select_resource(const std::vector<CandidateScore>& scored) {
    const CandidateScore* best = nullptr;
    for (const CandidateScore& c : scored) {
        if (!best) {
            best = &c;
            continue;
        }
        bool better = false;
        if (c.exact != best->exact) {
            better = c.exact; // exact matches outrank all weighted candidates
        } else if (c.exact) {
            better = c.freq > best->freq ||
                     (c.freq == best->freq && c.resource_id < best->resource_id);
        } else {
            // Compare freq/|diff| without division: a/|da| > b/|db|.
            std::int64_t da = std::abs(c.diff), db_ = std::abs(best->diff);
            std::int64_t lhs = c.freq * db_, rhs = best->freq * da;
            if (lhs != rhs)
                better = lhs > rhs;
            else if (da != db_)
                better = da < db_;
            else
                better = c.resource_id < best->resource_id;
        }
        if (better)
            best = &c;
    }
    if (!best)
        return std::nullopt;
    return best->resource_id;
}

std::vector<ResolvedEntry> predict_resources(const sim::EncryptedTrace& trace,
                                             const prof::SnoopyDatabase& db,
                                             const ContextHints& hints,
                                             std::vector<StepDiagnostics>* diagnostics) {
    FValues values = split_trace(trace);
    std::vector<ResolvedEntry> out;
    std::set<std::string> visited;
    const std::uint64_t slack = lookup_slack(db);

    // First resources of pages: the only places a fresh browser tab can start.
    std::set<std::string> page_heads;
    for (const site::Webpage& page : db.website.pages)
        page_heads.insert(page.download_sequence.front());

    for (const FValue& v : values) {
        ResolvedEntry entry;
        entry.index = v.index;
        StepDiagnostics diag;

        if (v.truncated) {
            entry.status = ResourceStatus::unidentified_incomplete;
        } else {
            std::vector<std::string> relevant = candidate_lookup(v.f, db, slack);
            diag.relevant = relevant;
            std::vector<std::string> reachable = prune_reachability(relevant, visited, db);
            diag.reachable = reachable;
            std::vector<CandidateScore> scored = adjust_cookie_variation(
                reachable, v.f, v.index == 0, visited, hints, db, &diag);
            std::optional<std::string> chosen = select_resource(scored);

            // A user can open a new tab on any page at any point, which the
            // link-following model above cannot see. When the reachable set
            // offers no exact explanation, candidates that head a page are
            // reconsidered: an exact match there marks a fresh tab start.
            bool tab_start = false;
            bool chosen_exact = false;
            for (const CandidateScore& c : scored)
                if (chosen && c.resource_id == *chosen)
                    chosen_exact = c.exact;
            if (!chosen || !chosen_exact) {
                std::vector<std::string> heads;
                for (const std::string& rid : relevant)
                    if (page_heads.count(rid))
                        heads.push_back(rid);
                std::vector<CandidateScore> head_scored =
                    adjust_cookie_variation(heads, v.f, v.index == 0, {}, hints, db, nullptr);
                std::optional<std::string> head_choice = select_resource(head_scored);
                bool head_exact = false;
                for (const CandidateScore& c : head_scored)
                    if (head_choice && c.resource_id == *head_choice)
                        head_exact = c.exact;
                if (head_choice && (head_exact || !chosen)) {
                    chosen = head_choice;
                    tab_start = true;
                }
            }

            if (!chosen) {
                entry.status = ResourceStatus::unidentified_conflict;
            } else {
                entry.status = ResourceStatus::identified;
                entry.resource_id = *chosen;
                // Ambiguous resources contribute every consistent owning
                // page; this keeps later pruning sound at the cost of
                // looseness. A tab start admits the started page itself.
                std::set<std::string> reach_now = site::reachable_pages(db.website, visited);
                for (const std::string& p : db.website.pages_of(*chosen)) {
                    if (reach_now.count(p))
                        visited.insert(p);
                    else if (tab_start &&
                             db.website.page_at(p).download_sequence.front() == *chosen)
                        visited.insert(p);
                }
            }
        }
        out.push_back(entry);
        if (diagnostics)
            diagnostics->push_back(std::move(diag));
    }
    return out;
}

std::set<std::string> extract_webpages(const std::vector<ResolvedEntry>& predicted,
                                       const prof::SnoopyDatabase& db, const ContextHints& hints,
                                       std::vector<std::string>* order,
                                       std::size_t* unmatched_heads) {
    const bool cache_assumed = hints.cache_assumed.value_or(false);

    std::vector<std::pair<std::size_t, std::string>> ids; // (original index, resource)
    for (const ResolvedEntry& e : predicted)
        if (e.status == ResourceStatus::identified)
            ids.emplace_back(e.index, e.resource_id);

    std::vector<bool> consumed(ids.size(), false);
    std::set<std::string> cacheable_extracted;
    std::set<std::string> result;
    std::size_t unmatched = 0;

    // Greedy earliest-position subsequence match of a page's download
    // sequence, starting at the head position. Returns matched positions or
    // an empty vector on failure.
    auto try_match = [&](const site::Webpage& page, std::size_t head) {
        std::vector<std::size_t> matched;
        std::size_t cursor = head;
        for (const std::string& want : page.download_sequence) {
            std::size_t found = ids.size();
            for (std::size_t p = cursor; p < ids.size(); ++p)
                if (!consumed[p] && ids[p].second == want) {
                    found = p;
                    break;
                }
            if (found != ids.size()) {
                matched.push_back(found);
                cursor = found + 1;
                continue;
            }
            const site::Resource* res = db.website.find_resource(want);
            if (cache_assumed && res && res->cacheable && cacheable_extracted.count(want))
                continue; // implicitly present from an earlier extraction
            return std::vector<std::size_t>{};
        }
        if (matched.empty() || matched.front() != head)
            return std::vector<std::size_t>{};
        return matched;
    };

    while (true) {
        std::size_t head = ids.size();
        for (std::size_t p = 0; p < ids.size(); ++p)
            if (!consumed[p]) {
                head = p;
                break;
            }
        if (head == ids.size())
            break;
        const std::string& rh = ids[head].second;

        std::vector<const site::Webpage*> starts, contains;
        for (const site::Webpage& page : db.website.pages) {
            if (page.download_sequence.front() == rh)
                starts.push_back(&page);
            else if (std::find(page.download_sequence.begin(), page.download_sequence.end(), rh) !=
                     page.download_sequence.end())
                contains.push_back(&page);
        }
        const std::vector<const site::Webpage*>& cands = starts.empty() ? contains : starts;

        const site::Webpage* best_page = nullptr;
        std::vector<std::size_t> best_match;
        for (const site::Webpage* page : cands) {
            std::vector<std::size_t> m = try_match(*page, head);
            if (m.empty())
                continue;
            std::size_t span = m.back() - m.front();
            if (!best_page || span < best_match.back() - best_match.front()) {
                best_page = page;
                best_match = std::move(m);
            }
            // ties keep the first candidate: pages iterate in id order
        }

        if (!best_page) {
            ++unmatched;
            consumed[head] = true;
            continue;
        }
        for (std::size_t p : best_match)
            consumed[p] = true;
        if (result.insert(best_page->id).second && order)
            order->push_back(best_page->id);
        for (const std::string& rid : best_page->download_sequence) {
            const site::Resource* res = db.website.find_resource(rid);
            if (res && res->cacheable)
                cacheable_extracted.insert(rid);
        }
    }

    if (unmatched_heads)
        *unmatched_heads = unmatched;
    return result;
}

PredictionResult predict(const sim::EncryptedTrace& trace, const prof::SnoopyDatabase& db,
                         const ContextHints& hints) {
    PredictionResult result;
    result.predicted_resources = predict_resources(trace, db, hints, &result.diagnostics);
    result.predicted_webpages = extract_webpages(result.predicted_resources, db, hints,
                                                 &result.extraction_order, &result.unmatched_heads);
    return result;
}

} // namespace snoopy::pred
