#include "snoopy/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "snoopy/rng.hpp"

namespace snoopy::eval {

namespace {

double pct(std::uint64_t part, std::uint64_t whole) {
    return whole == 0 ? 0.0 : 100.0 * static_cast<double>(part) / static_cast<double>(whole);
}

} // namespace

double WebpageBreakdown::accurately_identified_pct() const {
    return pct(accurately_identified, accessed);
}
double WebpageBreakdown::wrongly_identified_pct() const { return pct(wrongly_identified, accessed); }
double WebpageBreakdown::not_identified_pct() const { return pct(not_identified, accessed); }

double ResourceBreakdown::accurate_pct() const { return pct(accurate, total); }
double ResourceBreakdown::incomplete_pct() const { return pct(incomplete, total); }
double ResourceBreakdown::conflict_pct() const { return pct(conflict, total); }

bool CellKey::operator<(const CellKey& other) const {
    return std::tie(os, browser, cache_enabled, cookies_allowed, tab_count, network.delay_min_ms,
                    network.delay_max_ms, network.drop_probability, network.retransmit) <
           std::tie(other.os, other.browser, other.cache_enabled, other.cookies_allowed,
                    other.tab_count, other.network.delay_min_ms, other.network.delay_max_ms,
                    other.network.drop_probability, other.network.retransmit);
}

std::string CellKey::label() const {
    std::ostringstream out;
    out << os << "/" << browser << " cache=" << (cache_enabled ? "on" : "off")
        << " cookies=" << (cookies_allowed ? "on" : "off") << " tabs=" << tab_count << " net="
        << network.delay_min_ms << "-" << network.delay_max_ms << "ms,p=" << network.drop_probability
        << (network.retransmit ? ",rtx" : ",nortx");
    return out.str();
}

namespace {

void accumulate_session(const pred::PredictionResult& result, const sim::GroundTruth& truth,
                        WebpageBreakdown& web, ResourceBreakdown& res) {
    const std::set<std::string>& accessed = truth.session_pages;
    const std::set<std::string>& predicted = result.predicted_webpages;

    std::uint64_t hit = 0;
    for (const std::string& p : predicted)
        if (accessed.count(p))
            ++hit;
    std::uint64_t spurious = predicted.size() - hit;   // predicted but never accessed
    std::uint64_t missed = accessed.size() - hit;      // accessed but never predicted
    std::uint64_t wrong = std::min(spurious, missed);  // substitutions pair up

    web.accessed += accessed.size();
    web.accurately_identified += hit;
    web.wrongly_identified += wrong;
    web.not_identified += missed - wrong;

    std::vector<const sim::GroundTruthEntry*> downloads;
    for (const sim::GroundTruthEntry& e : truth.entries)
        if (e.downloaded)
            downloads.push_back(&e);
    if (downloads.size() != result.predicted_resources.size())
        throw std::invalid_argument("prediction does not align with ground truth downloads");

    for (std::size_t i = 0; i < downloads.size(); ++i) {
        const pred::ResolvedEntry& entry = result.predicted_resources[i];
        ++res.total;
        if (entry.status == pred::ResourceStatus::unidentified_incomplete)
            ++res.incomplete;
        else if (entry.status == pred::ResourceStatus::identified &&
                 entry.resource_id == downloads[i]->resource_id)
            ++res.accurate;
        else
            ++res.conflict; // unresolved or resolved to a different resource
    }
}

} // namespace

AccuracyReport fingerprinting_accuracy(const std::vector<pred::PredictionResult>& results,
                                       const std::vector<sim::GroundTruth>& truths) {
    if (results.size() != truths.size())
        throw std::invalid_argument("results and ground truths must be parallel lists");
    AccuracyReport report;
    for (std::size_t i = 0; i < results.size(); ++i)
        accumulate_session(results[i], truths[i], report.webpages, report.resources);
    report.fa_percent = report.webpages.accurately_identified_pct();
    return report;
}

AccuracyReport run_experiment(const ExperimentSpec& spec, const site::Website& website,
                              const sim::EncoderParams& params) {
    site::Website working = website;
    if (!spec.factors.page_subset.empty()) {
        std::set<std::string> subset(spec.factors.page_subset.begin(),
                                     spec.factors.page_subset.end());
        working = site::induced_subsite(website, subset);
    }

    std::uint64_t demand = static_cast<std::uint64_t>(working.pages.size()) *
                           static_cast<std::uint64_t>(spec.samples_per_page) *
                           spec.profiling_variants.size();
    prof::QueryBudget budget(
        static_cast<std::int64_t>(spec.budget == 0 ? demand : spec.budget));
    prof::SnoopyDatabase db =
        prof::profile_website(working, spec.profiling_context, spec.samples_per_page, budget,
                              params, mix_seed(spec.seed, "profile-campaign"),
                              spec.profiling_variants);

    AccuracyReport report;
    report.consumed_queries = db.consumed_queries;

    std::uint64_t cell_index = 0;
    for (const auto& [cache, cookies] : spec.factors.browsing_configs) {
        for (int tabs : spec.factors.tab_counts) {
            for (const std::string& os : spec.factors.os_list) {
                for (const std::string& browser : spec.factors.browser_list) {
                    for (const sim::NetworkProfile& net : spec.factors.network_profiles) {
                        CellResult cell;
                        cell.key = CellKey{os, browser, cache, cookies, tabs, net};
                        const std::uint64_t base = cell_index++ * 1000003ULL;
                        try {
                            sim::BrowsingContext ctx = sim::make_context(
                                os, browser, params, cache, cookies, tabs, net);
                            pred::ContextHints hints;
                            // The browser/OS estimate doubles as a cookie
                            // assumption, so it is only offered for cells
                            // where cookies can actually appear.
                            if (spec.provide_bo_hint && cookies)
                                hints.bo_hint = std::make_pair(os, browser);
                            if (spec.provide_cache_hint)
                                hints.cache_assumed = cache;

                            std::vector<pred::PredictionResult> results;
                            std::vector<sim::GroundTruth> truths;
                            for (std::uint32_t k = 0; k < spec.sessions_per_cell; ++k) {
                                const std::uint64_t n = base + k;
                                sim::SessionPlan plan = sim::sample_session_plan(
                                    working, tabs, spec.pages_per_session,
                                    mix_seed(spec.seed, "plan", n));
                                auto [trace, truth] = sim::simulate_session(
                                    working, plan, ctx, params, mix_seed(spec.seed, "sim", n));
                                trace = sim::perturb_network(trace, net,
                                                             mix_seed(spec.seed, "net", n));
                                results.push_back(pred::predict(trace, db, hints));
                                truths.push_back(std::move(truth));
                            }
                            AccuracyReport cell_report = fingerprinting_accuracy(results, truths);
                            cell.sessions = spec.sessions_per_cell;
                            cell.fa_percent = cell_report.fa_percent;
                            cell.webpages = cell_report.webpages;
                            cell.resources = cell_report.resources;
                        } catch (const std::invalid_argument& e) {
                            cell.note = std::string("skipped: ") + e.what();
                        }
                        report.cells.push_back(std::move(cell));
                    }
                }
            }
        }
    }

    for (const CellResult& cell : report.cells) {
        report.webpages.accessed += cell.webpages.accessed;
        report.webpages.accurately_identified += cell.webpages.accurately_identified;
        report.webpages.wrongly_identified += cell.webpages.wrongly_identified;
        report.webpages.not_identified += cell.webpages.not_identified;
        report.resources.total += cell.resources.total;
        report.resources.accurate += cell.resources.accurate;
        report.resources.incomplete += cell.resources.incomplete;
        report.resources.conflict += cell.resources.conflict;
    }
    report.fa_percent = report.webpages.accurately_identified_pct();
    return report;
}

const char* feature_name(Feature f) {
    switch (f) {
    case Feature::resource_size:
        return "resource_size";
    case Feature::burst_pattern:
        return "burst_pattern";
    case Feature::rtdt:
        return "rtdt";
    }
    return "unknown";
}

namespace {

double coefficient_of_variation(const std::vector<double>& values) {
    if (values.size() < 2)
        return 0.0;
    double mean = 0.0;
    for (double v : values)
        mean += v;
    mean /= static_cast<double>(values.size());
    if (mean == 0.0)
        return 0.0;
    double var = 0.0;
    for (double v : values)
        var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    return std::sqrt(var) / std::fabs(mean);
}

} // namespace

StabilityTable assess_feature_stability(const site::Website& website,
                                        const std::vector<sim::BrowsingContext>& contexts,
                                        Feature feature, const sim::EncoderParams& params,
                                        std::uint64_t seed) {
    if (contexts.empty())
        throw std::invalid_argument("stability assessment needs at least one context");
    website.validate();

    StabilityTable table;
    table.feature = feature;

    // Per-context, per-resource feature value. Each page is browsed in its own
    // single-tab session so every resource is observed exactly once per page;
    // a shared resource takes its value from the first owning page in id order.
    std::vector<std::map<std::string, double>> per_context(contexts.size());
    for (std::size_t i = 0; i < contexts.size(); ++i) {
        sim::BrowsingContext ctx = contexts[i];
        ctx.tab_count = 1;
        for (std::size_t p = 0; p < website.pages.size(); ++p) {
            const std::uint64_t n = i * 100000ULL + p;
            sim::SessionPlan plan;
            plan.tab_pages = {{website.pages[p].id}};
            auto [trace, truth] =
                sim::simulate_session(website, plan, ctx, params, mix_seed(seed, "stab", n));

            Rng delays(mix_seed(seed, "delay", n));
            std::size_t t = 0;
            for (const sim::GroundTruthEntry& e : truth.entries) {
                if (!e.downloaded)
                    continue;
                const sim::SubTrace& st = trace.sub_traces.at(t++);
                double value = 0.0;
                switch (feature) {
                case Feature::resource_size:
                    value = static_cast<double>(st.total_bytes());
                    break;
                case Feature::burst_pattern:
                    value = static_cast<double>(t - 1); // order position in the session
                    break;
                case Feature::rtdt: {
                    double total = 0.0;
                    for (std::size_t r = 0; r < st.record_sizes.size(); ++r)
                        total += static_cast<double>(
                            delays.range(ctx.network.delay_min_ms, ctx.network.delay_max_ms));
                    value = total;
                    break;
                }
                }
                per_context[i].emplace(e.resource_id, value); // first owning page wins
            }
        }

        // One multi-tab session (one free start page per tab) for the signed
        // burst sequence: -1 marks a request, +n a burst of n response records.
        int tabs = std::max(1, std::min<int>(contexts[i].tab_count,
                                             static_cast<int>(website.pages.size())));
        sim::SessionPlan burst_plan;
        for (int tb = 0; tb < tabs; ++tb)
            burst_plan.tab_pages.push_back({website.pages[static_cast<std::size_t>(tb)].id});
        burst_plan.interleaving_seed = mix_seed(seed, "burst", i);
        auto [burst_trace, burst_truth] = sim::simulate_session(
            website, burst_plan, contexts[i], params, mix_seed(seed, "burst-sim", i));
        std::vector<std::int64_t> sequence;
        for (const sim::SubTrace& st : burst_trace.sub_traces) {
            sequence.push_back(-1);
            sequence.push_back(static_cast<std::int64_t>(st.record_sizes.size()));
        }
        table.burst_sequences.push_back(std::move(sequence));
    }

    for (const site::Resource& res : website.resources) {
        std::vector<double> values;
        for (const auto& ctx_values : per_context) {
            auto it = ctx_values.find(res.id);
            if (it == ctx_values.end())
                break;
            values.push_back(it->second);
        }
        if (values.size() != contexts.size())
            continue; // not observed everywhere; incomparable
        StabilityEntry entry;
        entry.resource_id = res.id;
        entry.cv = coefficient_of_variation(values);
        entry.values = std::move(values);
        table.rows.push_back(std::move(entry));
    }
    return table;
}

std::vector<double> NearestCentroidClassifier::features(const sim::EncryptedTrace& trace) {
    std::vector<double> out;
    double total = 0.0;
    std::vector<double> sizes;
    for (const sim::SubTrace& st : trace.sub_traces) {
        double bytes = static_cast<double>(st.total_bytes());
        total += bytes;
        sizes.push_back(bytes);
    }
    std::sort(sizes.rbegin(), sizes.rend());
    sizes.resize(5, 0.0);
    out.push_back(total);
    out.push_back(static_cast<double>(trace.sub_traces.size()));
    out.insert(out.end(), sizes.begin(), sizes.end());
    return out;
}

void NearestCentroidClassifier::train(const std::vector<LabeledTrace>& samples) {
    if (samples.empty())
        throw std::invalid_argument("cannot train on an empty sample set");
    std::map<std::string, std::pair<std::vector<double>, std::size_t>> sums;
    for (const LabeledTrace& s : samples) {
        std::vector<double> f = features(s.trace);
        auto& [sum, count] = sums[s.page_id];
        if (sum.empty())
            sum.assign(f.size(), 0.0);
        for (std::size_t i = 0; i < f.size(); ++i)
            sum[i] += f[i];
        ++count;
    }
    centroids_.clear();
    for (auto& [page, sc] : sums) {
        for (double& v : sc.first)
            v /= static_cast<double>(sc.second);
        centroids_[page] = std::move(sc.first);
    }
}

std::pair<std::string, double> NearestCentroidClassifier::predict(
    const sim::EncryptedTrace& trace) const {
    if (centroids_.empty())
        throw std::logic_error("classifier has not been trained");
    std::vector<double> f = features(trace);

    const double epsilon = 1e-9;
    std::string best_page;
    double best_dist = 0.0;
    double inv_sum = 0.0;
    double best_inv = 0.0;
    for (const auto& [page, centroid] : centroids_) {
        double d2 = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i)
            d2 += (f[i] - centroid[i]) * (f[i] - centroid[i]);
        double d = std::sqrt(d2);
        double inv = 1.0 / (d + epsilon);
        inv_sum += inv;
        if (best_page.empty() || d < best_dist) { // ties keep the first (smallest id)
            best_page = page;
            best_dist = d;
            best_inv = inv;
        }
    }
    return {best_page, best_inv / inv_sum};
}

double compute_validation_threshold(const Classifier& classifier,
                                    const std::vector<sim::EncryptedTrace>& validation_set) {
    if (validation_set.empty())
        throw std::invalid_argument("validation set is empty");
    double p_v = 1.0;
    for (const sim::EncryptedTrace& trace : validation_set)
        p_v = std::min(p_v, classifier.predict(trace).second);
    return p_v;
}

EnsembleDecision ensemble_predict(const sim::EncryptedTrace& trace,
                                  const prof::SnoopyDatabase& snoopy_db,
                                  const EnsembleConfig& config, const pred::ContextHints& hints) {
    if (!config.classifier)
        throw std::invalid_argument("ensemble requires a classifier");
    if (config.p_v < 0.0 || config.p_v > 1.0)
        throw std::invalid_argument("p_v must lie in [0, 1]");
    for (const std::string& page : config.ml_page_set)
        if (config.snoopy_page_set.count(page))
            throw std::invalid_argument("page sets must be disjoint: " + page);

    EnsembleDecision decision;
    try {
        auto [page, p_ml] = config.classifier->predict(trace);
        decision.p_ml = p_ml;
        if (p_ml >= config.p_v - config.margin) {
            decision.page_id = page;
            decision.used_classifier = true;
            return decision;
        }
    } catch (const std::exception& e) {
        decision.note = std::string("classifier failed: ") + e.what();
    }

    pred::PredictionResult result = pred::predict(trace, snoopy_db, hints);
    if (!result.extraction_order.empty())
        decision.page_id = result.extraction_order.front();
    return decision;
}

site::Website make_collision_variant(const site::Website& site, double fraction,
                                     std::uint64_t seed, std::set<std::string>* colliding_pages) {
    if (fraction < 0.0 || fraction > 1.0)
        throw std::invalid_argument("collision fraction must lie in [0, 1]");
    site::Website variant = site;
    if (colliding_pages)
        colliding_pages->clear();

    std::size_t quota = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(site.pages.size())));
    if (quota < 2)
        return variant;

    // Pages can only collide pairwise when their download sequences have the
    // same length; group by length and pair within groups.
    std::map<std::size_t, std::vector<std::string>> by_length;
    for (const site::Webpage& page : site.pages)
        by_length[page.download_sequence.size()].push_back(page.id);

    Rng rng(mix_seed(seed, "collide"));
    std::vector<std::pair<std::string, std::string>> pairs;
    std::size_t chosen = 0;
    for (auto& [_, ids] : by_length) {
        rng.shuffle(ids);
        for (std::size_t i = 0; i + 1 < ids.size() && chosen + 2 <= quota; i += 2) {
            pairs.emplace_back(ids[i], ids[i + 1]);
            chosen += 2;
        }
        if (chosen + 2 > quota)
            break;
    }

    for (const auto& [a_id, b_id] : pairs) {
        const site::Webpage& a = variant.page_at(a_id);
        const site::Webpage& b = variant.page_at(b_id);
        for (std::size_t j = 0; j < b.download_sequence.size(); ++j) {
            const std::string& b_res = b.download_sequence[j];
            if (variant.pages_of(b_res).size() != 1)
                continue; // shared resources keep their size
            const site::Resource& donor = variant.resource_at(a.download_sequence[j]);
            for (site::Resource& res : variant.resources)
                if (res.id == b_res) {
                    res.plaintext_size = donor.plaintext_size;
                    break;
                }
        }
        if (colliding_pages) {
            colliding_pages->insert(a_id);
            colliding_pages->insert(b_id);
        }
    }

    variant.finalize();
    variant.validate();
    return variant;
}

} // namespace snoopy::eval
