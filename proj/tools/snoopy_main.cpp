// Command-line front end: generate-site, ingest, simulate, profile, predict,
// evaluate, ensemble, stability. Every stochastic subcommand takes an explicit
// --seed so repeated runs are byte-identical.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "snoopy/errors.hpp"
#include "snoopy/eval.hpp"
#include "snoopy/predictor.hpp"
#include "snoopy/profiler.hpp"
#include "snoopy/rng.hpp"
#include "snoopy/serialize.hpp"
#include "snoopy/site_model.hpp"
#include "snoopy/traffic_sim.hpp"

namespace {

using namespace snoopy;

int log_level = 1; // 0 debug, 1 info, 2 warn, 3 error

void log_info(const std::string& msg) {
    if (log_level <= 1)
        std::cerr << "info: " << msg << "\n";
}

void log_warn(const std::string& msg) {
    if (log_level <= 2)
        std::cerr << "warn: " << msg << "\n";
}

std::pair<std::string, std::string> parse_os_browser(const std::string& text) {
    std::size_t colon = text.find(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == text.size())
        throw std::invalid_argument("expected os:browser, got '" + text + "'");
    return {text.substr(0, colon), text.substr(colon + 1)};
}

struct EncoderOverrides {
    std::uint32_t record_overhead = 0;
    std::uint32_t response_header_base = 0;
    std::uint32_t session_cookie_base = 0;
    double expansion_a = 0.0;
    bool has_record_overhead = false, has_header = false, has_cookie = false, has_a = false;

    sim::EncoderParams apply() const {
        sim::EncoderParams params = sim::default_encoder_params();
        if (has_record_overhead)
            params.record_overhead = record_overhead;
        if (has_header)
            params.response_header_base = response_header_base;
        if (has_cookie)
            params.session_cookie_base = session_cookie_base;
        if (has_a)
            params.expansion_a = expansion_a;
        return params;
    }
};

void add_encoder_flags(CLI::App* cmd, EncoderOverrides& ov) {
    cmd->add_option("--record-overhead", ov.record_overhead, "Per-record framing overhead bytes")
        ->each([&](const std::string&) { ov.has_record_overhead = true; });
    cmd->add_option("--header-base", ov.response_header_base, "Response header size in bytes")
        ->each([&](const std::string&) { ov.has_header = true; });
    cmd->add_option("--session-cookie-base", ov.session_cookie_base,
                    "Fixed part of the session cookie size")
        ->each([&](const std::string&) { ov.has_cookie = true; });
    cmd->add_option("--expansion-a", ov.expansion_a, "Multiplicative ciphertext expansion")
        ->each([&](const std::string&) { ov.has_a = true; });
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Webpage fingerprinting framework: profiling, prediction and evaluation "
                 "over a deterministic browsing-traffic simulator"};
    app.require_subcommand(1);

    std::string log_level_name = "info";
    if (const char* env = std::getenv("SNOOPY_LOG"))
        log_level_name = env;
    app.add_option("--log-level", log_level_name, "debug|info|warn|error");

    // generate-site ---------------------------------------------------------
    auto* gen = app.add_subcommand("generate-site", "Emit a deterministic synthetic website");
    site::SiteSpec site_spec;
    site_spec.page_count = 20;
    site_spec.resources_per_page_min = 3;
    site_spec.resources_per_page_max = 6;
    site_spec.size_distribution.kind = site::SizeDistribution::Kind::distinct_uniform;
    site_spec.size_distribution.min_bytes = 300;
    site_spec.size_distribution.max_bytes = 15000;
    site_spec.edge_density = 0.3;
    site_spec.cacheable_fraction = 0.5;
    std::string gen_out, gen_corpus_out, gen_distribution = "distinct_uniform";
    gen->add_option("--pages", site_spec.page_count, "Number of pages");
    gen->add_option("--resources-min", site_spec.resources_per_page_min, "Min resources per page");
    gen->add_option("--resources-max", site_spec.resources_per_page_max, "Max resources per page");
    gen->add_option("--shared-fraction", site_spec.shared_resource_fraction,
                    "Fraction of resources shared between two pages");
    gen->add_option("--size-min", site_spec.size_distribution.min_bytes, "Min resource bytes");
    gen->add_option("--size-max", site_spec.size_distribution.max_bytes, "Max resource bytes");
    gen->add_option("--size-distribution", gen_distribution, "uniform|distinct_uniform");
    gen->add_option("--edge-density", site_spec.edge_density, "Hyperlink density");
    gen->add_option("--cacheable-fraction", site_spec.cacheable_fraction,
                    "Fraction of cacheable embedded resources");
    gen->add_option("--tracking-fraction", site_spec.tracking_cookie_fraction,
                    "Fraction of root documents carrying tracking cookies");
    gen->add_option("--seed", site_spec.rng_seed, "Generator seed")->required();
    gen->add_option("--out", gen_out, "Website document path")->required();
    gen->add_option("--corpus-out", gen_corpus_out, "Also write a document corpus here");

    // ingest ----------------------------------------------------------------
    auto* ingest = app.add_subcommand("ingest", "Build a website model from a document corpus");
    std::string ingest_corpus, ingest_base_url = "https://site.example", ingest_out;
    ingest->add_option("--corpus", ingest_corpus, "Corpus root directory")->required();
    ingest->add_option("--base-url", ingest_base_url, "Base URL for page addresses");
    ingest->add_option("--out", ingest_out, "Website document path")->required();

    // simulate --------------------------------------------------------------
    auto* simulate = app.add_subcommand("simulate", "Simulate victim browsing sessions");
    std::string sim_site, sim_out, sim_context = "os_a:browser_a";
    std::uint64_t sim_seed = 0;
    int sim_sessions = 10, sim_tabs = 1, sim_pages = 3;
    bool sim_cache = false, sim_cookies = false, sim_blind = false, sim_no_retransmit = false;
    sim::NetworkProfile sim_net;
    EncoderOverrides sim_encoder;
    simulate->add_option("--site", sim_site, "Website document")->required();
    simulate->add_option("--context", sim_context, "os:browser of the victim");
    simulate->add_option("--sessions", sim_sessions, "Number of sessions");
    simulate->add_option("--tabs", sim_tabs, "Concurrent tabs");
    simulate->add_option("--pages-per-session", sim_pages, "Pages visited per session");
    simulate->add_flag("--cache", sim_cache, "Enable the browser cache");
    simulate->add_flag("--cookies", sim_cookies, "Allow cookies");
    simulate->add_option("--delay-min", sim_net.delay_min_ms, "Min per-record delay (ms)");
    simulate->add_option("--delay-max", sim_net.delay_max_ms, "Max per-record delay (ms)");
    simulate->add_option("--drop-probability", sim_net.drop_probability,
                         "Per-record drop probability");
    simulate->add_flag("--no-retransmit", sim_no_retransmit, "Lost records stay lost");
    simulate->add_flag("--blind", sim_blind, "Strip ground truth from the output");
    simulate->add_option("--seed", sim_seed, "Session seed")->required();
    simulate->add_option("--out", sim_out, "Trace file path")->required();
    add_encoder_flags(simulate, sim_encoder);

    // profile ---------------------------------------------------------------
    auto* profile = app.add_subcommand("profile", "Profile a website within a query budget");
    std::string prof_site, prof_out, prof_context = "os_a:browser_a";
    int prof_samples = 3;
    std::int64_t prof_budget = 0;
    std::uint64_t prof_seed = 0;
    EncoderOverrides prof_encoder;
    profile->add_option("--site", prof_site, "Website document")->required();
    profile->add_option("--context", prof_context, "os:browser used while profiling");
    profile->add_option("--samples-per-page", prof_samples, "Samples per page per variant");
    profile->add_option("--budget", prof_budget, "Max page accesses")->required();
    profile->add_option("--seed", prof_seed, "Profiling seed")->required();
    profile->add_option("--out", prof_out, "Database document path")->required();
    add_encoder_flags(profile, prof_encoder);

    // predict ---------------------------------------------------------------
    auto* predict = app.add_subcommand("predict", "Predict resources and pages from traces");
    std::string pred_db, pred_traces, pred_out, pred_bo_hint, pred_cache_assumed;
    predict->add_option("--db", pred_db, "Database document")->required();
    predict->add_option("--traces", pred_traces, "Trace file")->required();
    predict->add_option("--bo-hint", pred_bo_hint,
                        "os:browser estimate, or 'auto' to take each trace's embedded hint");
    predict->add_option("--cache-assumed", pred_cache_assumed, "on|off (absent: unknown)");
    predict->add_option("--out", pred_out, "Prediction file path")->required();

    // evaluate --------------------------------------------------------------
    auto* evaluate = app.add_subcommand("evaluate", "Run an experiment grid and report accuracy");
    std::string eval_site, eval_spec, eval_out;
    EncoderOverrides eval_encoder;
    evaluate->add_option("--site", eval_site, "Website document")->required();
    evaluate->add_option("--spec", eval_spec, "Experiment spec document")->required();
    evaluate->add_option("--out", eval_out, "CSV report path")->required();
    add_encoder_flags(evaluate, eval_encoder);

    // ensemble --------------------------------------------------------------
    auto* ensemble = app.add_subcommand(
        "ensemble", "Two-step classifier + signature prediction on a collision-heavy site");
    std::string ens_site, ens_out;
    std::uint64_t ens_seed = 0;
    int ens_samples = 3, ens_sessions = 50;
    double ens_collision_fraction = 0.3, ens_margin = 0.10;
    ensemble->add_option("--site", ens_site, "Website document")->required();
    ensemble->add_option("--collision-fraction", ens_collision_fraction,
                         "Fraction of pages made size-colliding");
    ensemble->add_option("--samples-per-page", ens_samples, "Profiling samples per page");
    ensemble->add_option("--sessions", ens_sessions, "Test sessions");
    ensemble->add_option("--margin", ens_margin, "Gate margin below p_v");
    ensemble->add_option("--seed", ens_seed, "Experiment seed")->required();
    ensemble->add_option("--out", ens_out, "Report path")->required();

    // stability -------------------------------------------------------------
    auto* stability = app.add_subcommand("stability", "Feature stability across contexts");
    std::string stab_site, stab_out, stab_feature = "resource_size";
    std::vector<int> stab_delays{0, 25};
    int stab_tabs = 1, stab_repeats = 1;
    std::uint64_t stab_seed = 0;
    stability->add_option("--site", stab_site, "Website document")->required();
    stability->add_option("--feature", stab_feature, "resource_size|burst_pattern|rtdt");
    stability->add_option("--delay-max", stab_delays, "One context per max delay (ms)");
    stability->add_option("--tabs", stab_tabs, "Tabs per context");
    stability->add_option("--repeats", stab_repeats, "Repetitions of each context");
    stability->add_option("--seed", stab_seed, "Simulation seed")->required();
    stability->add_option("--out", stab_out, "CSV output path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    if (log_level_name == "debug")
        log_level = 0;
    else if (log_level_name == "warn")
        log_level = 2;
    else if (log_level_name == "error")
        log_level = 3;

    try {
        if (gen->parsed()) {
            if (gen_distribution == "uniform")
                site_spec.size_distribution.kind = site::SizeDistribution::Kind::uniform;
            else if (gen_distribution != "distinct_uniform")
                throw std::invalid_argument("unknown size distribution '" + gen_distribution + "'");
            site::Website site = site::generate_synthetic_site(site_spec);
            io::save_website(site, gen_out);
            if (!gen_corpus_out.empty())
                site::write_site_corpus(site, gen_corpus_out);
            log_info("generated " + std::to_string(site.pages.size()) + " pages, " +
                     std::to_string(site.resources.size()) + " resources -> " + gen_out);
        } else if (ingest->parsed()) {
            std::vector<std::string> warnings;
            site::Website site = site::ingest_site(ingest_corpus, ingest_base_url, &warnings);
            for (const std::string& w : warnings)
                log_warn(w);
            io::save_website(site, ingest_out);
            log_info("ingested " + std::to_string(site.pages.size()) + " pages -> " + ingest_out);
        } else if (simulate->parsed()) {
            sim::EncoderParams params = sim_encoder.apply();
            site::Website site = io::load_website(sim_site);
            auto [os, browser] = parse_os_browser(sim_context);
            sim_net.retransmit = !sim_no_retransmit;
            sim::BrowsingContext ctx =
                sim::make_context(os, browser, params, sim_cache, sim_cookies, sim_tabs, sim_net);
            std::vector<io::SessionRecord> sessions;
            for (int k = 0; k < sim_sessions; ++k) {
                sim::SessionPlan plan = sim::sample_session_plan(
                    site, sim_tabs, sim_pages, mix_seed(sim_seed, "plan", k));
                auto [trace, truth] =
                    sim::simulate_session(site, plan, ctx, params, mix_seed(sim_seed, "sim", k));
                trace = sim::perturb_network(trace, sim_net, mix_seed(sim_seed, "net", k));
                sessions.push_back({ctx, std::move(trace), std::move(truth)});
            }
            io::save_traces(sessions, sim_out, sim_blind);
            log_info("simulated " + std::to_string(sessions.size()) + " sessions -> " + sim_out);
        } else if (profile->parsed()) {
            sim::EncoderParams params = prof_encoder.apply();
            site::Website site = io::load_website(prof_site);
            auto [os, browser] = parse_os_browser(prof_context);
            sim::BrowsingContext ctx = sim::make_context(os, browser, params, false, false, 1);
            prof::QueryBudget budget(prof_budget);
            prof::SnoopyDatabase db =
                prof::profile_website(site, ctx, prof_samples, budget, params, prof_seed);
            io::save_database(db, prof_out);
            log_info("profiled " + std::to_string(site.pages.size()) + " pages using " +
                     std::to_string(db.consumed_queries) + "/" + std::to_string(prof_budget) +
                     " queries -> " + prof_out);
        } else if (predict->parsed()) {
            prof::SnoopyDatabase db = io::load_database(pred_db);
            std::vector<io::SessionRecord> sessions = io::load_traces(pred_traces);
            pred::ContextHints base_hints;
            bool auto_hint = pred_bo_hint == "auto";
            if (!pred_bo_hint.empty() && !auto_hint)
                base_hints.bo_hint = parse_os_browser(pred_bo_hint);
            if (pred_cache_assumed == "on")
                base_hints.cache_assumed = true;
            else if (pred_cache_assumed == "off")
                base_hints.cache_assumed = false;
            else if (!pred_cache_assumed.empty())
                throw std::invalid_argument("--cache-assumed takes on or off");
            std::vector<pred::PredictionResult> results;
            for (const io::SessionRecord& s : sessions) {
                pred::ContextHints hints = base_hints;
                if (auto_hint && s.trace.context_hint)
                    hints.bo_hint = s.trace.context_hint;
                results.push_back(pred::predict(s.trace, db, hints));
            }
            io::save_predictions(results, pred_out);
            log_info("predicted " + std::to_string(results.size()) + " sessions -> " + pred_out);
        } else if (evaluate->parsed()) {
            sim::EncoderParams params = eval_encoder.apply();
            site::Website site = io::load_website(eval_site);
            eval::ExperimentSpec spec = io::load_experiment_spec(eval_spec);
            eval::AccuracyReport report = eval::run_experiment(spec, site, params);
            io::save_report_csv(report, eval_out);
            std::printf("FA %.2f over %zu cells (consumed %llu queries)\n", report.fa_percent,
                        report.cells.size(),
                        static_cast<unsigned long long>(report.consumed_queries));
        } else if (ensemble->parsed()) {
            sim::EncoderParams params = sim::default_encoder_params();
            site::Website base_site = io::load_website(ens_site);
            std::set<std::string> colliding;
            site::Website site = eval::make_collision_variant(
                base_site, ens_collision_fraction, ens_seed, &colliding);

            prof::QueryBudget budget(static_cast<std::int64_t>(site.pages.size()) * ens_samples *
                                     2);
            prof::SnoopyDatabase db =
                prof::profile_website(site, sim::make_context("os_a", "browser_a", params, false,
                                                              false, 1),
                                      ens_samples, budget, params,
                                      mix_seed(ens_seed, "ens-profile"));

            // The classifier trains on the colliding pages only; validation
            // reuses one held-out trace per trained page.
            eval::NearestCentroidClassifier classifier;
            std::vector<eval::LabeledTrace> training;
            std::vector<sim::EncryptedTrace> validation;
            sim::BrowsingContext victim =
                sim::make_context("os_a", "browser_a", params, false, false, 1);
            for (const std::string& page : colliding) {
                for (int k = 0; k < 3; ++k) {
                    sim::SessionPlan plan;
                    plan.tab_pages = {{page}};
                    auto [trace, truth] = sim::simulate_session(
                        site, plan, victim, params,
                        mix_seed(ens_seed, "ens-train", fnv1a64(page) + k));
                    if (k == 2)
                        validation.push_back(trace);
                    else
                        training.push_back({std::move(trace), page});
                }
            }
            eval::EnsembleConfig config;
            config.classifier = &classifier;
            config.margin = ens_margin;
            for (const site::Webpage& p : site.pages)
                if (!colliding.count(p.id))
                    config.snoopy_page_set.insert(p.id);
            config.ml_page_set = colliding;
            if (!training.empty()) {
                classifier.train(training);
                config.p_v = eval::compute_validation_threshold(classifier, validation);
            }

            int correct = 0;
            std::ostringstream lines;
            for (int k = 0; k < ens_sessions; ++k) {
                const site::Webpage& page =
                    site.pages[Rng(mix_seed(ens_seed, "ens-pick", k)).below(site.pages.size())];
                sim::SessionPlan plan;
                plan.tab_pages = {{page.id}};
                auto [trace, truth] = sim::simulate_session(site, plan, victim, params,
                                                            mix_seed(ens_seed, "ens-test", k));
                eval::EnsembleDecision decision = training.empty()
                                                      ? eval::EnsembleDecision{}
                                                      : eval::ensemble_predict(trace, db, config,
                                                                               {});
                if (training.empty()) {
                    pred::PredictionResult r = pred::predict(trace, db, {});
                    if (!r.extraction_order.empty())
                        decision.page_id = r.extraction_order.front();
                }
                bool hit = decision.page_id && *decision.page_id == page.id;
                correct += hit ? 1 : 0;
                lines << page.id << ',' << decision.page_id.value_or("-") << ','
                      << (decision.used_classifier ? "classifier" : "snoopy") << ','
                      << (hit ? 1 : 0) << '\n';
            }
            double fa = ens_sessions > 0 ? 100.0 * correct / ens_sessions : 0.0;
            std::ostringstream out;
            out << "p_v," << config.p_v << "\nmargin," << config.margin << "\ncolliding_pages,"
                << colliding.size() << "\nfa_percent," << fa
                << "\ntruth,predicted,route,correct\n"
                << lines.str();
            io::atomic_write(ens_out, out.str());
            std::printf("ensemble FA %.2f over %d sessions (p_v %.3f)\n", fa, ens_sessions,
                        config.p_v);
        } else if (stability->parsed()) {
            sim::EncoderParams params = sim::default_encoder_params();
            site::Website site = io::load_website(stab_site);
            eval::Feature feature;
            if (stab_feature == "resource_size")
                feature = eval::Feature::resource_size;
            else if (stab_feature == "burst_pattern")
                feature = eval::Feature::burst_pattern;
            else if (stab_feature == "rtdt")
                feature = eval::Feature::rtdt;
            else
                throw std::invalid_argument("unknown feature '" + stab_feature + "'");
            std::vector<sim::BrowsingContext> contexts;
            for (int delay : stab_delays)
                for (int r = 0; r < stab_repeats; ++r) {
                    sim::NetworkProfile net;
                    net.delay_max_ms = delay;
                    contexts.push_back(sim::make_context("os_a", "browser_a", params, false,
                                                         false, stab_tabs, net));
                }
            eval::StabilityTable table =
                eval::assess_feature_stability(site, contexts, feature, params, stab_seed);
            std::ostringstream out;
            out << "resource_id,cv";
            for (std::size_t i = 0; i < contexts.size(); ++i)
                out << ",value_" << i;
            out << '\n';
            for (const eval::StabilityEntry& row : table.rows) {
                out << row.resource_id << ',' << row.cv;
                for (double v : row.values)
                    out << ',' << v;
                out << '\n';
            }
            io::atomic_write(stab_out, out.str());
            log_info("stability (" + std::string(eval::feature_name(feature)) + ") for " +
                     std::to_string(table.rows.size()) + " resources -> " + stab_out);
        }
    } catch (const BudgetExceededError& e) {
        std::cerr << "error: budget-exceeded: " << e.what() << "\n";
        return 3;
    } catch (const SchemaVersionError& e) {
        std::cerr << "error: schema-version: " << e.what() << "\n";
        return 4;
    } catch (const ParseError& e) {
        std::cerr << "error: parse-error: " << e.what() << "\n";
        return 4;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: invalid-input: " << e.what() << "\n";
        return 5;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: io-error: " << e.what() << "\n";
        return 6;
    } catch (const std::exception& e) {
        std::cerr << "error: internal-error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
