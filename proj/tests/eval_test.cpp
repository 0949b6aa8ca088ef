#include "doctest.h"

#include <map>
#include <set>
#include <string>
#include <vector>

#include "snoopy/eval.hpp"
#include "snoopy/predictor.hpp"
#include "snoopy/profiler.hpp"
#include "snoopy/site_model.hpp"
#include "snoopy/traffic_sim.hpp"

using namespace snoopy;

namespace {

site::Website chain_site() {
    site::Website w;
    w.pages = {{"A", "/a", {"rootA", "x1"}},
               {"B", "/bee", {"rootB", "rs"}},
               {"C", "/c", {"rootC", "rs", "x2"}}};
    w.resources = {{"rootA", 900, site::ContentKind::text, false, false},
                   {"rootB", 1100, site::ContentKind::text, false, true},
                   {"rootC", 1300, site::ContentKind::text, false, false},
                   {"x1", 400, site::ContentKind::binary, false, false},
                   {"rs", 600, site::ContentKind::binary, true, false},
                   {"x2", 800, site::ContentKind::binary, true, false}};
    w.edges = {{"A", "B"}, {"B", "C"}};
    w.finalize();
    w.validate();
    return w;
}

pred::ResolvedEntry identified(std::size_t i, const std::string& id) {
    pred::ResolvedEntry e;
    e.index = i;
    e.status = pred::ResourceStatus::identified;
    e.resource_id = id;
    return e;
}

sim::GroundTruthEntry downloaded(const std::string& rid, const std::string& pid) {
    sim::GroundTruthEntry e;
    e.resource_id = rid;
    e.page_id = pid;
    e.downloaded = true;
    return e;
}

// Fixed-answer classifier for gate tests: one (page, confidence) reply.
class FixedClassifier : public eval::Classifier {
public:
    FixedClassifier(std::string page, double prob) : page_(std::move(page)), prob_(prob) {}
    void train(const std::vector<eval::LabeledTrace>&) override {}
    std::pair<std::string, double> predict(const sim::EncryptedTrace&) const override {
        return {page_, prob_};
    }

private:
    std::string page_;
    double prob_;
};

class ThrowingClassifier : public eval::Classifier {
public:
    void train(const std::vector<eval::LabeledTrace>&) override {}
    std::pair<std::string, double> predict(const sim::EncryptedTrace&) const override {
        throw std::runtime_error("model unavailable");
    }
};

} // namespace

TEST_CASE("accuracy aggregation counts hits substitutions and misses") {
    std::vector<pred::PredictionResult> results(2);
    std::vector<sim::GroundTruth> truths(2);

    truths[0].session_pages = {"A", "B", "C"};
    truths[0].entries = {downloaded("ra", "A"), downloaded("rb", "B"), downloaded("rc", "C")};
    results[0].predicted_webpages = {"A", "B", "D"};
    results[0].predicted_resources = {identified(0, "ra"), identified(1, "rb"),
                                      identified(2, "zz")};

    truths[1].session_pages = {"X2"};
    truths[1].entries = {downloaded("rx", "X2")};
    results[1].predicted_webpages = {"X2"};
    results[1].predicted_resources = {identified(0, "rx")};

    eval::AccuracyReport rep = eval::fingerprinting_accuracy(results, truths);
    CHECK(rep.webpages.accessed == 4);
    CHECK(rep.webpages.accurately_identified == 3);
    CHECK(rep.webpages.wrongly_identified == 1); // D substituted for C
    CHECK(rep.webpages.not_identified == 0);
    CHECK(rep.fa_percent == doctest::Approx(75.0));

    CHECK(rep.resources.total == 4);
    CHECK(rep.resources.accurate == 3);
    CHECK(rep.resources.conflict == 1); // zz is not rc
    CHECK(rep.resources.incomplete == 0);
}

TEST_CASE("accuracy aggregation rejects misaligned inputs") {
    std::vector<pred::PredictionResult> results(1);
    std::vector<sim::GroundTruth> truths(2);
    CHECK_THROWS_AS(eval::fingerprinting_accuracy(results, truths), std::invalid_argument);

    results.resize(2);
    truths[0].entries = {downloaded("ra", "A")};
    truths[0].session_pages = {"A"};
    // no predicted resources for one downloaded entry
    CHECK_THROWS_AS(eval::fingerprinting_accuracy(results, truths), std::invalid_argument);
}

TEST_CASE("missed pages are neither accurate nor substituted") {
    std::vector<pred::PredictionResult> results(1);
    std::vector<sim::GroundTruth> truths(1);
    truths[0].session_pages = {"A", "B"};
    truths[0].entries = {downloaded("ra", "A"), downloaded("rb", "B")};
    results[0].predicted_webpages = {"A"};
    results[0].predicted_resources = {identified(0, "ra"), identified(1, "rb")};

    eval::AccuracyReport rep = eval::fingerprinting_accuracy(results, truths);
    CHECK(rep.webpages.accurately_identified == 1);
    CHECK(rep.webpages.wrongly_identified == 0);
    CHECK(rep.webpages.not_identified == 1);
    CHECK(rep.fa_percent == doctest::Approx(50.0));
}

TEST_CASE("an experiment with an empty factor axis yields no cells") {
    site::Website w = chain_site();
    sim::EncoderParams params = sim::default_encoder_params();
    eval::ExperimentSpec spec;
    spec.profiling_context = sim::make_context("os_a", "browser_a", params, false, false);
    spec.factors.browsing_configs = {{false, false}};
    spec.factors.tab_counts = {}; // empty axis
    spec.factors.os_list = {"os_a"};
    spec.factors.browser_list = {"browser_a"};
    spec.factors.network_profiles = {{}};
    spec.seed = 3;

    eval::AccuracyReport rep = eval::run_experiment(spec, w, params);
    CHECK(rep.cells.empty());
    CHECK(rep.webpages.accessed == 0);
    CHECK(rep.consumed_queries == 3 * 3 * 2); // profiling still happened
}

TEST_CASE("a one-cell experiment aggregates deterministically") {
    site::Website w = chain_site();
    sim::EncoderParams params = sim::default_encoder_params();
    eval::ExperimentSpec spec;
    spec.profiling_context = sim::make_context("os_a", "browser_a", params, false, false);
    spec.factors.browsing_configs = {{false, false}};
    spec.factors.tab_counts = {1};
    spec.factors.os_list = {"os_a"};
    spec.factors.browser_list = {"browser_a"};
    spec.factors.network_profiles = {{}};
    spec.sessions_per_cell = 3;
    spec.pages_per_session = 2;
    spec.seed = 5;

    eval::AccuracyReport r1 = eval::run_experiment(spec, w, params);
    eval::AccuracyReport r2 = eval::run_experiment(spec, w, params);
    REQUIRE(r1.cells.size() == 1);
    CHECK(r1.cells[0].sessions == 3);
    CHECK(r1.cells[0].key.label() == r2.cells[0].key.label());
    CHECK(r1.fa_percent == r2.fa_percent);
    CHECK(r1.webpages == r2.webpages);
    CHECK(r1.fa_percent == doctest::Approx(100.0)); // distinct sizes, same context
    CHECK(r1.cells[0].fa_percent == r1.fa_percent);
}

TEST_CASE("infeasible cells are skipped with a note") {
    site::Website w = chain_site();
    sim::EncoderParams params = sim::default_encoder_params();
    eval::ExperimentSpec spec;
    spec.profiling_context = sim::make_context("os_a", "browser_a", params, false, false);
    spec.factors.browsing_configs = {{false, false}};
    spec.factors.tab_counts = {3}; // cannot split 2 pages over 3 tabs
    spec.factors.os_list = {"os_a"};
    spec.factors.browser_list = {"browser_a"};
    spec.factors.network_profiles = {{}};
    spec.pages_per_session = 2;
    spec.seed = 5;

    eval::AccuracyReport rep = eval::run_experiment(spec, w, params);
    REQUIRE(rep.cells.size() == 1);
    CHECK(rep.cells[0].sessions == 0);
    CHECK_FALSE(rep.cells[0].note.empty());
}

TEST_CASE("stability requires contexts and reports per-resource spread") {
    site::Website w = chain_site();
    sim::EncoderParams params = sim::default_encoder_params();

    CHECK_THROWS_AS(
        eval::assess_feature_stability(w, {}, eval::Feature::resource_size, params, 1),
        std::invalid_argument);

    std::vector<sim::BrowsingContext> contexts = {
        sim::make_context("os_a", "browser_a", params, false, false, 1, {0, 0, 0.0, true}),
        sim::make_context("os_a", "browser_a", params, false, false, 1, {0, 50, 0.0, true}),
    };
    eval::StabilityTable sizes =
        eval::assess_feature_stability(w, contexts, eval::Feature::resource_size, params, 1);
    CHECK(sizes.rows.size() == w.resources.size());
    for (const auto& row : sizes.rows) {
        CHECK(row.values.size() == 2);
        CHECK(row.cv == 0.0); // delays never change sizes
    }
    CHECK(sizes.burst_sequences.size() == 2);

    eval::StabilityTable rtdt =
        eval::assess_feature_stability(w, contexts, eval::Feature::rtdt, params, 1);
    bool any_spread = false;
    for (const auto& row : rtdt.rows)
        if (row.cv > 0.0)
            any_spread = true;
    CHECK(any_spread);
}

TEST_CASE("nearest centroid classifier separates size-distinct pages") {
    sim::EncryptedTrace small, big, probe;
    sim::SubTrace st;
    st.record_sizes = {1000};
    small.sub_traces = {st};
    st.record_sizes = {5000};
    big.sub_traces = {st};
    st.record_sizes = {1010};
    probe.sub_traces = {st};

    CHECK(eval::NearestCentroidClassifier::features(small) ==
          std::vector<double>{1000, 1, 1000, 0, 0, 0, 0});

    eval::NearestCentroidClassifier cls;
    CHECK_THROWS_AS(cls.predict(small), std::logic_error);
    CHECK_THROWS_AS(cls.train({}), std::invalid_argument);

    cls.train({{small, "P"}, {big, "Q"}});
    auto [page, prob] = cls.predict(probe);
    CHECK(page == "P");
    CHECK(prob > 0.5);

    eval::NearestCentroidClassifier single;
    single.train({{small, "P"}});
    auto [only, certain] = single.predict(probe);
    CHECK(only == "P");
    CHECK(certain == doctest::Approx(1.0));
}

TEST_CASE("validation threshold is the weakest confident answer") {
    sim::EncryptedTrace t1, t2, t3;
    sim::SubTrace st;
    st.record_sizes = {100};
    t1.sub_traces = {st};
    st.record_sizes = {200};
    t2.sub_traces = {st};
    st.record_sizes = {300};
    t3.sub_traces = {st};

    // the nearest-centroid confidence is 1.0 on its own training points
    eval::NearestCentroidClassifier cls;
    cls.train({{t1, "P"}});
    CHECK(eval::compute_validation_threshold(cls, {t1, t2, t3}) == doctest::Approx(1.0));
    CHECK_THROWS_AS(eval::compute_validation_threshold(cls, {}), std::invalid_argument);

    FixedClassifier half("P", 0.5);
    CHECK(eval::compute_validation_threshold(half, {t1, t2}) == doctest::Approx(0.5));
}

TEST_CASE("ensemble gate routes by confidence against p_v minus margin") {
    site::Website w = chain_site();
    sim::EncoderParams params = sim::default_encoder_params();
    sim::BrowsingContext ctx = sim::make_context("os_a", "browser_a", params, false, false);
    prof::QueryBudget budget(100);
    prof::SnoopyDatabase db = prof::profile_website(w, ctx, 3, budget, params, 9);

    sim::SessionPlan plan;
    plan.tab_pages = {{"A"}};
    auto [trace, truth] = sim::simulate_session(w, plan, ctx, params, 5);

    pred::ContextHints hints;
    hints.cache_assumed = false;

    eval::EnsembleConfig cfg;
    cfg.snoopy_page_set = {"A", "B"};
    cfg.ml_page_set = {"C"};
    cfg.p_v = 0.325;
    cfg.margin = 0.10; // gate at 0.225

    FixedClassifier above("C", 0.226);
    cfg.classifier = &above;
    eval::EnsembleDecision d = eval::ensemble_predict(trace, db, cfg, hints);
    CHECK(d.used_classifier);
    CHECK(d.page_id == std::string("C"));
    CHECK(d.p_ml == doctest::Approx(0.226));

    FixedClassifier below("C", 0.224);
    cfg.classifier = &below;
    d = eval::ensemble_predict(trace, db, cfg, hints);
    CHECK_FALSE(d.used_classifier);
    CHECK(d.page_id == std::string("A")); // signature pipeline answers

    ThrowingClassifier broken;
    cfg.classifier = &broken;
    d = eval::ensemble_predict(trace, db, cfg, hints);
    CHECK_FALSE(d.used_classifier);
    CHECK(d.page_id == std::string("A"));
    CHECK_FALSE(d.note.empty());
}

TEST_CASE("ensemble configuration is validated") {
    site::Website w = chain_site();
    sim::EncoderParams params = sim::default_encoder_params();
    sim::BrowsingContext ctx = sim::make_context("os_a", "browser_a", params, false, false);
    prof::QueryBudget budget(100);
    prof::SnoopyDatabase db = prof::profile_website(w, ctx, 2, budget, params, 9);
    sim::SessionPlan plan;
    plan.tab_pages = {{"A"}};
    auto [trace, truth] = sim::simulate_session(w, plan, ctx, params, 5);
    pred::ContextHints hints;

    eval::EnsembleConfig cfg;
    FixedClassifier ok("A", 0.9);

    cfg.classifier = nullptr;
    CHECK_THROWS_AS(eval::ensemble_predict(trace, db, cfg, hints), std::invalid_argument);

    cfg.classifier = &ok;
    cfg.p_v = 1.5;
    CHECK_THROWS_AS(eval::ensemble_predict(trace, db, cfg, hints), std::invalid_argument);

    cfg.p_v = 0.325;
    cfg.snoopy_page_set = {"A"};
    cfg.ml_page_set = {"A"};
    CHECK_THROWS_AS(eval::ensemble_predict(trace, db, cfg, hints), std::invalid_argument);
}

TEST_CASE("collision variants pair pages into identical size sequences") {
    site::SiteSpec spec;
    spec.page_count = 12;
    spec.resources_per_page_min = 4;
    spec.resources_per_page_max = 4;
    spec.shared_resource_fraction = 0.0;
    spec.size_distribution = {site::SizeDistribution::Kind::distinct_uniform, 300, 15000};
    spec.edge_density = 0.3;
    spec.cacheable_fraction = 0.0;
    spec.tracking_cookie_fraction = 0.0;
    spec.rng_seed = 4;
    site::Website base = site::generate_synthetic_site(spec);

    CHECK_THROWS_AS(eval::make_collision_variant(base, 1.2, 1, nullptr), std::invalid_argument);

    site::Website same = eval::make_collision_variant(base, 0.0, 1, nullptr);
    CHECK(same == base);

    std::set<std::string> colliding;
    site::Website variant = eval::make_collision_variant(base, 0.3, 1, &colliding);
    variant.validate();
    CHECK(colliding.size() == 4); // round(0.3 * 12) pages paired up
    CHECK(colliding.size() % 2 == 0);

    // every colliding page has a partner with the same size sequence
    std::map<std::vector<std::uint64_t>, int> shapes;
    for (const std::string& pid : colliding) {
        std::vector<std::uint64_t> sizes;
        for (const std::string& rid : variant.page_at(pid).download_sequence)
            sizes.push_back(variant.resource_at(rid).plaintext_size);
        ++shapes[sizes];
    }
    for (const auto& [shape, count] : shapes)
        CHECK(count % 2 == 0);

    // determinism
    std::set<std::string> colliding2;
    site::Website variant2 = eval::make_collision_variant(base, 0.3, 1, &colliding2);
    CHECK(variant == variant2);
    CHECK(colliding == colliding2);

    // non-colliding pages keep their original resources
    for (const site::Webpage& p : base.pages)
        if (!colliding.count(p.id))
            for (const std::string& rid : p.download_sequence)
                CHECK(variant.resource_at(rid).plaintext_size ==
                      base.resource_at(rid).plaintext_size);
}
