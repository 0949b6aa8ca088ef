#include "doctest.h"

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "snoopy/errors.hpp"
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

} // namespace

TEST_CASE("query budget counts reservations and reports shortfalls") {
    prof::QueryBudget b(50);
    CHECK(b.remaining() == 50);
    CHECK(b.try_consume(20));
    CHECK(b.consumed() == 20);
    CHECK_FALSE(b.try_consume(31));
    CHECK(b.consumed() == 20); // failed reservation must not consume
    CHECK(b.try_consume(30));
    CHECK(b.remaining() == 0);

    prof::QueryBudget c(50);
    try {
        c.require(60);
        FAIL("expected BudgetExceededError");
    } catch (const BudgetExceededError& e) {
        CHECK(e.requested() == 60);
        CHECK(e.available() == 50);
        CHECK(e.shortfall() == 10);
    }
}

TEST_CASE("sample collection reserves the whole campaign up front") {
    site::Website w = chain_site();
    sim::EncoderParams params = sim::default_encoder_params();
    sim::BrowsingContext ctx = sim::make_context("os_a", "browser_a", params, false, false);

    // 3 pages x 2 samples x 2 variants = 12 accesses
    prof::QueryBudget tight(11);
    CHECK_THROWS_AS(prof::collect_samples(w, ctx, 2, tight, params, 5), BudgetExceededError);
    CHECK(tight.consumed() == 0);

    prof::QueryBudget exact(12);
    prof::TSamples samples = prof::collect_samples(w, ctx, 2, exact, params, 5);
    CHECK(exact.consumed() == 12);
    CHECK(exact.remaining() == 0);

    // every sample is labeled with a resource of the page it came from
    for (const auto& e : samples.entries) {
        const auto& seq = w.page_at(e.page_id).download_sequence;
        CHECK(std::find(seq.begin(), seq.end(), e.resource_id) != seq.end());
    }
}

TEST_CASE("signatures are record-size sums and skip truncated samples") {
    prof::TSamples samples;
    sim::SubTrace good;
    good.record_sizes = {500, 300};
    samples.entries.push_back({good, "r1", "P", {}});
    sim::SubTrace bad;
    bad.record_sizes = {100};
    bad.truncated = true;
    samples.entries.push_back({bad, "r2", "P", {}});

    std::vector<std::string> warnings;
    prof::FeatureDB db = prof::build_signatures(samples, &warnings);
    REQUIRE(db.entries.size() == 1);
    CHECK(db.entries[0] == std::make_pair(std::string("r1"), std::uint64_t{800}));
    CHECK(warnings.size() == 1);
}

TEST_CASE("reverse dictionary keeps multiset frequencies") {
    prof::FeatureDB db;
    db.entries = {{"r1", 500}, {"r2", 500}, {"r1", 500}, {"r3", 700}};
    prof::ReverseFeatureDB rev = prof::construct_dictionary(db);
    CHECK(rev.index.at(500) == std::vector<std::string>{"r1", "r1", "r2"});
    CHECK(rev.lookup_exact(500) == std::vector<std::string>{"r1", "r1", "r2"});
    CHECK(rev.lookup_exact(600).empty());
    CHECK(rev.lookup_range(490, 705) == std::vector<std::string>{"r1", "r1", "r2", "r3"});
    CHECK(rev.lookup_range(501, 699).empty());
}

TEST_CASE("encoder fit recovers the affine line exactly") {
    site::Website w = chain_site();
    sim::EncoderParams params = sim::default_encoder_params();
    sim::BrowsingContext ctx = sim::make_context("os_a", "browser_a", params, false, false);
    prof::QueryBudget budget(100);
    prof::TSamples samples = prof::collect_samples(w, ctx, 2, budget, params, 5);

    prof::EncoderFit fit = prof::fit_encoder(w, samples, params);
    CHECK(fit.slope == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(fit.intercept == doctest::Approx(21.0).epsilon(1e-6));
    CHECK(fit.pair_count > 0);
}

TEST_CASE("encoder fit tracks non-unit expansion parameters") {
    site::Website w = chain_site();
    sim::EncoderParams params = sim::default_encoder_params();
    params.expansion_a = 2.0;
    params.expansion_b = 7;
    sim::BrowsingContext ctx = sim::make_context("os_a", "browser_a", params, false, false);
    prof::QueryBudget budget(100);
    prof::TSamples samples = prof::collect_samples(w, ctx, 2, budget, params, 5);

    prof::EncoderFit fit = prof::fit_encoder(w, samples, params);
    CHECK(fit.slope == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(fit.intercept == doctest::Approx(28.0).epsilon(1e-6)); // b + one record frame
}

TEST_CASE("encoder fit needs two distinct sizes") {
    site::Website w;
    w.pages = {{"P", "/p", {"r1"}}};
    w.resources = {{"r1", 500, site::ContentKind::text, false, false}};
    w.finalize();
    sim::EncoderParams params = sim::default_encoder_params();
    sim::BrowsingContext ctx = sim::make_context("os_a", "browser_a", params, false, false);
    prof::QueryBudget budget(100);
    prof::TSamples samples = prof::collect_samples(w, ctx, 3, budget, params, 5);
    CHECK_THROWS_AS(prof::fit_encoder(w, samples, params), std::invalid_argument);
}

TEST_CASE("cookie variation tables cover predecessors and identifiers") {
    site::Website w = chain_site();
    sim::EncoderParams params = sim::default_encoder_params();
    prof::EncoderFit fit{1.0, 21.0, 10};
    prof::CookieVarTable table = prof::compute_cookie_var(w, fit, params);

    // rootB is the only tracking carrier; its predecessors are pages linking
    // into B, so the delta table holds A's URL.
    const prof::CookieVarEntry* rb = table.find("rootB");
    REQUIRE(rb != nullptr);
    REQUIRE(rb->c_t.has_value());
    CHECK(*rb->c_t == std::vector<std::pair<std::string, std::uint64_t>>{{"/a", 2}});

    const prof::CookieVarEntry* ra = table.find("rootA");
    REQUIRE(ra != nullptr);
    CHECK_FALSE(ra->c_t.has_value());

    // session-cookie deltas: 60 + identifier length for each configured pair
    std::vector<std::uint64_t> cs;
    for (const auto& [bo, delta] : ra->c_s)
        cs.push_back(delta);
    std::sort(cs.begin(), cs.end());
    CHECK(cs == std::vector<std::uint64_t>{90, 96, 98, 102});

    CHECK(table.max_ct() == 2);
    CHECK(table.max_cs() == 102);
}

TEST_CASE("profiling produces a consistent deterministic database") {
    site::Website w = chain_site();
    sim::EncoderParams params = sim::default_encoder_params();
    sim::BrowsingContext ctx = sim::make_context("os_a", "browser_a", params, false, false);

    prof::QueryBudget b1(100), b2(100);
    prof::SnoopyDatabase d1 = prof::profile_website(w, ctx, 3, b1, params, 9);
    prof::SnoopyDatabase d2 = prof::profile_website(w, ctx, 3, b2, params, 9);
    CHECK(d1.feature_db.entries == d2.feature_db.entries);
    CHECK(d1.consumed_queries == d2.consumed_queries);
    CHECK(d1.consumed_queries == 3 * 3 * 2);

    // reverse index always equals a fresh inversion of the forward table
    CHECK(d1.reverse_db.index == prof::construct_dictionary(d1.feature_db).index);
    CHECK(d1.protocol.user_agent_strings == params.user_agent_strings);
    CHECK(d1.protocol.os_record_payload == params.os_record_payload);

    // cookie-free baselines: plaintext + 180-byte header + one 21-byte frame
    std::map<std::string, std::uint64_t> base = d1.base_signatures();
    CHECK(base.at("rootA") == 1101);
    CHECK(base.at("x1") == 601);
    CHECK(base.at("rootB") == 1301);
    CHECK(base.at("rs") == 801);
    CHECK(base.at("rootC") == 1501);
    CHECK(base.at("x2") == 1001);

    // the cookie-enabled variant contributes session-first rows above the
    // baseline, so the forward table must contain keys beyond the minimum
    bool above_base = false;
    for (const auto& [rid, sig] : d1.feature_db.entries)
        if (sig > base.at(rid))
            above_base = true;
    CHECK(above_base);
}
