#include "doctest.h"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "snoopy/rng.hpp"
#include "snoopy/site_model.hpp"
#include "snoopy/traffic_sim.hpp"

using namespace snoopy;

namespace {

// A -> B -> C chain; B's root carries a tracking cookie, rs is shared and
// cacheable on B and C.
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

std::vector<std::uint64_t> f_values(const sim::EncryptedTrace& t) {
    std::vector<std::uint64_t> out;
    for (const auto& st : t.sub_traces)
        out.push_back(st.total_bytes());
    return out;
}

} // namespace

TEST_CASE("record segmentation splits payloads with fixed framing") {
    CHECK(sim::segment_records(1000, 16384, 21) == std::vector<std::uint64_t>{1021});
    CHECK(sim::segment_records(1000, 512, 21) == std::vector<std::uint64_t>{533, 509});
    CHECK(sim::segment_records(16384, 16384, 21) == std::vector<std::uint64_t>{16405});
    CHECK(sim::segment_records(16385, 16384, 21) == std::vector<std::uint64_t>{16405, 22});
}

TEST_CASE("resource encoding follows the affine header model") {
    sim::EncoderParams params = sim::default_encoder_params();
    sim::BrowsingContext off = sim::make_context("os_a", "browser_a", params, false, false);
    sim::BrowsingContext on = sim::make_context("os_a", "browser_a", params, false, true);

    site::Resource plain{"p", 1000, site::ContentKind::binary, false, false};
    site::Resource tracker{"t", 1000, site::ContentKind::text, false, true};

    // plaintext + 180-byte header base, one 21-byte record frame
    CHECK(sim::encode_resource(plain, off, params, false, std::nullopt).record_sizes ==
          std::vector<std::uint64_t>{1201});

    // tracking cookie embeds the previous URL only when cookies are allowed
    CHECK(sim::encode_resource(tracker, on, params, false, "/p/q").record_sizes ==
          std::vector<std::uint64_t>{1205});
    CHECK(sim::encode_resource(tracker, off, params, false, "/p/q").record_sizes ==
          std::vector<std::uint64_t>{1201});
    CHECK(sim::encode_resource(tracker, on, params, false, std::nullopt).record_sizes ==
          std::vector<std::uint64_t>{1205 - 4});

    // session cookie: base 60 + identifier length (30 for os_a/browser_a)
    CHECK(sim::encode_resource(plain, on, params, true, std::nullopt).record_sizes ==
          std::vector<std::uint64_t>{1291});
    CHECK(sim::encode_resource(plain, off, params, true, std::nullopt).record_sizes ==
          std::vector<std::uint64_t>{1201});
}

TEST_CASE("record payload limit differs per OS") {
    sim::EncoderParams params = sim::default_encoder_params();
    sim::BrowsingContext a = sim::make_context("os_a", "browser_a", params, false, false);
    sim::BrowsingContext b = sim::make_context("os_b", "browser_a", params, false, false);
    CHECK(a.max_record_payload == 16384);
    CHECK(b.max_record_payload == 8192);

    site::Resource big{"big", 10000, site::ContentKind::binary, false, false};
    sim::SubTrace on_a = sim::encode_resource(big, a, params, false, std::nullopt);
    sim::SubTrace on_b = sim::encode_resource(big, b, params, false, std::nullopt);
    CHECK(on_a.record_sizes == std::vector<std::uint64_t>{10201});
    CHECK(on_b.record_sizes == std::vector<std::uint64_t>{8213, 2009});
    CHECK(on_b.total_bytes() == 10222);

    CHECK_THROWS_AS(sim::make_context("os_z", "browser_a", params, false, false),
                    std::invalid_argument);
}

TEST_CASE("session simulation aligns ground truth with sub-traces") {
    site::Website w = chain_site();
    sim::EncoderParams params = sim::default_encoder_params();
    sim::BrowsingContext ctx = sim::make_context("os_a", "browser_a", params, false, false);
    sim::SessionPlan plan;
    plan.tab_pages = {{"A", "B", "C"}};

    auto [trace, truth] = sim::simulate_session(w, plan, ctx, params, 5);
    CHECK(truth.session_pages == std::set<std::string>{"A", "B", "C"});
    std::size_t downloaded = 0;
    for (const auto& e : truth.entries)
        if (e.downloaded)
            ++downloaded;
    CHECK(downloaded == trace.sub_traces.size());
    CHECK(trace.sub_traces.size() == 7); // 2 + 2 + 3 resources, no cache

    std::uint64_t cursor = 0;
    for (const auto& st : trace.sub_traces) {
        CHECK(st.first_byte_index == cursor);
        cursor += st.total_bytes();
        CHECK(st.total_bytes() ==
              std::accumulate(st.record_sizes.begin(), st.record_sizes.end(), std::uint64_t{0}));
    }
    CHECK(trace.context_hint == std::make_pair(std::string("os_a"), std::string("browser_a")));
}

TEST_CASE("tracking cookie reflects the previous page URL within a tab") {
    site::Website w = chain_site();
    sim::EncoderParams params = sim::default_encoder_params();
    sim::BrowsingContext on = sim::make_context("os_a", "browser_a", params, false, true);
    sim::BrowsingContext off = sim::make_context("os_a", "browser_a", params, false, false);
    sim::SessionPlan plan;
    plan.tab_pages = {{"A", "B"}};

    auto [t_on, g_on] = sim::simulate_session(w, plan, on, params, 5);
    auto [t_off, g_off] = sim::simulate_session(w, plan, off, params, 5);
    // single tab keeps emission order: rootA, x1, rootB, rs
    // rootB carries the tracking cookie; "/a" adds 2 bytes when cookies are on
    CHECK(t_on.sub_traces[2].total_bytes() == t_off.sub_traces[2].total_bytes() + 2);
    // the session cookie lands on the very first transfer (60 + 30 bytes)
    CHECK(t_on.sub_traces[0].total_bytes() == t_off.sub_traces[0].total_bytes() + 90);
    // everything else matches
    CHECK(t_on.sub_traces[1].total_bytes() == t_off.sub_traces[1].total_bytes());
    CHECK(t_on.sub_traces[3].total_bytes() == t_off.sub_traces[3].total_bytes());
}

TEST_CASE("browser cache suppresses repeated cacheable downloads") {
    site::Website w = chain_site();
    sim::EncoderParams params = sim::default_encoder_params();
    sim::BrowsingContext cold = sim::make_context("os_a", "browser_a", params, false, false);
    sim::BrowsingContext warm = sim::make_context("os_a", "browser_a", params, true, false);
    sim::SessionPlan plan;
    plan.tab_pages = {{"B", "C"}}; // rs appears on both pages

    auto [t_cold, g_cold] = sim::simulate_session(w, plan, cold, params, 5);
    auto [t_warm, g_warm] = sim::simulate_session(w, plan, warm, params, 5);
    CHECK(t_cold.sub_traces.size() == 5);
    CHECK(t_warm.sub_traces.size() == 4); // second rs served from cache
    bool suppressed = false;
    for (const auto& e : g_warm.entries)
        if (!e.downloaded && e.resource_id == "rs")
            suppressed = true;
    CHECK(suppressed);
}

TEST_CASE("cache never increases the number of transfers") {
    site::Website w = chain_site();
    sim::EncoderParams params = sim::default_encoder_params();
    for (int k = 0; k < 10; ++k) {
        sim::SessionPlan plan = sim::sample_session_plan(w, 1, 3, mix_seed(21, "cache", k));
        auto [cold, gc] = sim::simulate_session(
            w, plan, sim::make_context("os_a", "browser_a", params, false, false), params, k);
        auto [warm, gw] = sim::simulate_session(
            w, plan, sim::make_context("os_a", "browser_a", params, true, false), params, k);
        CHECK(warm.sub_traces.size() <= cold.sub_traces.size());
    }
}

TEST_CASE("interleaving permutes but preserves the transfer multiset") {
    site::Website w = chain_site();
    sim::EncoderParams params = sim::default_encoder_params();
    sim::BrowsingContext ctx = sim::make_context("os_a", "browser_a", params, false, false, 3);
    sim::SessionPlan plan;
    plan.tab_pages = {{"A"}, {"B"}, {"C"}};

    plan.interleaving_seed = 1;
    auto [t1, g1] = sim::simulate_session(w, plan, ctx, params, 5);
    plan.interleaving_seed = 2;
    auto [t2, g2] = sim::simulate_session(w, plan, ctx, params, 5);

    std::multiset<std::uint64_t> m1, m2;
    for (auto f : f_values(t1))
        m1.insert(f);
    for (auto f : f_values(t2))
        m2.insert(f);
    CHECK(m1 == m2);
    CHECK(t1.sub_traces.size() == t2.sub_traces.size());
}

TEST_CASE("plan validation enforces the hyperlink constraint") {
    site::Website w = chain_site();
    sim::SessionPlan ok;
    ok.tab_pages = {{"A", "B"}, {"C"}};
    sim::validate_plan(w, ok);

    sim::SessionPlan unknown;
    unknown.tab_pages = {{"A", "Z"}};
    CHECK_THROWS_AS(sim::validate_plan(w, unknown), std::invalid_argument);

    sim::SessionPlan no_edge;
    no_edge.tab_pages = {{"B", "A"}}; // only A->B exists
    CHECK_THROWS_AS(sim::validate_plan(w, no_edge), std::invalid_argument);
}

TEST_CASE("sampled plans are valid deterministic walks") {
    site::Website w = chain_site();
    for (int k = 0; k < 20; ++k) {
        sim::SessionPlan p = sim::sample_session_plan(w, 2, 3, mix_seed(3, "plan", k));
        sim::validate_plan(w, p);
        std::size_t total = 0;
        for (const auto& tab : p.tab_pages)
            total += tab.size();
        CHECK(total == 3);
        CHECK(p.tab_pages.size() == 2);
    }
    sim::SessionPlan a = sim::sample_session_plan(w, 2, 3, 99);
    sim::SessionPlan b = sim::sample_session_plan(w, 2, 3, 99);
    CHECK(a.tab_pages == b.tab_pages);
    CHECK(a.interleaving_seed == b.interleaving_seed);

    CHECK_THROWS_AS(sim::sample_session_plan(w, 4, 3, 1), std::invalid_argument);
}

TEST_CASE("network perturbation only mutates traces when drops are lossy") {
    site::Website w = chain_site();
    sim::EncoderParams params = sim::default_encoder_params();
    sim::BrowsingContext ctx = sim::make_context("os_a", "browser_a", params, false, false);
    sim::SessionPlan plan;
    plan.tab_pages = {{"A", "B", "C"}};
    auto [trace, truth] = sim::simulate_session(w, plan, ctx, params, 5);

    CHECK(sim::perturb_network(trace, {10, 80, 0.3, true}, 7) == trace);
    CHECK(sim::perturb_network(trace, {0, 0, 0.0, false}, 7) == trace);

    sim::EncryptedTrace all_lost = sim::perturb_network(trace, {0, 0, 1.0, false}, 7);
    for (const auto& st : all_lost.sub_traces) {
        CHECK(st.truncated);
        CHECK(st.record_sizes.empty());
    }

    sim::EncryptedTrace x = sim::perturb_network(trace, {0, 0, 0.4, false}, 7);
    sim::EncryptedTrace y = sim::perturb_network(trace, {0, 0, 0.4, false}, 7);
    CHECK(x == y); // deterministic for a fixed seed
    CHECK_THROWS_AS(sim::perturb_network(trace, {0, 0, 1.5, false}, 7), std::invalid_argument);
}

TEST_CASE("simulation is reproducible end to end") {
    site::Website w = chain_site();
    sim::EncoderParams params = sim::default_encoder_params();
    sim::BrowsingContext ctx = sim::make_context("os_a", "browser_a", params, true, true, 2);
    sim::SessionPlan plan;
    plan.tab_pages = {{"A", "B"}, {"C"}};
    plan.interleaving_seed = 11;

    auto [t1, g1] = sim::simulate_session(w, plan, ctx, params, 42);
    auto [t2, g2] = sim::simulate_session(w, plan, ctx, params, 42);
    CHECK(t1 == t2);
    CHECK(g1 == g2);

    auto [t3, g3] = sim::simulate_session(w, plan, ctx, params, 43);
    CHECK_FALSE(t1 == t3);
}
