#include "snoopy/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "snoopy/errors.hpp"

namespace snoopy::io {

using nlohmann::json; // object keys are kept sorted -> deterministic output

void atomic_write(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out)
            throw std::runtime_error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParseError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

namespace {

json parse_document(const std::string& text, std::uint64_t base_offset = 0) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError("parse error at byte " + std::to_string(base_offset + e.byte) + ": " +
                         e.what());
    }
}

void check_schema(const json& j, const std::string& kind) {
    if (!j.is_object() || !j.contains("schema_version") || !j.contains("kind"))
        throw ParseError("document lacks a schema header");
    if (j.at("kind").get<std::string>() != kind)
        throw SchemaVersionError("expected a '" + kind + "' document, found '" +
                                 j.at("kind").get<std::string>() + "'");
    if (j.at("schema_version").get<int>() != schema_version)
        throw SchemaVersionError("unsupported schema version " +
                                 j.at("schema_version").dump() + " (supported: " +
                                 std::to_string(schema_version) + ")");
}

json network_to_json(const sim::NetworkProfile& n) {
    return json{{"delay_min_ms", n.delay_min_ms},
                {"delay_max_ms", n.delay_max_ms},
                {"drop_probability", n.drop_probability},
                {"retransmit", n.retransmit}};
}

sim::NetworkProfile network_from_json(const json& j) {
    sim::NetworkProfile n;
    n.delay_min_ms = j.at("delay_min_ms").get<int>();
    n.delay_max_ms = j.at("delay_max_ms").get<int>();
    n.drop_probability = j.at("drop_probability").get<double>();
    n.retransmit = j.at("retransmit").get<bool>();
    return n;
}

json context_to_json(const sim::BrowsingContext& c) {
    return json{{"os", c.os},
                {"max_record_payload", c.max_record_payload},
                {"browser", c.browser},
                {"cache_enabled", c.cache_enabled},
                {"cookies_allowed", c.cookies_allowed},
                {"tab_count", c.tab_count},
                {"network", network_to_json(c.network)}};
}

sim::BrowsingContext context_from_json(const json& j) {
    sim::BrowsingContext c;
    c.os = j.at("os").get<std::string>();
    c.max_record_payload = j.at("max_record_payload").get<std::uint32_t>();
    c.browser = j.at("browser").get<std::string>();
    c.cache_enabled = j.at("cache_enabled").get<bool>();
    c.cookies_allowed = j.at("cookies_allowed").get<bool>();
    c.tab_count = j.at("tab_count").get<int>();
    c.network = network_from_json(j.at("network"));
    return c;
}

json website_to_json(const site::Website& site) {
    json pages = json::array();
    for (const site::Webpage& p : site.pages)
        pages.push_back(
            {{"id", p.id}, {"url", p.url}, {"download_sequence", p.download_sequence}});
    json resources = json::array();
    for (const site::Resource& r : site.resources)
        resources.push_back({{"id", r.id},
                             {"plaintext_size", r.plaintext_size},
                             {"content_kind",
                              r.content_kind == site::ContentKind::text ? "text" : "binary"},
                             {"cacheable", r.cacheable},
                             {"carries_tracking_cookie", r.carries_tracking_cookie}});
    json edges = json::array();
    for (const auto& [u, v] : site.edges)
        edges.push_back(json::array({u, v}));
    json resource_map = json::object();
    for (const auto& [page, ids] : site.resource_map)
        resource_map[page] = ids;
    return json{{"pages", pages},
                {"resources", resources},
                {"edges", edges},
                {"resource_map", resource_map}};
}

site::Website website_from_json(const json& j) {
    site::Website site;
    for (const json& p : j.at("pages")) {
        site::Webpage page;
        page.id = p.at("id").get<std::string>();
        page.url = p.at("url").get<std::string>();
        page.download_sequence = p.at("download_sequence").get<std::vector<std::string>>();
        site.pages.push_back(std::move(page));
    }
    for (const json& r : j.at("resources")) {
        site::Resource res;
        res.id = r.at("id").get<std::string>();
        res.plaintext_size = r.at("plaintext_size").get<std::uint64_t>();
        std::string kind = r.at("content_kind").get<std::string>();
        if (kind != "text" && kind != "binary")
            throw ParseError("unknown content kind '" + kind + "'");
        res.content_kind = kind == "text" ? site::ContentKind::text : site::ContentKind::binary;
        res.cacheable = r.at("cacheable").get<bool>();
        res.carries_tracking_cookie = r.at("carries_tracking_cookie").get<bool>();
        site.resources.push_back(std::move(res));
    }
    for (const json& e : j.at("edges"))
        site.edges.emplace(e.at(0).get<std::string>(), e.at(1).get<std::string>());

    std::map<std::string, std::vector<std::string>> stored_map;
    for (const auto& [page, ids] : j.at("resource_map").items())
        stored_map[page] = ids.get<std::vector<std::string>>();

    site.finalize();
    if (site.resource_map != stored_map)
        throw ParseError("stored resource map disagrees with the download sequences");
    site.validate();
    return site;
}

json sub_trace_to_json(const sim::SubTrace& st) {
    return json{{"group_key", st.group_key},
                {"record_sizes", st.record_sizes},
                {"first_byte_index", st.first_byte_index},
                {"truncated", st.truncated}};
}

sim::SubTrace sub_trace_from_json(const json& j) {
    sim::SubTrace st;
    st.group_key = j.at("group_key").get<std::string>();
    st.record_sizes = j.at("record_sizes").get<std::vector<std::uint64_t>>();
    st.first_byte_index = j.at("first_byte_index").get<std::uint64_t>();
    st.truncated = j.at("truncated").get<bool>();
    return st;
}

json trace_to_json(const sim::EncryptedTrace& trace) {
    json sub_traces = json::array();
    for (const sim::SubTrace& st : trace.sub_traces)
        sub_traces.push_back(sub_trace_to_json(st));
    json out{{"sub_traces", sub_traces}};
    if (trace.context_hint)
        out["context_hint"] = json::array({trace.context_hint->first, trace.context_hint->second});
    return out;
}

sim::EncryptedTrace trace_from_json(const json& j) {
    sim::EncryptedTrace trace;
    for (const json& st : j.at("sub_traces"))
        trace.sub_traces.push_back(sub_trace_from_json(st));
    if (j.contains("context_hint"))
        trace.context_hint = std::make_pair(j.at("context_hint").at(0).get<std::string>(),
                                            j.at("context_hint").at(1).get<std::string>());
    return trace;
}

json ground_truth_to_json(const sim::GroundTruth& truth) {
    json entries = json::array();
    for (const sim::GroundTruthEntry& e : truth.entries)
        entries.push_back({{"resource_id", e.resource_id},
                           {"page_id", e.page_id},
                           {"tab_index", e.tab_index},
                           {"downloaded", e.downloaded}});
    return json{{"entries", entries},
                {"session_pages",
                 std::vector<std::string>(truth.session_pages.begin(), truth.session_pages.end())}};
}

sim::GroundTruth ground_truth_from_json(const json& j) {
    sim::GroundTruth truth;
    for (const json& e : j.at("entries")) {
        sim::GroundTruthEntry entry;
        entry.resource_id = e.at("resource_id").get<std::string>();
        entry.page_id = e.at("page_id").get<std::string>();
        entry.tab_index = e.at("tab_index").get<int>();
        entry.downloaded = e.at("downloaded").get<bool>();
        truth.entries.push_back(std::move(entry));
    }
    for (const json& p : j.at("session_pages"))
        truth.session_pages.insert(p.get<std::string>());
    return truth;
}

json header_line(const std::string& kind) {
    return json{{"kind", kind}, {"schema_version", schema_version}};
}

} // namespace

std::string website_to_string(const site::Website& site) {
    json doc = website_to_json(site);
    doc["kind"] = "website";
    doc["schema_version"] = schema_version;
    return doc.dump(2) + "\n";
}

void save_website(const site::Website& site, const std::filesystem::path& path) {
    atomic_write(path, website_to_string(site));
}

site::Website load_website(const std::filesystem::path& path) {
    json doc = parse_document(read_file(path));
    check_schema(doc, "website");
    try {
        return website_from_json(doc);
    } catch (const json::exception& e) {
        throw ParseError("malformed website document: " + std::string(e.what()));
    }
}

std::string database_to_string(const prof::SnoopyDatabase& db) {
    json doc;
    doc["kind"] = "snoopy-db";
    doc["schema_version"] = schema_version;
    doc["website"] = website_to_json(db.website);

    json feature_db = json::array();
    for (const auto& [rid, sig] : db.feature_db.entries)
        feature_db.push_back(json::array({rid, sig}));
    doc["feature_db"] = feature_db;

    json reverse_db = json::object();
    for (const auto& [sig, ids] : db.reverse_db.index)
        reverse_db[std::to_string(sig)] = ids;
    doc["reverse_db"] = reverse_db;

    json cookie_var = json::object();
    for (const auto& [rid, entry] : db.cookie_var.by_resource) {
        json e;
        json cs = json::array();
        for (const auto& [bo, delta] : entry.c_s)
            cs.push_back(json::array({bo, delta}));
        e["c_s"] = cs;
        if (entry.c_t) {
            json ct = json::array();
            for (const auto& [url, delta] : *entry.c_t)
                ct.push_back(json::array({url, delta}));
            e["c_t"] = ct;
        } else {
            e["c_t"] = nullptr;
        }
        cookie_var[rid] = e;
    }
    doc["cookie_var"] = cookie_var;

    doc["profiling_context"] = context_to_json(db.profiling_context);
    json variants = json::array();
    for (const prof::ProfilingVariant& v : db.profiling_variants)
        variants.push_back(json::array({v.cache_enabled, v.cookies_allowed}));
    doc["profiling_variants"] = variants;

    doc["encoder_fit"] = json{{"slope", db.encoder_fit.slope},
                              {"intercept", db.encoder_fit.intercept},
                              {"pair_count", db.encoder_fit.pair_count}};

    json protocol;
    protocol["record_overhead"] = db.protocol.record_overhead;
    protocol["response_header_base"] = db.protocol.response_header_base;
    json os_payload = json::object();
    for (const auto& [os, mrp] : db.protocol.os_record_payload)
        os_payload[os] = mrp;
    protocol["os_record_payload"] = os_payload;
    json uas = json::array();
    for (const auto& [key, ua] : db.protocol.user_agent_strings)
        uas.push_back(json::array({key.first, key.second, ua}));
    protocol["user_agent_strings"] = uas;
    doc["protocol"] = protocol;

    doc["consumed_queries"] = db.consumed_queries;
    return doc.dump(2) + "\n";
}

void save_database(const prof::SnoopyDatabase& db, const std::filesystem::path& path) {
    atomic_write(path, database_to_string(db));
}

prof::SnoopyDatabase load_database(const std::filesystem::path& path) {
    json doc = parse_document(read_file(path));
    check_schema(doc, "snoopy-db");
    try {
        prof::SnoopyDatabase db;
        db.website = website_from_json(doc.at("website"));

        for (const json& row : doc.at("feature_db"))
            db.feature_db.entries.emplace_back(row.at(0).get<std::string>(),
                                               row.at(1).get<std::uint64_t>());

        // The reverse index is derivable; a stored form that disagrees with
        // the signatures marks a corrupt or hand-edited document.
        db.reverse_db = prof::construct_dictionary(db.feature_db);
        std::map<std::uint64_t, std::vector<std::string>> stored;
        for (const auto& [key, ids] : doc.at("reverse_db").items())
            stored[std::stoull(key)] = ids.get<std::vector<std::string>>();
        if (stored != db.reverse_db.index)
            throw ParseError("stored reverse index disagrees with the signature rows");

        for (const auto& [rid, e] : doc.at("cookie_var").items()) {
            prof::CookieVarEntry entry;
            for (const json& cs : e.at("c_s"))
                entry.c_s.emplace_back(cs.at(0).get<std::string>(), cs.at(1).get<std::uint64_t>());
            if (!e.at("c_t").is_null()) {
                std::vector<std::pair<std::string, std::uint64_t>> ct;
                for (const json& row : e.at("c_t"))
                    ct.emplace_back(row.at(0).get<std::string>(), row.at(1).get<std::uint64_t>());
                entry.c_t = std::move(ct);
            }
            db.cookie_var.by_resource[rid] = std::move(entry);
        }

        db.profiling_context = context_from_json(doc.at("profiling_context"));
        for (const json& v : doc.at("profiling_variants"))
            db.profiling_variants.push_back({v.at(0).get<bool>(), v.at(1).get<bool>()});

        db.encoder_fit.slope = doc.at("encoder_fit").at("slope").get<double>();
        db.encoder_fit.intercept = doc.at("encoder_fit").at("intercept").get<double>();
        db.encoder_fit.pair_count = doc.at("encoder_fit").at("pair_count").get<std::size_t>();

        const json& protocol = doc.at("protocol");
        db.protocol.record_overhead = protocol.at("record_overhead").get<std::uint32_t>();
        db.protocol.response_header_base =
            protocol.at("response_header_base").get<std::uint32_t>();
        for (const auto& [os, mrp] : protocol.at("os_record_payload").items())
            db.protocol.os_record_payload[os] = mrp.get<std::uint32_t>();
        for (const json& row : protocol.at("user_agent_strings"))
            db.protocol.user_agent_strings[{row.at(0).get<std::string>(),
                                            row.at(1).get<std::string>()}] =
                row.at(2).get<std::string>();

        db.consumed_queries = doc.at("consumed_queries").get<std::int64_t>();
        return db;
    } catch (const json::exception& e) {
        throw ParseError("malformed database document: " + std::string(e.what()));
    }
}

void save_traces(const std::vector<SessionRecord>& sessions, const std::filesystem::path& path,
                 bool blind) {
    std::string out = header_line("trace-set").dump() + "\n";
    for (const SessionRecord& s : sessions) {
        json line;
        line["context"] = context_to_json(s.context);
        json trace = trace_to_json(s.trace);
        line["sub_traces"] = trace.at("sub_traces");
        if (trace.contains("context_hint"))
            line["context_hint"] = trace.at("context_hint");
        if (!blind && s.ground_truth)
            line["ground_truth"] = ground_truth_to_json(*s.ground_truth);
        out += line.dump() + "\n";
    }
    atomic_write(path, out);
}

std::vector<SessionRecord> load_traces(const std::filesystem::path& path) {
    std::string text = read_file(path);
    std::vector<SessionRecord> sessions;
    std::uint64_t offset = 0;
    std::size_t line_no = 0;
    std::istringstream in(text);
    std::string line;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty()) {
            // e.byte inside a line is relative; report the absolute offset.
            json doc = parse_document(line, offset);
            try {
                if (!saw_header) {
                    check_schema(doc, "trace-set");
                    saw_header = true;
                } else {
                    SessionRecord record;
                    record.context = context_from_json(doc.at("context"));
                    json trace{{"sub_traces", doc.at("sub_traces")}};
                    if (doc.contains("context_hint"))
                        trace["context_hint"] = doc.at("context_hint");
                    record.trace = trace_from_json(trace);
                    if (doc.contains("ground_truth"))
                        record.ground_truth = ground_truth_from_json(doc.at("ground_truth"));
                    sessions.push_back(std::move(record));
                }
            } catch (const json::exception& e) {
                throw ParseError("malformed trace line " + std::to_string(line_no) + ": " +
                                 e.what());
            }
        }
        offset += line.size() + 1;
    }
    if (!saw_header)
        throw ParseError("trace file has no header line");
    return sessions;
}

void save_experiment_spec(const eval::ExperimentSpec& spec, const std::filesystem::path& path) {
    json doc;
    doc["kind"] = "experiment-spec";
    doc["schema_version"] = schema_version;

    json factors;
    factors["page_subset"] = spec.factors.page_subset;
    json configs = json::array();
    for (const auto& [cache, cookies] : spec.factors.browsing_configs)
        configs.push_back(json::array({cache, cookies}));
    factors["browsing_configs"] = configs;
    factors["tab_counts"] = spec.factors.tab_counts;
    factors["os_list"] = spec.factors.os_list;
    factors["browser_list"] = spec.factors.browser_list;
    json networks = json::array();
    for (const sim::NetworkProfile& n : spec.factors.network_profiles)
        networks.push_back(network_to_json(n));
    factors["network_profiles"] = networks;
    doc["factors"] = factors;

    doc["samples_per_page"] = spec.samples_per_page;
    doc["budget"] = spec.budget;
    doc["sessions_per_cell"] = spec.sessions_per_cell;
    doc["pages_per_session"] = spec.pages_per_session;
    doc["seed"] = spec.seed;
    doc["profiling_context"] = context_to_json(spec.profiling_context);
    json variants = json::array();
    for (const prof::ProfilingVariant& v : spec.profiling_variants)
        variants.push_back(json::array({v.cache_enabled, v.cookies_allowed}));
    doc["profiling_variants"] = variants;
    doc["provide_bo_hint"] = spec.provide_bo_hint;
    doc["provide_cache_hint"] = spec.provide_cache_hint;

    atomic_write(path, doc.dump(2) + "\n");
}

eval::ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
    json doc = parse_document(read_file(path));
    check_schema(doc, "experiment-spec");
    try {
        eval::ExperimentSpec spec;
        const json& factors = doc.at("factors");
        spec.factors.page_subset = factors.at("page_subset").get<std::vector<std::string>>();
        for (const json& c : factors.at("browsing_configs"))
            spec.factors.browsing_configs.emplace_back(c.at(0).get<bool>(), c.at(1).get<bool>());
        spec.factors.tab_counts = factors.at("tab_counts").get<std::vector<int>>();
        spec.factors.os_list = factors.at("os_list").get<std::vector<std::string>>();
        spec.factors.browser_list = factors.at("browser_list").get<std::vector<std::string>>();
        for (const json& n : factors.at("network_profiles"))
            spec.factors.network_profiles.push_back(network_from_json(n));

        spec.samples_per_page = doc.at("samples_per_page").get<int>();
        spec.budget = doc.at("budget").get<std::uint64_t>();
        spec.sessions_per_cell = doc.at("sessions_per_cell").get<std::uint32_t>();
        spec.pages_per_session = doc.at("pages_per_session").get<int>();
        spec.seed = doc.at("seed").get<std::uint64_t>();
        spec.profiling_context = context_from_json(doc.at("profiling_context"));
        spec.profiling_variants.clear();
        for (const json& v : doc.at("profiling_variants"))
            spec.profiling_variants.push_back({v.at(0).get<bool>(), v.at(1).get<bool>()});
        spec.provide_bo_hint = doc.at("provide_bo_hint").get<bool>();
        spec.provide_cache_hint = doc.at("provide_cache_hint").get<bool>();
        return spec;
    } catch (const json::exception& e) {
        throw ParseError("malformed experiment spec: " + std::string(e.what()));
    }
}

void save_predictions(const std::vector<pred::PredictionResult>& results,
                      const std::filesystem::path& path) {
    std::string out = header_line("prediction-set").dump() + "\n";
    for (const pred::PredictionResult& r : results) {
        json line;
        line["predicted_webpages"] =
            std::vector<std::string>(r.predicted_webpages.begin(), r.predicted_webpages.end());
        line["extraction_order"] = r.extraction_order;
        line["unmatched_heads"] = r.unmatched_heads;
        json resources = json::array();
        for (const pred::ResolvedEntry& e : r.predicted_resources) {
            json entry{{"index", e.index}};
            switch (e.status) {
            case pred::ResourceStatus::identified:
                entry["status"] = "identified";
                entry["resource_id"] = e.resource_id;
                break;
            case pred::ResourceStatus::unidentified_incomplete:
                entry["status"] = "unidentified_incomplete";
                break;
            case pred::ResourceStatus::unidentified_conflict:
                entry["status"] = "unidentified_conflict";
                break;
            }
            resources.push_back(std::move(entry));
        }
        line["resources"] = resources;
        out += line.dump() + "\n";
    }
    atomic_write(path, out);
}

namespace {

std::string csv_escape(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::string fmt2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

} // namespace

void save_report_csv(const eval::AccuracyReport& report, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "os,browser,cache,cookies,tabs,delay_min_ms,delay_max_ms,drop_probability,retransmit,"
           "sessions,fa_percent,pages_accessed,accurately_identified_pct,wrongly_identified_pct,"
           "not_identified_pct,resources_total,accurate_pct,incomplete_pct,conflict_pct,note\n";
    for (const eval::CellResult& cell : report.cells) {
        const eval::CellKey& k = cell.key;
        out << k.os << ',' << k.browser << ',' << (k.cache_enabled ? "on" : "off") << ','
            << (k.cookies_allowed ? "on" : "off") << ',' << k.tab_count << ','
            << k.network.delay_min_ms << ',' << k.network.delay_max_ms << ','
            << k.network.drop_probability << ',' << (k.network.retransmit ? 1 : 0) << ','
            << cell.sessions << ',' << fmt2(cell.fa_percent) << ',' << cell.webpages.accessed
            << ',' << fmt2(cell.webpages.accurately_identified_pct()) << ','
            << fmt2(cell.webpages.wrongly_identified_pct()) << ','
            << fmt2(cell.webpages.not_identified_pct()) << ',' << cell.resources.total << ','
            << fmt2(cell.resources.accurate_pct()) << ',' << fmt2(cell.resources.incomplete_pct())
            << ',' << fmt2(cell.resources.conflict_pct()) << ',' << csv_escape(cell.note) << '\n';
    }
    out << "overall,,,,,,,,," << report.cells.size() << ',' << fmt2(report.fa_percent) << ','
        << report.webpages.accessed << ',' << fmt2(report.webpages.accurately_identified_pct())
        << ',' << fmt2(report.webpages.wrongly_identified_pct()) << ','
        << fmt2(report.webpages.not_identified_pct()) << ',' << report.resources.total << ','
        << fmt2(report.resources.accurate_pct()) << ',' << fmt2(report.resources.incomplete_pct())
        << ',' << fmt2(report.resources.conflict_pct()) << ','
        << csv_escape("consumed_queries=" + std::to_string(report.consumed_queries)) << '\n';
    atomic_write(path, out.str());
}

} // namespace snoopy::io
