#include "snoopy/site_model.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

#include "json.hpp"

#include "snoopy/errors.hpp"
#include "snoopy/rng.hpp"

namespace fs = std::filesystem;

namespace snoopy::site {

const std::vector<std::string> Website::empty_{};

void Website::finalize() {
    std::sort(pages.begin(), pages.end(),
              [](const Webpage& a, const Webpage& b) { return a.id < b.id; });
    std::sort(resources.begin(), resources.end(),
              [](const Resource& a, const Resource& b) { return a.id < b.id; });

    page_index_.clear();
    resource_index_.clear();
    resource_map.clear();
    pages_of_.clear();

    for (std::size_t i = 0; i < pages.size(); ++i)
        page_index_[pages[i].id] = i;
    for (std::size_t i = 0; i < resources.size(); ++i)
        resource_index_[resources[i].id] = i;

    for (const Webpage& p : pages) {
        std::vector<std::string> ids(p.download_sequence);
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        resource_map[p.id] = ids;
        for (const std::string& r : ids)
            pages_of_[r].push_back(p.id);
    }
    for (auto& [_, v] : pages_of_)
        std::sort(v.begin(), v.end());
}

void Website::validate() const {
    if (pages.empty())
        throw std::invalid_argument("website has no pages");
    for (const Webpage& p : pages) {
        if (p.download_sequence.empty())
            throw std::invalid_argument("page has empty download sequence: " + p.id);
        for (const std::string& r : p.download_sequence)
            if (resource_index_.find(r) == resource_index_.end())
                throw std::invalid_argument("page " + p.id + " references unknown resource: " + r);
    }
    for (const Resource& r : resources) {
        if (r.plaintext_size < 1)
            throw std::invalid_argument("resource has zero plaintext size: " + r.id);
        if (r.carries_tracking_cookie && r.content_kind != ContentKind::text)
            throw std::invalid_argument("tracking cookie on non-text resource: " + r.id);
        if (pages_of_.find(r.id) == pages_of_.end())
            throw std::invalid_argument("resource mapped to no page: " + r.id);
    }
    for (const auto& [u, v] : edges) {
        if (page_index_.find(u) == page_index_.end())
            throw std::invalid_argument("edge references unknown page: " + u);
        if (page_index_.find(v) == page_index_.end())
            throw std::invalid_argument("edge references unknown page: " + v);
    }
    // The stored bipartite map must agree with the download sequences.
    std::map<std::string, std::vector<std::string>> derived;
    for (const Webpage& p : pages) {
        std::vector<std::string> ids(p.download_sequence);
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        derived[p.id] = ids;
    }
    if (derived != resource_map)
        throw std::invalid_argument("resource_map disagrees with download sequences");
}

const Webpage* Website::find_page(const std::string& id) const {
    auto it = page_index_.find(id);
    return it == page_index_.end() ? nullptr : &pages[it->second];
}

const Resource* Website::find_resource(const std::string& id) const {
    auto it = resource_index_.find(id);
    return it == resource_index_.end() ? nullptr : &resources[it->second];
}

const Webpage& Website::page_at(const std::string& id) const {
    const Webpage* p = find_page(id);
    if (!p)
        throw std::invalid_argument("unknown page: " + id);
    return *p;
}

const Resource& Website::resource_at(const std::string& id) const {
    const Resource* r = find_resource(id);
    if (!r)
        throw std::invalid_argument("unknown resource: " + id);
    return *r;
}

const std::vector<std::string>& Website::pages_of(const std::string& resource_id) const {
    auto it = pages_of_.find(resource_id);
    return it == pages_of_.end() ? empty_ : it->second;
}

bool Website::operator==(const Website& other) const {
    return pages == other.pages && resources == other.resources && edges == other.edges &&
           resource_map == other.resource_map;
}

// ---------------------------------------------------------------------------
// Synthetic generation
// ---------------------------------------------------------------------------

namespace {

std::string zero_pad(int value, int width) {
    std::string s = std::to_string(value);
    while (static_cast<int>(s.size()) < width)
        s.insert(s.begin(), '0');
    return s;
}

// Chooses how many resources should sit on >= 2 pages so that the realized
// fraction matches the requested one as closely as integer counts allow.
// n = page count (roots, never shared), e = embedded slots.
int solve_shared_count(double fraction, int n, int e) {
    if (fraction <= 0.0)
        return 0;
    int best_s = -1;
    double best_dev = 1e18;
    for (int s = 0; s <= e / 2; ++s) {
        // s shared resources each used twice leaves e - 2s single-use ones,
        // so the distinct resource count is n + e - s.
        double target = fraction * static_cast<double>(n + e - s);
        double dev = std::abs(static_cast<double>(s) - target);
        if (dev < best_dev) {
            best_dev = dev;
            best_s = s;
        }
    }
    if (best_s < 0 || best_dev > 1.0)
        throw InfeasibleSpecError("shared_resource_fraction " + std::to_string(fraction) +
                                  " is unreachable with " + std::to_string(n) + " pages and " +
                                  std::to_string(e) + " embedded slots");
    return best_s;
}

std::vector<std::uint64_t> draw_sizes(const SizeDistribution& dist, std::size_t count, Rng& rng) {
    if (dist.min_bytes < 1 || dist.max_bytes < dist.min_bytes)
        throw InfeasibleSpecError("invalid size distribution bounds");
    std::vector<std::uint64_t> out;
    out.reserve(count);
    if (dist.kind == SizeDistribution::Kind::distinct_uniform) {
        std::uint64_t span = dist.max_bytes - dist.min_bytes + 1;
        if (span < count)
            throw InfeasibleSpecError("size range too narrow for " + std::to_string(count) +
                                      " distinct sizes");
        std::set<std::uint64_t> used;
        while (out.size() < count) {
            std::uint64_t v = dist.min_bytes + rng.below(span);
            if (used.insert(v).second)
                out.push_back(v);
        }
    } else {
        for (std::size_t i = 0; i < count; ++i)
            out.push_back(dist.min_bytes + rng.below(dist.max_bytes - dist.min_bytes + 1));
    }
    return out;
}

} // namespace

Website generate_synthetic_site(const SiteSpec& spec) {
    if (spec.page_count < 1)
        throw InfeasibleSpecError("page_count must be >= 1");
    if (spec.resources_per_page_min < 1 || spec.resources_per_page_max < spec.resources_per_page_min)
        throw InfeasibleSpecError("invalid resources_per_page range");
    for (double f : {spec.shared_resource_fraction, spec.edge_density, spec.cacheable_fraction,
                     spec.tracking_cookie_fraction})
        if (f < 0.0 || f > 1.0)
            throw InfeasibleSpecError("fractions must lie in [0, 1]");

    Rng rng(spec.rng_seed);
    const int n = spec.page_count;
    const int id_width = std::max(2, static_cast<int>(std::to_string(n - 1).size()));

    // Page identities look like relative document paths so a written corpus
    // round-trips through ingest_site. Random slugs vary the URL lengths.
    std::vector<std::string> page_ids;
    std::vector<int> slots; // embedded resources per page
    int embedded_total = 0;
    for (int i = 0; i < n; ++i) {
        std::string slug;
        int slug_len = static_cast<int>(rng.range(0, 6));
        for (int c = 0; c < slug_len; ++c)
            slug.push_back(static_cast<char>('a' + rng.below(26)));
        std::string id = "p" + zero_pad(i, id_width);
        if (!slug.empty())
            id += "-" + slug;
        id += ".html";
        page_ids.push_back(id);
        int k = static_cast<int>(rng.range(spec.resources_per_page_min, spec.resources_per_page_max));
        slots.push_back(k - 1);
        embedded_total += k - 1;
    }

    const int shared = solve_shared_count(spec.shared_resource_fraction, n, embedded_total);
    if (shared > 0 && n < 2)
        throw InfeasibleSpecError("sharing requires at least two pages");
    const int singles = embedded_total - 2 * shared;
    const int distinct_embedded = shared + singles;

    std::vector<std::uint64_t> sizes =
        draw_sizes(spec.size_distribution, static_cast<std::size_t>(n + distinct_embedded), rng);

    Website site;
    std::vector<std::vector<std::string>> embedded(n);

    const int e_width =
        std::max(3, static_cast<int>(std::to_string(std::max(0, distinct_embedded - 1)).size()));
    int next_embedded = 0;
    auto new_embedded_resource = [&]() {
        Resource r;
        r.id = "e" + zero_pad(next_embedded, e_width) + ".bin";
        r.plaintext_size = sizes[static_cast<std::size_t>(n + next_embedded)];
        r.content_kind = ContentKind::binary;
        r.cacheable = rng.bernoulli(spec.cacheable_fraction);
        r.carries_tracking_cookie = false;
        ++next_embedded;
        site.resources.push_back(r);
        return site.resources.back().id;
    };

    std::vector<int> free_slots(slots);
    for (int s = 0; s < shared; ++s) {
        // First page: among those with the most free slots; second: any other
        // page with a free slot. Max-first keeps the placement feasible.
        int max_free = *std::max_element(free_slots.begin(), free_slots.end());
        if (max_free < 1)
            throw InfeasibleSpecError("no embedded slots left for shared resources");
        std::vector<int> first_choices;
        for (int i = 0; i < n; ++i)
            if (free_slots[i] == max_free)
                first_choices.push_back(i);
        int a = first_choices[rng.below(first_choices.size())];
        std::vector<int> second_choices;
        for (int i = 0; i < n; ++i)
            if (i != a && free_slots[i] > 0)
                second_choices.push_back(i);
        if (second_choices.empty())
            throw InfeasibleSpecError("cannot place a shared resource on two distinct pages");
        int b = second_choices[rng.below(second_choices.size())];
        std::string rid = new_embedded_resource();
        embedded[a].push_back(rid);
        embedded[b].push_back(rid);
        --free_slots[a];
        --free_slots[b];
    }
    for (int i = 0; i < n; ++i)
        while (free_slots[i] > 0) {
            embedded[i].push_back(new_embedded_resource());
            --free_slots[i];
        }

    for (int i = 0; i < n; ++i) {
        Resource root;
        root.id = page_ids[i];
        root.plaintext_size = sizes[static_cast<std::size_t>(i)];
        root.content_kind = ContentKind::text;
        root.cacheable = false;
        root.carries_tracking_cookie = rng.bernoulli(spec.tracking_cookie_fraction);
        site.resources.push_back(root);

        Webpage page;
        page.id = page_ids[i];
        page.url = "/" + page_ids[i];
        page.download_sequence.push_back(root.id);
        rng.shuffle(embedded[i]);
        for (const std::string& rid : embedded[i])
            page.download_sequence.push_back(rid);
        site.pages.push_back(page);
    }

    if (spec.edge_density > 0.0 && n > 1) {
        // Base cycle guarantees strong connectivity, so sampled walks of any
        // length stay feasible; extra edges are sprinkled by density.
        for (int i = 0; i < n; ++i)
            site.edges.insert({page_ids[i], page_ids[(i + 1) % n]});
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (i == j || (j == (i + 1) % n))
                    continue;
                if (rng.bernoulli(spec.edge_density))
                    site.edges.insert({page_ids[i], page_ids[j]});
            }
    }

    site.finalize();
    site.validate();
    return site;
}

// ---------------------------------------------------------------------------
// Corpus ingestion
// ---------------------------------------------------------------------------

namespace {

bool has_extension(const fs::path& p, std::initializer_list<const char*> exts) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (const char* want : exts)
        if (e == want)
            return true;
    return false;
}

bool is_hypertext(const fs::path& p) { return has_extension(p, {".html", ".htm"}); }

bool is_textual(const fs::path& p) {
    return has_extension(p, {".html", ".htm", ".js", ".css", ".txt", ".json", ".svg", ".xml"});
}

// Pulls (tag, attribute-value) references out of a document: href of <a>/<link>
// and src of <img>/<script>, in document order. Deliberately minimal: enough
// for well-formed corpora; anything odd is simply not matched.
std::vector<std::pair<std::string, std::string>> scan_references(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] != '<') {
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        std::string tag;
        while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j])))
            tag.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[j++]))));
        std::size_t end = text.find('>', j);
        if (end == std::string::npos)
            break;
        std::string want;
        if (tag == "a" || tag == "link")
            want = "href";
        else if (tag == "img" || tag == "script")
            want = "src";
        if (!want.empty()) {
            std::string attrs = text.substr(j, end - j);
            std::string lowered = attrs;
            std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                           [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
            std::size_t pos = 0;
            while ((pos = lowered.find(want, pos)) != std::string::npos) {
                std::size_t k = pos + want.size();
                while (k < attrs.size() && std::isspace(static_cast<unsigned char>(attrs[k])))
                    ++k;
                if (k >= attrs.size() || attrs[k] != '=') {
                    pos = k;
                    continue;
                }
                ++k;
                while (k < attrs.size() && std::isspace(static_cast<unsigned char>(attrs[k])))
                    ++k;
                if (k < attrs.size() && (attrs[k] == '"' || attrs[k] == '\'')) {
                    char quote = attrs[k++];
                    std::size_t close = attrs.find(quote, k);
                    if (close != std::string::npos)
                        out.emplace_back(tag, attrs.substr(k, close - k));
                } else {
                    std::size_t close = k;
                    while (close < attrs.size() &&
                           !std::isspace(static_cast<unsigned char>(attrs[close])))
                        ++close;
                    if (close > k)
                        out.emplace_back(tag, attrs.substr(k, close - k));
                }
                break;
            }
        }
        i = end + 1;
    }
    return out;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in)
        throw std::system_error(errno, std::generic_category(), p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void warn(std::vector<std::string>* warnings, const std::string& msg) {
    if (warnings)
        warnings->push_back(msg);
}

} // namespace

Website ingest_site(const fs::path& corpus_root, const std::string& base_url,
                    std::vector<std::string>* warnings) {
    if (!fs::is_directory(corpus_root))
        throw std::invalid_argument("corpus root is not a directory: " + corpus_root.string());

    std::string base = base_url;
    while (!base.empty() && base.back() == '/')
        base.pop_back();

    // Sorted relative paths keep ingestion order-independent of the
    // filesystem's directory iteration order.
    std::vector<std::string> rel_files;
    for (const auto& entry : fs::recursive_directory_iterator(corpus_root))
        if (entry.is_regular_file())
            rel_files.push_back(entry.path().lexically_relative(corpus_root).generic_string());
    std::sort(rel_files.begin(), rel_files.end());

    std::set<std::string> file_set(rel_files.begin(), rel_files.end());
    std::vector<std::string> page_paths;
    for (const std::string& f : rel_files)
        if (is_hypertext(f) && f != "site-meta.json")
            page_paths.push_back(f);
    if (page_paths.empty())
        throw std::invalid_argument("corpus contains no hypertext documents: " +
                                    corpus_root.string());

    auto resolve = [&](const std::string& page_rel, const std::string& target,
                       std::string& out) -> bool {
        if (target.empty() || target[0] == '#' || target.find("://") != std::string::npos ||
            target.rfind("mailto:", 0) == 0)
            return false;
        fs::path resolved = (fs::path(page_rel).parent_path() / target).lexically_normal();
        std::string rel = resolved.generic_string();
        if (rel.rfind("..", 0) == 0)
            return false;
        out = rel;
        return true;
    };

    Website site;
    std::set<std::string> resource_ids;

    for (const std::string& page_rel : page_paths) {
        std::string text = read_file(corpus_root / page_rel);
        Webpage page;
        page.id = page_rel;
        page.url = (base.empty() ? "" : base) + "/" + page_rel;
        page.download_sequence.push_back(page_rel); // root document first
        resource_ids.insert(page_rel);

        std::set<std::string> seen{page_rel};
        for (const auto& [tag, target] : scan_references(text)) {
            std::string rel;
            if (!resolve(page_rel, target, rel)) {
                warn(warnings, page_rel + ": skipping external or invalid reference '" + target + "'");
                continue;
            }
            if (tag == "a") {
                if (!is_hypertext(rel)) {
                    warn(warnings, page_rel + ": link target is not a document: " + rel);
                    continue;
                }
                if (!file_set.count(rel)) {
                    warn(warnings, page_rel + ": link target missing from corpus: " + rel);
                    continue;
                }
                site.edges.insert({page_rel, rel});
            } else {
                if (!file_set.count(rel)) {
                    warn(warnings, page_rel + ": referenced resource missing from corpus: " + rel);
                    continue;
                }
                if (seen.insert(rel).second) {
                    page.download_sequence.push_back(rel);
                    resource_ids.insert(rel);
                }
            }
        }
        site.pages.push_back(page);
    }

    std::set<std::string> roots;
    for (const std::string& p : page_paths)
        roots.insert(p);

    for (const std::string& rid : resource_ids) {
        Resource r;
        r.id = rid;
        std::uint64_t size = fs::file_size(corpus_root / rid);
        if (size < 1) {
            warn(warnings, rid + ": empty file, assuming 1 byte");
            size = 1;
        }
        r.plaintext_size = size;
        r.content_kind = is_textual(rid) ? ContentKind::text : ContentKind::binary;
        if (roots.count(rid)) {
            r.cacheable = false;
            r.carries_tracking_cookie = true; // default: trackers live in root documents
        } else {
            r.cacheable = true;
            r.carries_tracking_cookie = false;
        }
        site.resources.push_back(r);
    }

    // Optional sidecar overriding per-resource attributes.
    fs::path meta_path = corpus_root / "site-meta.json";
    if (fs::exists(meta_path)) {
        nlohmann::json meta;
        try {
            meta = nlohmann::json::parse(read_file(meta_path));
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError("site-meta.json: " + std::string(e.what()));
        }
        if (meta.contains("resources"))
            for (auto& [rid, attrs] : meta["resources"].items()) {
                auto it = std::find_if(site.resources.begin(), site.resources.end(),
                                       [&](const Resource& r) { return r.id == rid; });
                if (it == site.resources.end()) {
                    warn(warnings, "site-meta.json names unknown resource: " + rid);
                    continue;
                }
                if (attrs.contains("cacheable"))
                    it->cacheable = attrs["cacheable"].get<bool>();
                if (attrs.contains("tracking_cookie")) {
                    bool want = attrs["tracking_cookie"].get<bool>();
                    if (want && it->content_kind != ContentKind::text) {
                        warn(warnings, rid + ": tracking cookie on binary content ignored");
                        want = false;
                    }
                    it->carries_tracking_cookie = want;
                }
            }
    }

    site.finalize();
    site.validate();
    return site;
}

void write_site_corpus(const Website& site, const fs::path& dir) {
    fs::create_directories(dir);

    std::set<std::string> roots;
    for (const Webpage& p : site.pages)
        roots.insert(p.download_sequence.front());

    for (const Webpage& p : site.pages) {
        std::ostringstream body;
        body << "<html><head><title>" << p.id << "</title></head><body>\n";
        for (const auto& [u, v] : site.edges)
            if (u == p.id) {
                fs::path rel = fs::path(v).lexically_relative(fs::path(p.id).parent_path());
                body << "<a href=\"" << rel.generic_string() << "\">link</a>\n";
            }
        for (std::size_t i = 1; i < p.download_sequence.size(); ++i) {
            const std::string& rid = p.download_sequence[i];
            fs::path rel = fs::path(rid).lexically_relative(fs::path(p.id).parent_path());
            if (site.resource_at(rid).content_kind == ContentKind::text && !roots.count(rid))
                body << "<script src=\"" << rel.generic_string() << "\"></script>\n";
            else
                body << "<img src=\"" << rel.generic_string() << "\">\n";
        }
        body << "</body></html>\n";

        std::string content = body.str();
        std::uint64_t target = site.resource_at(p.id).plaintext_size;
        if (content.size() > target)
            throw std::invalid_argument("root document " + p.id + " markup (" +
                                        std::to_string(content.size()) +
                                        " bytes) exceeds its plaintext size (" +
                                        std::to_string(target) + ")");
        std::uint64_t pad = target - content.size();
        if (pad >= 8)
            content += "<!--" + std::string(static_cast<std::size_t>(pad - 7), 'x') + "-->";
        else
            content += std::string(static_cast<std::size_t>(pad), '\n');

        fs::path out = dir / p.id;
        fs::create_directories(out.parent_path());
        std::ofstream f(out, std::ios::binary);
        if (!f)
            throw std::system_error(errno, std::generic_category(), out.string());
        f << content;
    }

    for (const Resource& r : site.resources) {
        if (roots.count(r.id))
            continue;
        fs::path out = dir / r.id;
        fs::create_directories(out.parent_path());
        std::ofstream f(out, std::ios::binary);
        if (!f)
            throw std::system_error(errno, std::generic_category(), out.string());
        f << std::string(static_cast<std::size_t>(r.plaintext_size), 'x');
    }

    nlohmann::json meta;
    for (const Resource& r : site.resources)
        meta["resources"][r.id] = {{"cacheable", r.cacheable},
                                   {"tracking_cookie", r.carries_tracking_cookie}};
    std::ofstream mf(dir / "site-meta.json", std::ios::binary);
    mf << meta.dump(2) << "\n";
}

std::set<std::string> reachable_pages(const Website& site, const std::set<std::string>& visited) {
    std::set<std::string> out;
    if (visited.empty()) {
        for (const Webpage& p : site.pages)
            out.insert(p.id);
        return out;
    }
    for (const std::string& v : visited)
        if (site.find_page(v))
            out.insert(v);
    for (const auto& [u, v] : site.edges)
        if (visited.count(u))
            out.insert(v);
    return out;
}

Website induced_subsite(const Website& site, const std::set<std::string>& page_ids) {
    Website out;
    for (const std::string& id : page_ids)
        out.pages.push_back(site.page_at(id)); // throws on unknown page
    std::set<std::string> keep;
    for (const Webpage& p : out.pages)
        for (const std::string& r : p.download_sequence)
            keep.insert(r);
    for (const Resource& r : site.resources)
        if (keep.count(r.id))
            out.resources.push_back(r);
    for (const auto& e : site.edges)
        if (page_ids.count(e.first) && page_ids.count(e.second))
            out.edges.insert(e);
    out.finalize();
    out.validate();
    return out;
}

} // namespace snoopy::site
