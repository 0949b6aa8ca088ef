#ifndef SNOOPY_SITE_MODEL_HPP
#define SNOOPY_SITE_MODEL_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace snoopy::site {

enum class ContentKind { text, binary };

// One downloadable object served by the website. A tracking cookie can only
// be embedded in textual content, which validate() enforces.
struct Resource {
    std::string id;
    std::uint64_t plaintext_size = 1;
    ContentKind content_kind = ContentKind::binary;
    bool cacheable = false;
    bool carries_tracking_cookie = false;

    bool operator==(const Resource&) const = default;
};

// A page is identified by the normalized path of its root document. The
// download sequence starts with that root document and then lists embedded
// resources in document order.
struct Webpage {
    std::string id;
    std::string url;
    std::vector<std::string> download_sequence;

    bool operator==(const Webpage&) const = default;
};

// Hyperlink graph plus the bipartite page<->resource relation. `resource_map`
// is kept explicitly (page id -> sorted resource ids) and must stay consistent
// with the download sequences; validate() checks that.
class Website {
public:
    std::vector<Webpage> pages;
    std::vector<Resource> resources;
    std::set<std::pair<std::string, std::string>> edges;
    std::map<std::string, std::vector<std::string>> resource_map;

    // Rebuilds resource_map and the lookup indexes from pages/resources.
    // Call after mutating the public containers.
    void finalize();

    // Throws std::invalid_argument when any structural invariant is broken:
    // empty download sequences, dangling resource or edge references,
    // unmapped resources, tracking cookies on binary content, or a
    // resource_map that disagrees with the download sequences.
    void validate() const;

    const Webpage* find_page(const std::string& id) const;
    const Resource* find_resource(const std::string& id) const;
    const Webpage& page_at(const std::string& id) const;      // throws if unknown
    const Resource& resource_at(const std::string& id) const; // throws if unknown

    // Sorted ids of the pages whose download sequence contains the resource.
    const std::vector<std::string>& pages_of(const std::string& resource_id) const;

    bool operator==(const Website& other) const;

private:
    std::map<std::string, std::size_t> page_index_;
    std::map<std::string, std::size_t> resource_index_;
    std::map<std::string, std::vector<std::string>> pages_of_;
    static const std::vector<std::string> empty_;
};

struct SizeDistribution {
    enum class Kind {
        uniform,          // independent draws in [min_bytes, max_bytes]
        distinct_uniform, // draws without replacement: all sizes unique
    };
    Kind kind = Kind::uniform;
    std::uint64_t min_bytes = 1;
    std::uint64_t max_bytes = 1;
};

struct SiteSpec {
    int page_count = 1;
    int resources_per_page_min = 1;
    int resources_per_page_max = 1;
    double shared_resource_fraction = 0.0; // fraction of resources on >= 2 pages
    SizeDistribution size_distribution;
    double edge_density = 0.0;             // probability per ordered page pair
    double cacheable_fraction = 0.0;       // applied to embedded resources
    double tracking_cookie_fraction = 0.0; // applied to root documents
    std::uint64_t rng_seed = 0;
};

// Deterministic synthetic site generator. Root documents are textual and
// non-cacheable; embedded resources are binary. Any positive edge density
// includes a page cycle so the link graph stays strongly connected.
// Throws InfeasibleSpecError when no assignment can satisfy the spec.
Website generate_synthetic_site(const SiteSpec& spec);

// Builds a Website from a directory of hypertext documents. Pages are *.html /
// *.htm files; edges come from href links between them and embedded resources
// from img/script/link references. A `site-meta.json` sidecar can override
// cacheable / tracking-cookie attributes; absent metadata defaults to
// cacheable=true for non-root resources and tracking cookies on root documents.
// Unresolvable references are reported through `warnings` and skipped.
Website ingest_site(const std::filesystem::path& corpus_root, const std::string& base_url,
                    std::vector<std::string>* warnings = nullptr);

// Writes a website back out as a document corpus that ingest_site can read,
// padding each file to its declared plaintext size. Throws when a root
// document's markup cannot fit within its plaintext size.
void write_site_corpus(const Website& site, const std::filesystem::path& dir);

// Pages consistent with a browsing history: the visited set plus every direct
// successor of a visited page. An empty history yields all pages.
std::set<std::string> reachable_pages(const Website& site, const std::set<std::string>& visited);

// Restriction of the site to a page subset (edges and resources induced).
Website induced_subsite(const Website& site, const std::set<std::string>& page_ids);

} // namespace snoopy::site

#endif // SNOOPY_SITE_MODEL_HPP
