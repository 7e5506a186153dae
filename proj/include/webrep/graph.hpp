#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "webrep/common.hpp"

namespace webrep {

// Dense ids, contiguous within each partition. User and URL ids live in
// disjoint namespaces even though both are plain integers.
using UserId = std::int32_t;
using UrlId = std::int32_t;

enum class EngagementKind : std::uint8_t { Favorite = 0, Reply = 1, Retweet = 2, Share = 3 };

const char* to_string(EngagementKind k);
EngagementKind parse_engagement_kind(const std::string& s);  // throws ValidationError

struct EngagementEdge {
    UserId user = 0;
    UrlId url = 0;
    std::uint8_t kinds = 0;    // bitmask over EngagementKind; non-empty by construction
    std::int64_t count = 1;    // total engagement count, >= 1

    bool has_kind(EngagementKind k) const { return kinds & (1u << static_cast<int>(k)); }
};

// Immutable bipartite user<->URL engagement graph. Duplicate (user, url)
// records are merged at construction: kinds are unioned, counts summed.
class BipartiteGraph {
public:
    BipartiteGraph() = default;

    // Edges may contain duplicates; they are merged. Ids must be in range.
    BipartiteGraph(int num_users, int num_urls, std::vector<EngagementEdge> edges,
                   std::vector<std::string> user_names = {}, std::vector<std::string> url_names = {});

    int num_users() const { return num_users_; }
    int num_urls() const { return num_urls_; }
    const std::vector<EngagementEdge>& edges() const { return edges_; }

    // Distinct merged edges incident to the node.
    const std::vector<std::int64_t>& user_degrees() const { return user_degrees_; }
    const std::vector<std::int64_t>& url_degrees() const { return url_degrees_; }

    // Total engagement counts (sum of edge counts); the intensity signal
    // used for count-proportional sampling.
    const std::vector<std::int64_t>& user_weights() const { return user_weights_; }
    const std::vector<std::int64_t>& url_weights() const { return url_weights_; }

    // Per-user sorted URL adjacency.
    const std::vector<UrlId>& adjacency(UserId u) const;
    bool has_edge(UserId u, UrlId w) const;

    std::int64_t total_count() const { return total_count_; }

    // Original string ids when the graph came from a file; empty for
    // synthetic graphs (dense ids are their own names).
    const std::vector<std::string>& user_names() const { return user_names_; }
    const std::vector<std::string>& url_names() const { return url_names_; }

private:
    int num_users_ = 0;
    int num_urls_ = 0;
    std::vector<EngagementEdge> edges_;                // sorted by (user, url)
    std::vector<std::vector<UrlId>> adjacency_;        // per user, sorted
    std::vector<std::int64_t> user_degrees_, url_degrees_;
    std::vector<std::int64_t> user_weights_, url_weights_;
    std::int64_t total_count_ = 0;
    std::vector<std::string> user_names_, url_names_;
};

// Edge-list format: UTF-8 TSV, one edge per line,
//   user_id <TAB> url_id <TAB> kind <TAB> count
// '#'-prefixed lines are comments. String ids are remapped to dense ids in
// first-appearance order; the mapping is persisted alongside as two
// two-column TSV sidecars (<path>.users.idmap.tsv, <path>.urls.idmap.tsv).
BipartiteGraph load_edges(const std::string& path);

// Writes the canonical edge list plus id-map sidecars. load_edges(save_edges(g))
// reproduces the graph up to id remapping.
void save_edges(const BipartiteGraph& g, const std::string& path);

struct SideStats {
    std::int64_t min = 0;
    std::int64_t median = 0;
    std::int64_t p95 = 0;
    std::int64_t max = 0;
};

struct DegreeStats {
    SideStats users;
    SideStats urls;
};

// Exact order statistics (nearest-rank, no interpolation) over per-node
// distinct-edge degrees. Throws ValidationError on an empty graph.
DegreeStats degree_stats(const BipartiteGraph& g);

}  // namespace webrep
