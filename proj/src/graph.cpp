#include "webrep/graph.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace webrep {

const char* to_string(EngagementKind k) {
    switch (k) {
        case EngagementKind::Favorite: return "Favorite";
        case EngagementKind::Reply: return "Reply";
        case EngagementKind::Retweet: return "Retweet";
        case EngagementKind::Share: return "Share";
    }
    return "?";
}

EngagementKind parse_engagement_kind(const std::string& s) {
    if (s == "Favorite") return EngagementKind::Favorite;
    if (s == "Reply") return EngagementKind::Reply;
    if (s == "Retweet") return EngagementKind::Retweet;
    if (s == "Share") return EngagementKind::Share;
    throw ValidationError("unknown engagement kind: '" + s + "'");
}

BipartiteGraph::BipartiteGraph(int num_users, int num_urls, std::vector<EngagementEdge> edges,
                               std::vector<std::string> user_names, std::vector<std::string> url_names)
    : num_users_(num_users),
      num_urls_(num_urls),
      user_names_(std::move(user_names)),
      url_names_(std::move(url_names)) {
    if (num_users <= 0 || num_urls <= 0)
        throw ValidationError("graph must have at least one user and one URL");

    for (const auto& e : edges) {
        if (e.user < 0 || e.user >= num_users_) throw ValidationError("edge user id out of range");
        if (e.url < 0 || e.url >= num_urls_) throw ValidationError("edge url id out of range");
        if (e.count < 1) throw ValidationError("edge count must be >= 1");
        if (e.kinds == 0) throw ValidationError("edge must carry at least one engagement kind");
    }

    // Merge duplicates on (user, url): union kinds, sum counts.
    std::sort(edges.begin(), edges.end(), [](const EngagementEdge& a, const EngagementEdge& b) {
        return a.user != b.user ? a.user < b.user : a.url < b.url;
    });
    edges_.reserve(edges.size());
    for (const auto& e : edges) {
        if (!edges_.empty() && edges_.back().user == e.user && edges_.back().url == e.url) {
            edges_.back().kinds |= e.kinds;
            edges_.back().count += e.count;
        } else {
            edges_.push_back(e);
        }
    }

    adjacency_.assign(num_users_, {});
    user_degrees_.assign(num_users_, 0);
    url_degrees_.assign(num_urls_, 0);
    user_weights_.assign(num_users_, 0);
    url_weights_.assign(num_urls_, 0);
    for (const auto& e : edges_) {
        adjacency_[e.user].push_back(e.url);
        user_degrees_[e.user]++;
        url_degrees_[e.url]++;
        user_weights_[e.user] += e.count;
        url_weights_[e.url] += e.count;
        total_count_ += e.count;
    }
    // edges_ are sorted, so adjacency lists are already sorted.
}

const std::vector<UrlId>& BipartiteGraph::adjacency(UserId u) const {
    if (u < 0 || u >= num_users_) throw ValidationError("user id out of range");
    return adjacency_[u];
}

bool BipartiteGraph::has_edge(UserId u, UrlId w) const {
    const auto& adj = adjacency(u);
    return std::binary_search(adj.begin(), adj.end(), w);
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::int64_t parse_count(const std::string& s, int line_no) {
    if (s.empty()) throw ParseError("line " + std::to_string(line_no) + ": empty count field");
    std::int64_t v = 0;
    for (char c : s) {
        if (c < '0' || c > '9')
            throw ParseError("line " + std::to_string(line_no) + ": count is not a positive integer: '" + s + "'");
        v = v * 10 + (c - '0');
        if (v > (std::int64_t(1) << 48)) throw ParseError("line " + std::to_string(line_no) + ": count overflow");
    }
    if (v < 1) throw ParseError("line " + std::to_string(line_no) + ": count must be >= 1");
    return v;
}

void write_idmap(const std::string& path, const std::vector<std::string>& names) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write id map: " + path);
    for (std::size_t i = 0; i < names.size(); ++i) out << names[i] << '\t' << i << '\n';
}

}  // namespace

BipartiteGraph load_edges(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("edge file does not exist or is unreadable: " + path);

    std::unordered_map<std::string, UserId> user_ids;
    std::unordered_map<std::string, UrlId> url_ids;
    std::vector<std::string> user_names, url_names;
    std::vector<EngagementEdge> edges;

    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_tabs(line);
        if (fields.size() != 4)
            throw ParseError("line " + std::to_string(line_no) + ": expected 4 tab-separated fields, got " +
                             std::to_string(fields.size()));
        if (fields[0].empty() || fields[1].empty())
            throw ParseError("line " + std::to_string(line_no) + ": empty id field");

        EngagementEdge e;
        auto uit = user_ids.find(fields[0]);
        if (uit == user_ids.end()) {
            e.user = static_cast<UserId>(user_names.size());
            user_ids.emplace(fields[0], e.user);
            user_names.push_back(fields[0]);
        } else {
            e.user = uit->second;
        }
        auto wit = url_ids.find(fields[1]);
        if (wit == url_ids.end()) {
            e.url = static_cast<UrlId>(url_names.size());
            url_ids.emplace(fields[1], e.url);
            url_names.push_back(fields[1]);
        } else {
            e.url = wit->second;
        }
        e.kinds = static_cast<std::uint8_t>(1u << static_cast<int>(parse_engagement_kind(fields[2])));
        e.count = parse_count(fields[3], line_no);
        edges.push_back(e);
    }
    if (edges.empty()) throw ValidationError("edge file contains no edges: " + path);

    write_idmap(path + ".users.idmap.tsv", user_names);
    write_idmap(path + ".urls.idmap.tsv", url_names);

    const int nu = static_cast<int>(user_names.size());
    const int nw = static_cast<int>(url_names.size());
    return BipartiteGraph(nu, nw, std::move(edges), std::move(user_names), std::move(url_names));
}

void save_edges(const BipartiteGraph& g, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write edge file: " + path);
    auto user_name = [&](UserId u) {
        return g.user_names().empty() ? std::to_string(u) : g.user_names()[u];
    };
    auto url_name = [&](UrlId w) {
        return g.url_names().empty() ? std::to_string(w) : g.url_names()[w];
    };
    // One line per (edge, kind). A merged edge's count is >= its number of
    // kinds, so the first kind carries count - (kinds-1) and the rest carry 1;
    // reloading merges back to identical totals.
    for (const auto& e : g.edges()) {
        int nkinds = 0;
        for (int k = 0; k < 4; ++k) nkinds += (e.kinds >> k) & 1;
        bool first = true;
        for (int k = 0; k < 4; ++k) {
            if (!(e.kinds & (1u << k))) continue;
            std::int64_t c = first ? e.count - (nkinds - 1) : 1;
            out << user_name(e.user) << '\t' << url_name(e.url) << '\t'
                << to_string(static_cast<EngagementKind>(k)) << '\t' << c << '\n';
            first = false;
        }
    }
    auto dense_names = [](int n) {
        std::vector<std::string> v(n);
        for (int i = 0; i < n; ++i) v[i] = std::to_string(i);
        return v;
    };
    write_idmap(path + ".users.idmap.tsv",
                g.user_names().empty() ? dense_names(g.num_users()) : g.user_names());
    write_idmap(path + ".urls.idmap.tsv",
                g.url_names().empty() ? dense_names(g.num_urls()) : g.url_names());
}

namespace {

SideStats side_stats(std::vector<std::int64_t> degrees) {
    std::sort(degrees.begin(), degrees.end());
    const std::size_t n = degrees.size();
    SideStats s;
    s.min = degrees.front();
    s.max = degrees.back();
    s.median = degrees[(n - 1) / 2];
    // Nearest-rank 95th percentile: ceil(0.95 n)-th smallest.
    std::size_t rank = static_cast<std::size_t>((n * 95 + 99) / 100);
    if (rank < 1) rank = 1;
    s.p95 = degrees[rank - 1];
    return s;
}

}  // namespace

DegreeStats degree_stats(const BipartiteGraph& g) {
    if (g.edges().empty()) throw ValidationError("degree_stats: empty graph");
    DegreeStats out;
    out.users = side_stats(g.user_degrees());
    out.urls = side_stats(g.url_degrees());
    return out;
}

}  // namespace webrep
