#include "webrep/synthetic.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "webrep/common.hpp"

namespace webrep {

namespace {

void validate(const SyntheticConfig& cfg) {
    if (cfg.num_users <= 0 || cfg.num_urls <= 0 || cfg.num_communities <= 0)
        throw ValidationError("generate_synthetic: users, urls, and communities must all be positive");
    if (cfg.num_communities > cfg.num_urls || cfg.num_communities > cfg.num_users)
        throw ValidationError("generate_synthetic: more communities than nodes on one side");
    if (!(cfg.p_in > 0.5 && cfg.p_in <= 1.0))
        throw ValidationError("generate_synthetic: p_in must satisfy 0.5 < p_in <= 1");
    if (cfg.edges_per_user <= 0) throw ValidationError("generate_synthetic: edges_per_user must be positive");
    if (cfg.edges_per_user > cfg.num_urls / cfg.num_communities)
        throw ValidationError("generate_synthetic: edges_per_user exceeds the smallest community size");
    if (cfg.vocab_size < cfg.num_communities)
        throw ValidationError("generate_synthetic: vocab_size must be >= num_communities");
}

// Round-robin community assignment over dense ids: id i -> i % k. Keeps
// communities even-ish with the remainder spread one apiece.
std::vector<int> assign_communities(int n, int k) {
    std::vector<int> out(n);
    for (int i = 0; i < n; ++i) out[i] = i % k;
    return out;
}

}  // namespace

ContentModel::ContentModel(const SyntheticConfig& cfg) : background_rate_(cfg.background_rate) {
    Rng rng(derive_seed(cfg.seed, "content-model"));
    token_strings_.resize(cfg.vocab_size);
    for (int t = 0; t < cfg.vocab_size; ++t) {
        std::ostringstream os;
        os << "tok" << t;
        token_strings_[t] = os.str();
    }
    // Community c prefers tokens with t % k == c, with log-normal jitter so
    // the distribution has a long tail instead of a flat plateau.
    community_cdf_.assign(cfg.num_communities, std::vector<double>(cfg.vocab_size, 0.0));
    for (int c = 0; c < cfg.num_communities; ++c) {
        double total = 0.0;
        auto& cdf = community_cdf_[c];
        for (int t = 0; t < cfg.vocab_size; ++t) {
            double w = std::exp(rng.normal(0.0, 1.0));
            if (t % cfg.num_communities == c) w *= cfg.community_boost;
            total += w;
            cdf[t] = total;
        }
        for (auto& x : cdf) x /= total;
    }
}

int ContentModel::sample_token(int community, Rng& rng) const {
    if (rng.bernoulli(background_rate_)) {
        return static_cast<int>(rng.uniform_index(token_strings_.size()));
    }
    const auto& cdf = community_cdf_[community];
    double u = rng.uniform();
    auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.end()) --it;
    return static_cast<int>(it - cdf.begin());
}

WebpageContent ContentModel::sample(int community, int url_ordinal, Rng& rng) const {
    WebpageContent c;
    std::ostringstream url;
    url << "http://" << token_strings_[sample_token(community, rng)] << "-"
        << token_strings_[sample_token(community, rng)] << ".site" << url_ordinal << ".com/"
        << token_strings_[sample_token(community, rng)] << "/" << token_strings_[sample_token(community, rng)];
    c.url = url.str();

    int title_len = 3 + static_cast<int>(rng.uniform_index(5));
    std::ostringstream title;
    for (int i = 0; i < title_len; ++i) {
        if (i) title << ' ';
        title << token_strings_[sample_token(community, rng)];
    }
    c.title = title.str();

    int desc_len = 20 + static_cast<int>(rng.uniform_index(41));
    std::ostringstream desc;
    for (int i = 0; i < desc_len; ++i) {
        if (i) desc << ' ';
        desc << token_strings_[sample_token(community, rng)];
    }
    c.description = desc.str();
    return c;
}

SyntheticCorpus generate_synthetic(const SyntheticConfig& cfg) {
    validate(cfg);

    SyntheticCorpus corpus;
    corpus.num_communities = cfg.num_communities;
    corpus.url_community = assign_communities(cfg.num_urls, cfg.num_communities);
    corpus.user_community = assign_communities(cfg.num_users, cfg.num_communities);

    // URL ids per community for edge targeting.
    std::vector<std::vector<UrlId>> urls_by_community(cfg.num_communities);
    for (int w = 0; w < cfg.num_urls; ++w) urls_by_community[corpus.url_community[w]].push_back(w);

    Rng edge_rng(derive_seed(cfg.seed, "edges"));
    std::vector<EngagementEdge> edges;
    edges.reserve(static_cast<std::size_t>(cfg.num_users) * cfg.edges_per_user);
    std::unordered_set<UrlId> seen;
    for (int u = 0; u < cfg.num_users; ++u) {
        seen.clear();
        int own = corpus.user_community[u];
        for (int k = 0; k < cfg.edges_per_user; ++k) {
            // The community coin is flipped once per edge; duplicate URLs are
            // rejected within the chosen pool so the within-community edge
            // fraction stays an unbiased estimate of p_in.
            bool within = edge_rng.uniform() < cfg.p_in;
            UrlId w = -1;
            for (int attempt = 0; attempt < 1000; ++attempt) {
                UrlId cand;
                if (within) {
                    const auto& pool = urls_by_community[own];
                    cand = pool[edge_rng.uniform_index(pool.size())];
                } else {
                    do {
                        cand = static_cast<UrlId>(edge_rng.uniform_index(cfg.num_urls));
                    } while (corpus.url_community[cand] == own);
                }
                if (!seen.contains(cand)) {
                    w = cand;
                    break;
                }
            }
            if (w < 0) {
                // Pool nearly exhausted; take the first unseen URL, preferring
                // the chosen pool.
                for (UrlId cand : urls_by_community[own])
                    if (within && !seen.contains(cand)) {
                        w = cand;
                        break;
                    }
                for (UrlId cand = 0; w < 0 && cand < cfg.num_urls; ++cand)
                    if (!seen.contains(cand)) w = cand;
                if (w < 0) throw ValidationError("generate_synthetic: user cannot draw enough distinct URLs");
            }
            seen.insert(w);
            EngagementEdge e;
            e.user = u;
            e.url = w;
            e.kinds = static_cast<std::uint8_t>(1u << edge_rng.uniform_index(4));
            e.count = 1;
            edges.push_back(e);
        }
    }
    corpus.graph = BipartiteGraph(cfg.num_users, cfg.num_urls, std::move(edges));

    ContentModel model(cfg);
    Rng content_rng(derive_seed(cfg.seed, "corpus-contents"));
    corpus.contents.reserve(cfg.num_urls);
    for (int w = 0; w < cfg.num_urls; ++w)
        corpus.contents.push_back(model.sample(corpus.url_community[w], w, content_rng));
    return corpus;
}

std::vector<LabeledContent> generate_eval_contents(const SyntheticConfig& cfg, int per_class) {
    validate(cfg);
    if (per_class <= 0) throw ValidationError("generate_eval_contents: per_class must be positive");
    ContentModel model(cfg);
    Rng rng(derive_seed(cfg.seed, "eval-contents"));
    std::vector<LabeledContent> out;
    out.reserve(static_cast<std::size_t>(per_class) * cfg.num_communities);
    // Ordinals continue past the corpus range so eval URLs never collide
    // with training URLs.
    int ordinal = cfg.num_urls;
    for (int i = 0; i < per_class; ++i) {
        for (int c = 0; c < cfg.num_communities; ++c) {
            LabeledContent item;
            item.community = c;
            item.content = model.sample(c, ordinal++, rng);
            out.push_back(item);
        }
    }
    return out;
}

namespace {

std::string sanitize_field(const std::string& s) {
    std::string out = s;
    for (auto& c : out)
        if (c == '\t' || c == '\n' || c == '\r') c = ' ';
    return out;
}

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

}  // namespace

void save_contents(const std::vector<WebpageContent>& contents, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write contents file: " + path);
    for (std::size_t i = 0; i < contents.size(); ++i) {
        out << i << '\t' << sanitize_field(contents[i].url) << '\t' << sanitize_field(contents[i].title)
            << '\t' << sanitize_field(contents[i].description) << '\n';
    }
}

std::vector<WebpageContent> load_contents(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("contents file does not exist: " + path);
    std::vector<WebpageContent> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        auto f = split_tabs(line);
        if (f.size() != 4) throw ParseError("contents line " + std::to_string(line_no) + ": expected 4 fields");
        std::size_t id = std::stoul(f[0]);
        if (id != out.size()) throw ParseError("contents line " + std::to_string(line_no) + ": ids must be dense and ordered");
        out.push_back({f[1], f[2], f[3]});
    }
    if (out.empty()) throw ValidationError("contents file is empty: " + path);
    return out;
}

void save_corpus(const SyntheticCorpus& corpus, const std::string& edges_path,
                 const std::string& contents_path, const std::string& labels_path) {
    save_edges(corpus.graph, edges_path);
    save_contents(corpus.contents, contents_path);
    std::ofstream out(labels_path, std::ios::trunc);
    if (!out) throw Error("cannot write labels file: " + labels_path);
    out << "# communities\t" << corpus.num_communities << '\n';
    for (std::size_t i = 0; i < corpus.url_community.size(); ++i)
        out << "url\t" << i << '\t' << corpus.url_community[i] << '\n';
    for (std::size_t i = 0; i < corpus.user_community.size(); ++i)
        out << "user\t" << i << '\t' << corpus.user_community[i] << '\n';
}

SyntheticCorpus load_corpus(const std::string& edges_path, const std::string& contents_path,
                            const std::string& labels_path) {
    SyntheticCorpus corpus;
    corpus.graph = load_edges(edges_path);
    auto raw_contents = load_contents(contents_path);
    if (static_cast<int>(raw_contents.size()) != corpus.graph.num_urls())
        throw ValidationError("corpus contents and graph disagree on URL count");

    // load_edges remaps ids by first appearance; contents and labels are keyed
    // by the original ids, so route them through the name tables.
    auto original_index = [](const std::string& name, std::size_t limit, const char* what) {
        std::size_t pos = 0;
        unsigned long v = 0;
        try {
            v = std::stoul(name, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != name.size() || v >= limit)
            throw FormatError(std::string("corpus ") + what + ": id '" + name + "' does not match the table");
        return static_cast<std::size_t>(v);
    };
    corpus.contents.resize(raw_contents.size());
    std::vector<std::size_t> url_original(corpus.graph.num_urls());
    for (int j = 0; j < corpus.graph.num_urls(); ++j) {
        url_original[j] = original_index(corpus.graph.url_names()[j], raw_contents.size(), "contents");
        corpus.contents[j] = raw_contents[url_original[j]];
    }
    std::vector<std::size_t> user_original(corpus.graph.num_users());
    for (int i = 0; i < corpus.graph.num_users(); ++i)
        user_original[i] =
            original_index(corpus.graph.user_names()[i], corpus.graph.num_users(), "user labels");

    std::ifstream in(labels_path);
    if (!in) throw ValidationError("labels file does not exist: " + labels_path);
    std::vector<int> url_by_original(corpus.graph.num_urls(), -1);
    std::vector<int> user_by_original(corpus.graph.num_users(), -1);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line[0] == '#') {
            auto f = split_tabs(line);
            if (f.size() == 2 && f[0] == "# communities") corpus.num_communities = std::stoi(f[1]);
            continue;
        }
        auto f = split_tabs(line);
        if (f.size() != 3) throw ParseError("labels line " + std::to_string(line_no) + ": expected 3 fields");
        int id = std::stoi(f[1]);
        int comm = std::stoi(f[2]);
        if (f[0] == "url") {
            if (id < 0 || id >= corpus.graph.num_urls()) throw ParseError("labels line " + std::to_string(line_no) + ": url id out of range");
            url_by_original[id] = comm;
        } else if (f[0] == "user") {
            if (id < 0 || id >= corpus.graph.num_users()) throw ParseError("labels line " + std::to_string(line_no) + ": user id out of range");
            user_by_original[id] = comm;
        } else {
            throw ParseError("labels line " + std::to_string(line_no) + ": unknown row kind '" + f[0] + "'");
        }
    }
    if (corpus.num_communities <= 0) throw FormatError("labels file missing community count header");
    corpus.url_community.resize(corpus.graph.num_urls());
    for (int j = 0; j < corpus.graph.num_urls(); ++j) {
        int c = url_by_original[url_original[j]];
        if (c < 0) throw FormatError("labels file missing a url community label");
        corpus.url_community[j] = c;
    }
    corpus.user_community.resize(corpus.graph.num_users());
    for (int i = 0; i < corpus.graph.num_users(); ++i) {
        int c = user_by_original[user_original[i]];
        if (c < 0) throw FormatError("labels file missing a user community label");
        corpus.user_community[i] = c;
    }
    return corpus;
}

void save_labeled_contents(const std::vector<LabeledContent>& items, const std::string& contents_path,
                           const std::string& labels_path) {
    std::vector<WebpageContent> contents;
    contents.reserve(items.size());
    for (const auto& it : items) contents.push_back(it.content);
    save_contents(contents, contents_path);
    std::ofstream out(labels_path, std::ios::trunc);
    if (!out) throw Error("cannot write labels file: " + labels_path);
    for (std::size_t i = 0; i < items.size(); ++i) out << "url\t" << i << '\t' << items[i].community << '\n';
}

std::vector<LabeledContent> load_labeled_contents(const std::string& contents_path,
                                                  const std::string& labels_path) {
    auto contents = load_contents(contents_path);
    std::ifstream in(labels_path);
    if (!in) throw ValidationError("labels file does not exist: " + labels_path);
    std::vector<LabeledContent> out(contents.size());
    for (std::size_t i = 0; i < contents.size(); ++i) {
        out[i].content = contents[i];
        out[i].community = -1;
    }
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        auto f = split_tabs(line);
        if (f.size() != 3 || f[0] != "url")
            throw ParseError("labels line " + std::to_string(line_no) + ": expected 'url <TAB> id <TAB> community'");
        std::size_t id = std::stoul(f[1]);
        if (id >= out.size()) throw ParseError("labels line " + std::to_string(line_no) + ": id out of range");
        out[id].community = std::stoi(f[2]);
    }
    for (const auto& it : out)
        if (it.community < 0) throw FormatError("labels file missing a label: " + labels_path);
    return out;
}

}  // namespace webrep
