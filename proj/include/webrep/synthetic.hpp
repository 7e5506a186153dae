#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "webrep/graph.hpp"
#include "webrep/rng.hpp"

namespace webrep {

struct WebpageContent {
    std::string url;
    std::string title;
    std::string description;
};

struct SyntheticCorpus {
    BipartiteGraph graph;
    std::vector<WebpageContent> contents;   // one entry per URL id
    std::vector<int> url_community;         // per URL, in [0, num_communities)
    std::vector<int> user_community;        // per user
    int num_communities = 0;
};

struct SyntheticConfig {
    int num_users = 400;
    int num_urls = 200;
    int num_communities = 4;
    int edges_per_user = 30;
    double p_in = 0.9;
    int vocab_size = 1000;
    std::uint64_t seed = 1;

    // Content model knobs. Each token is drawn from the shared background
    // distribution with probability background_rate, otherwise from the
    // community's skewed distribution.
    double background_rate = 0.4;
    double community_boost = 12.0;
};

// Token distributions shared by the graph corpus and any held-out evaluation
// contents. A pure function of (seed, vocab_size, num_communities) plus the
// mixing knobs, so evaluation sets drawn later come from the same
// distributions as the training corpus.
class ContentModel {
public:
    ContentModel(const SyntheticConfig& cfg);

    WebpageContent sample(int community, int url_ordinal, Rng& rng) const;
    int vocab_size() const { return static_cast<int>(token_strings_.size()); }

private:
    int sample_token(int community, Rng& rng) const;

    std::vector<std::string> token_strings_;
    std::vector<std::vector<double>> community_cdf_;  // per community, cumulative
    double background_rate_;
};

// Planted-community bipartite corpus. Each user draws edges_per_user distinct
// URLs; each draw lands in the user's community with probability p_in, else
// uniformly in another community. Deterministic function of the config.
SyntheticCorpus generate_synthetic(const SyntheticConfig& cfg);

// Fresh labeled contents from the same community distributions, disjoint from
// the corpus URLs. Used to build few-shot topic/classification sets larger
// than the engagement graph itself.
struct LabeledContent {
    WebpageContent content;
    int community = 0;
};
std::vector<LabeledContent> generate_eval_contents(const SyntheticConfig& cfg, int per_class);

// Persistence: edges TSV (user, url, kind, count), contents TSV
// (url_id, url, title, description), labels TSV (kind-prefixed rows:
// "url <TAB> id <TAB> community" and "user <TAB> id <TAB> community").
void save_corpus(const SyntheticCorpus& corpus, const std::string& edges_path,
                 const std::string& contents_path, const std::string& labels_path);
SyntheticCorpus load_corpus(const std::string& edges_path, const std::string& contents_path,
                            const std::string& labels_path);

void save_contents(const std::vector<WebpageContent>& contents, const std::string& path);
std::vector<WebpageContent> load_contents(const std::string& path);
void save_labeled_contents(const std::vector<LabeledContent>& items, const std::string& contents_path,
                           const std::string& labels_path);
std::vector<LabeledContent> load_labeled_contents(const std::string& contents_path,
                                                  const std::string& labels_path);

}  // namespace webrep
