#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "webrep/graph.hpp"
#include "webrep/matrix.hpp"

namespace webrep {

enum class TableSide : std::uint8_t { User = 0, Url = 1 };

// Flat id -> vector embedding table. Row i belongs to dense id i.
struct EmbeddingTable {
    int dim = 0;
    TableSide side = TableSide::User;
    Matrix vectors;  // rows x dim

    int rows() const { return vectors.rows(); }
    const double* row(int id) const { return vectors.row(id); }
    double* row(int id) { return vectors.row(id); }
};

struct GraphTrainConfig {
    int dim = 128;
    int negatives_per_positive = 5;
    double learning_rate = 0.05;  // linearly decayed to 0 over total steps
    int epochs = 10;
    double init_scale = 0.0;      // 0 means the 1/sqrt(dim) default
    std::uint64_t seed = 1;
    int workers = 1;
    bool uniform_negatives = false;  // default is unigram^0.75 over URL engagement counts

    double effective_init_scale() const;
};

// Relevance score <p, w>. Throws ValidationError on dimension mismatch.
double score(const std::vector<double>& p, const std::vector<double>& w);
double score(const double* p, const double* w, int dim);
double sigmoid(double x);

struct GraphTrainResult {
    EmbeddingTable users;
    EmbeddingTable urls;
    // loss_trajectory[0] is the pre-training sampled loss; entry e >= 1 is
    // the mean training loss during epoch e.
    std::vector<double> loss_trajectory;
    std::vector<UserId> isolated_users;  // kept at random init
    std::vector<UrlId> isolated_urls;
};

// Stage-1 decomposition: dot-product embeddings trained with k-negative
// sampling logistic loss. Positives are drawn count-proportionally; negatives
// from the unigram^0.75 URL engagement distribution. workers > 1 runs
// lock-free asynchronous updates; exact reproducibility needs workers == 1.
GraphTrainResult train_graph_embeddings(const BipartiteGraph& graph, const GraphTrainConfig& cfg);

struct LinkPredictionResult {
    double hits_at_10 = 0.0;
    double mrr = 0.0;
    int evaluated = 0;
};

struct HeldoutEdge {
    UserId user;
    UrlId url;
};

// Ranks each held-out edge's true URL against `negatives` uniformly sampled
// URLs. When filter_known is set (the default), sampled negatives exclude the
// user's known training URLs so memorized positives do not mask the score.
LinkPredictionResult link_prediction_eval(const EmbeddingTable& users, const EmbeddingTable& urls,
                                          const std::vector<HeldoutEdge>& heldout, int negatives,
                                          std::uint64_t seed, const BipartiteGraph* train_graph = nullptr,
                                          bool filter_known = true);

// Splits a graph's merged edges into (train graph, held-out edges) with the
// given holdout fraction. Every user keeps at least one training edge.
struct EdgeSplit {
    BipartiteGraph train;
    std::vector<HeldoutEdge> heldout;
};
EdgeSplit split_edges(const BipartiteGraph& graph, double holdout_fraction, std::uint64_t seed);

// Versioned binary table format; load validates version, side, and shape.
void save_table(const EmbeddingTable& table, const std::string& path);
EmbeddingTable load_table(const std::string& path);

// Serialized file size in bytes for a table of the given shape.
std::size_t table_file_size(int rows, int dim);

// Mean cosine similarity between same-community and cross-community URL
// embedding pairs; the planted-community recovery statistic.
struct CommunityCosine {
    double within = 0.0;
    double cross = 0.0;
};
CommunityCosine community_cosine_stats(const EmbeddingTable& urls, const std::vector<int>& url_community);

}  // namespace webrep
