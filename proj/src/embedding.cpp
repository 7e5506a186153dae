#include "webrep/embedding.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <omp.h>

#include "webrep/common.hpp"
#include "webrep/kernels.hpp"
#include "webrep/rng.hpp"

namespace webrep {

double GraphTrainConfig::effective_init_scale() const {
    return init_scale > 0.0 ? init_scale : 1.0 / std::sqrt(static_cast<double>(dim));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double score(const double* p, const double* w, int dim) { return kernels::dot(p, w, dim); }

double score(const std::vector<double>& p, const std::vector<double>& w) {
    if (p.size() != w.size()) throw ValidationError("score: dimension mismatch");
    if (p.empty()) throw ValidationError("score: empty vectors");
    return kernels::dot(p.data(), w.data(), static_cast<int>(p.size()));
}

namespace {

// Cumulative table for O(log n) weighted sampling. Deterministic for a given
// weight vector; plenty fast at desk scale.
class WeightedSampler {
public:
    explicit WeightedSampler(const std::vector<double>& weights) : cdf_(weights.size()) {
        double total = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            total += weights[i];
            cdf_[i] = total;
        }
        if (total <= 0.0) throw ValidationError("weighted sampler: all weights zero");
        for (auto& x : cdf_) x /= total;
    }

    int sample(Rng& rng) const {
        double u = rng.uniform();
        auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
        if (it == cdf_.end()) --it;
        return static_cast<int>(it - cdf_.begin());
    }

private:
    std::vector<double> cdf_;
};

struct SampleLoss {
    double loss = 0.0;
    bool finite = true;
};

// One positive edge plus k negatives; applies SGD updates in place. A drawn
// negative equal to the current positive is skipped (word2vec convention),
// which keeps degenerate graphs trainable.
SampleLoss update_edge(double* u, Matrix& urls, UrlId pos, const WeightedSampler& neg_sampler,
                       int k, int dim, double lr, Rng& rng, std::vector<double>& u_grad) {
    SampleLoss out;
    std::fill(u_grad.begin(), u_grad.end(), 0.0);
    for (int d = 0; d <= k; ++d) {
        UrlId target = pos;
        double label = 1.0;
        if (d > 0) {
            target = neg_sampler.sample(rng);
            if (target == pos) continue;
            label = 0.0;
        }
        double* w = urls.row(target);
        double s = kernels::dot(u, w, dim);
        double sig = sigmoid(s);
        // -log sigma(s) for positives, -log sigma(-s) for negatives
        double term = label > 0.5 ? -std::log(sig + 1e-300) : -std::log(1.0 - sig + 1e-300);
        out.loss += term;
        double g = (label - sig) * lr;
        for (int c = 0; c < dim; ++c) u_grad[c] += g * w[c];
        for (int c = 0; c < dim; ++c) w[c] += g * u[c];
    }
    for (int c = 0; c < dim; ++c) u[c] += u_grad[c];
    out.finite = std::isfinite(out.loss);
    return out;
}

void check_finite(const Matrix& m, const char* what) {
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j)
            if (!std::isfinite(m(i, j)))
                throw NumericError(std::string(what) + ": non-finite value at row " + std::to_string(i));
}

}  // namespace

GraphTrainResult train_graph_embeddings(const BipartiteGraph& graph, const GraphTrainConfig& cfg) {
    if (graph.edges().empty()) throw ValidationError("train_graph_embeddings: empty graph");
    if (cfg.dim < 2) throw ValidationError("train_graph_embeddings: dim must be >= 2");
    if (cfg.negatives_per_positive < 1) throw ValidationError("train_graph_embeddings: k must be >= 1");

    const int dim = cfg.dim;
    GraphTrainResult result;
    result.users.dim = dim;
    result.users.side = TableSide::User;
    result.users.vectors = Matrix(graph.num_users(), dim);
    result.urls.dim = dim;
    result.urls.side = TableSide::Url;
    result.urls.vectors = Matrix(graph.num_urls(), dim);

    const double scale = cfg.effective_init_scale();
    Rng init_rng(derive_seed(cfg.seed, "graph-init"));
    result.users.vectors.fill_uniform(init_rng, -scale, scale);
    result.urls.vectors.fill_uniform(init_rng, -scale, scale);

    for (UserId u = 0; u < graph.num_users(); ++u)
        if (graph.user_degrees()[u] == 0) result.isolated_users.push_back(u);
    for (UrlId w = 0; w < graph.num_urls(); ++w)
        if (graph.url_degrees()[w] == 0) result.isolated_urls.push_back(w);
    if (!result.isolated_users.empty() || !result.isolated_urls.empty()) {
        std::cerr << "warning: " << result.isolated_users.size() << " isolated users and "
                  << result.isolated_urls.size() << " isolated urls keep their random initialization\n";
    }

    // Positive sampling is count-proportional over merged edges.
    const auto& edges = graph.edges();
    std::vector<double> edge_weights(edges.size());
    for (std::size_t i = 0; i < edges.size(); ++i) edge_weights[i] = static_cast<double>(edges[i].count);
    WeightedSampler pos_sampler(edge_weights);

    // Negative distribution: unigram^0.75 over URL engagement counts (or
    // uniform when configured). Zero-degree URLs are never drawn.
    std::vector<double> neg_weights(graph.num_urls());
    for (UrlId w = 0; w < graph.num_urls(); ++w) {
        double base = static_cast<double>(graph.url_weights()[w]);
        neg_weights[w] = cfg.uniform_negatives ? (base > 0 ? 1.0 : 0.0) : std::pow(base, 0.75);
    }
    WeightedSampler neg_sampler(neg_weights);

    const std::int64_t steps_per_epoch = graph.total_count();
    const std::int64_t total_steps = steps_per_epoch * std::max(cfg.epochs, 1);
    const int k = cfg.negatives_per_positive;

    // Pre-training loss estimate over one epoch's worth of samples (no updates).
    {
        Rng eval_rng(derive_seed(cfg.seed, "graph-eval0"));
        double total = 0.0;
        std::int64_t n = std::min<std::int64_t>(steps_per_epoch, 20000);
        for (std::int64_t s = 0; s < n; ++s) {
            const auto& e = edges[pos_sampler.sample(eval_rng)];
            const double* u = result.users.row(e.user);
            double sp = kernels::dot(u, result.urls.row(e.url), dim);
            total += -std::log(sigmoid(sp) + 1e-300);
            for (int d = 0; d < k; ++d) {
                int neg = neg_sampler.sample(eval_rng);
                if (neg == e.url) continue;
                double sn = kernels::dot(u, result.urls.row(neg), dim);
                total += -std::log(1.0 - sigmoid(sn) + 1e-300);
            }
        }
        result.loss_trajectory.push_back(total / static_cast<double>(n));
    }

    if (cfg.epochs == 0) return result;

    const double lr0 = cfg.learning_rate;
    const int workers = std::max(1, cfg.workers);

    if (workers == 1) {
        Rng rng(derive_seed(cfg.seed, "graph-train"));
        std::vector<double> u_grad(dim);
        std::int64_t step = 0;
        for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
            double epoch_loss = 0.0;
            for (std::int64_t s = 0; s < steps_per_epoch; ++s, ++step) {
                double lr = lr0 * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
                const auto& e = edges[pos_sampler.sample(rng)];
                auto sl = update_edge(result.users.row(e.user), result.urls.vectors, e.url, neg_sampler,
                                      k, dim, lr, rng, u_grad);
                if (!sl.finite)
                    throw NumericError("train_graph_embeddings: non-finite loss at step " + std::to_string(step));
                epoch_loss += sl.loss;
            }
            result.loss_trajectory.push_back(epoch_loss / static_cast<double>(steps_per_epoch));
        }
    } else {
        // Lock-free asynchronous updates: each worker samples independently
        // and writes to the shared tables without synchronization.
        std::vector<double> epoch_losses(cfg.epochs, 0.0);
        std::atomic<bool> aborted{false};
        std::atomic<std::int64_t> global_step{0};
#pragma omp parallel num_threads(workers)
        {
            const int tid = omp_get_thread_num();
            Rng rng(derive_seed(cfg.seed, "graph-train-w" + std::to_string(tid)));
            std::vector<double> u_grad(dim);
            for (int epoch = 1; epoch <= cfg.epochs && !aborted.load(std::memory_order_relaxed); ++epoch) {
                std::int64_t my_steps = steps_per_epoch / workers + (tid < steps_per_epoch % workers ? 1 : 0);
                double local_loss = 0.0;
                for (std::int64_t s = 0; s < my_steps; ++s) {
                    std::int64_t step = global_step.fetch_add(1, std::memory_order_relaxed);
                    double lr = lr0 * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
                    if (lr <= 0) lr = lr0 / static_cast<double>(total_steps);
                    const auto& e = edges[pos_sampler.sample(rng)];
                    auto sl = update_edge(result.users.row(e.user), result.urls.vectors, e.url, neg_sampler,
                                          k, dim, lr, rng, u_grad);
                    if (!sl.finite) aborted.store(true, std::memory_order_relaxed);
                    local_loss += sl.loss;
                }
#pragma omp atomic
                epoch_losses[epoch - 1] += local_loss;
#pragma omp barrier
            }
        }
        if (aborted.load()) throw NumericError("train_graph_embeddings: non-finite loss in parallel run");
        for (int epoch = 0; epoch < cfg.epochs; ++epoch)
            result.loss_trajectory.push_back(epoch_losses[epoch] / static_cast<double>(steps_per_epoch));
    }

    check_finite(result.users.vectors, "user embeddings");
    check_finite(result.urls.vectors, "url embeddings");
    return result;
}

LinkPredictionResult link_prediction_eval(const EmbeddingTable& users, const EmbeddingTable& urls,
                                          const std::vector<HeldoutEdge>& heldout, int negatives,
                                          std::uint64_t seed, const BipartiteGraph* train_graph,
                                          bool filter_known) {
    if (heldout.empty()) throw ValidationError("link_prediction_eval: no held-out edges");
    if (negatives < 1) throw ValidationError("link_prediction_eval: negatives must be >= 1");
    if (negatives >= urls.rows()) throw ValidationError("link_prediction_eval: more negatives than URLs");
    for (const auto& e : heldout) {
        if (e.user < 0 || e.user >= users.rows()) throw ValidationError("link_prediction_eval: unknown user id");
        if (e.url < 0 || e.url >= urls.rows()) throw ValidationError("link_prediction_eval: unknown url id");
    }

    const int dim = users.dim;
    std::vector<double> rr(heldout.size(), 0.0);
    std::vector<double> hit(heldout.size(), 0.0);
    std::atomic<bool> starved{false};

#pragma omp parallel num_threads(num_threads())
    {
        const int tid = omp_get_thread_num();
        // Per-edge RNG streams are stable for a fixed thread count under
        // static scheduling; a single thread is fully reproducible.
        Rng rng(derive_seed(seed, "linkpred-" + std::to_string(tid)));
#pragma omp for schedule(static)
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(heldout.size()); ++i) {
            const auto& e = heldout[i];
            const double* u = users.row(e.user);
            double true_score = kernels::dot(u, urls.row(e.url), dim);
            int rank = 1;
            int drawn = 0;
            std::int64_t guard = 0;
            while (drawn < negatives && !starved.load(std::memory_order_relaxed)) {
                UrlId w = static_cast<UrlId>(rng.uniform_index(urls.rows()));
                if (w == e.url) continue;
                if (filter_known && train_graph != nullptr && train_graph->has_edge(e.user, w)) {
                    if (++guard > 1000LL * negatives) starved.store(true, std::memory_order_relaxed);
                    continue;
                }
                ++drawn;
                if (kernels::dot(u, urls.row(w), dim) > true_score) ++rank;
            }
            rr[i] = 1.0 / static_cast<double>(rank);
            hit[i] = rank <= 10 ? 1.0 : 0.0;
        }
    }
    if (starved.load())
        throw ValidationError("link_prediction_eval: cannot draw enough negatives outside a user's training edges");

    LinkPredictionResult out;
    out.evaluated = static_cast<int>(heldout.size());
    for (std::size_t i = 0; i < heldout.size(); ++i) {
        out.mrr += rr[i];
        out.hits_at_10 += hit[i];
    }
    out.mrr /= static_cast<double>(heldout.size());
    out.hits_at_10 /= static_cast<double>(heldout.size());
    return out;
}

EdgeSplit split_edges(const BipartiteGraph& graph, double holdout_fraction, std::uint64_t seed) {
    if (holdout_fraction <= 0.0 || holdout_fraction >= 1.0)
        throw ValidationError("split_edges: holdout fraction must be in (0, 1)");
    Rng rng(derive_seed(seed, "edge-split"));
    std::vector<std::size_t> order(graph.edges().size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    std::size_t target = static_cast<std::size_t>(holdout_fraction * static_cast<double>(order.size()));
    std::vector<std::int64_t> remaining_user_deg = graph.user_degrees();
    std::vector<bool> held(order.size(), false);
    std::size_t taken = 0;
    for (std::size_t idx : order) {
        if (taken >= target) break;
        const auto& e = graph.edges()[idx];
        if (remaining_user_deg[e.user] <= 1) continue;  // keep every user connected
        held[idx] = true;
        remaining_user_deg[e.user]--;
        ++taken;
    }

    EdgeSplit out;
    std::vector<EngagementEdge> train_edges;
    train_edges.reserve(order.size() - taken);
    for (std::size_t i = 0; i < graph.edges().size(); ++i) {
        if (held[i])
            out.heldout.push_back({graph.edges()[i].user, graph.edges()[i].url});
        else
            train_edges.push_back(graph.edges()[i]);
    }
    out.train = BipartiteGraph(graph.num_users(), graph.num_urls(), std::move(train_edges),
                               graph.user_names(), graph.url_names());
    return out;
}

namespace {

constexpr char kTableMagic[8] = {'W', 'R', 'E', 'M', 'B', '0', '0', '1'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& v, const char* what) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw FormatError(std::string("embedding table: truncated while reading ") + what);
}

}  // namespace

std::size_t table_file_size(int rows, int dim) {
    return sizeof(kTableMagic) + sizeof(std::uint8_t) + sizeof(std::uint32_t) * 2 +
           static_cast<std::size_t>(rows) * dim * sizeof(double);
}

void save_table(const EmbeddingTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write embedding table: " + path);
    out.write(kTableMagic, sizeof(kTableMagic));
    write_pod(out, static_cast<std::uint8_t>(table.side));
    write_pod(out, static_cast<std::uint32_t>(table.dim));
    write_pod(out, static_cast<std::uint32_t>(table.vectors.rows()));
    out.write(reinterpret_cast<const char*>(table.vectors.data()),
              static_cast<std::streamsize>(table.vectors.size() * sizeof(double)));
    if (!out) throw Error("short write on embedding table: " + path);
}

EmbeddingTable load_table(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("embedding table does not exist: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kTableMagic, sizeof(magic)) != 0)
        throw FormatError("embedding table: bad magic or version: " + path);
    std::uint8_t side;
    std::uint32_t dim, rows;
    read_pod(in, side, "side");
    read_pod(in, dim, "dim");
    read_pod(in, rows, "rows");
    if (side > 1) throw FormatError("embedding table: invalid side byte");
    if (dim < 1 || dim > 65536 || rows < 1) throw FormatError("embedding table: implausible shape");
    EmbeddingTable table;
    table.side = static_cast<TableSide>(side);
    table.dim = static_cast<int>(dim);
    table.vectors = Matrix(static_cast<int>(rows), static_cast<int>(dim));
    in.read(reinterpret_cast<char*>(table.vectors.data()),
            static_cast<std::streamsize>(table.vectors.size() * sizeof(double)));
    if (!in || in.gcount() != static_cast<std::streamsize>(table.vectors.size() * sizeof(double)))
        throw FormatError("embedding table: truncated data section: " + path);
    char extra;
    if (in.read(&extra, 1)) throw FormatError("embedding table: trailing bytes: " + path);
    return table;
}

CommunityCosine community_cosine_stats(const EmbeddingTable& urls, const std::vector<int>& url_community) {
    if (static_cast<int>(url_community.size()) != urls.rows())
        throw ValidationError("community_cosine_stats: label count mismatch");
    const int n = urls.rows();
    const int dim = urls.dim;
    std::vector<double> norms(n);
    for (int i = 0; i < n; ++i) norms[i] = kernels::norm(urls.row(i), dim);

    double within = 0.0, cross = 0.0;
    std::int64_t nw = 0, nc = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (norms[i] == 0.0 || norms[j] == 0.0) continue;
            double c = kernels::dot(urls.row(i), urls.row(j), dim) / (norms[i] * norms[j]);
            if (url_community[i] == url_community[j]) {
                within += c;
                ++nw;
            } else {
                cross += c;
                ++nc;
            }
        }
    }
    if (nw == 0 || nc == 0) throw ValidationError("community_cosine_stats: need both pair kinds");
    return {within / static_cast<double>(nw), cross / static_cast<double>(nc)};
}

}  // namespace webrep
