#include "webrep/tasks.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <unordered_set>

#include "webrep/common.hpp"
#include "webrep/kernels.hpp"

namespace webrep {

std::string MetricsReport::to_tsv() const {
    std::ostringstream out;
    out << "task\tvariant\tn\tseed\tmetric\tvalue\n";
    char buf[64];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof(buf), "%.6f", r.value);
        out << r.task << '\t' << r.variant << '\t' << r.n << '\t' << r.seed << '\t' << r.metric << '\t'
            << buf << '\n';
    }
    return out.str();
}

double MetricsReport::get(const std::string& task, const std::string& variant, int n, std::uint64_t seed,
                          const std::string& metric) const {
    for (const auto& r : records)
        if (r.task == task && r.variant == variant && r.n == n && r.seed == seed && r.metric == metric)
            return r.value;
    throw ValidationError("metrics report: no record for " + task + "/" + variant + "/" + std::to_string(n) +
                          "/" + metric);
}

double MetricsReport::mean(const std::string& task, const std::string& variant, int n,
                           const std::string& metric) const {
    double total = 0.0;
    int count = 0;
    for (const auto& r : records)
        if (r.task == task && r.variant == variant && r.n == n && r.metric == metric) {
            total += r.value;
            ++count;
        }
    if (count == 0)
        throw ValidationError("metrics report: no records for " + task + "/" + variant + "/" +
                              std::to_string(n) + "/" + metric);
    return total / count;
}

namespace {

std::vector<TokenSequence> tokenize_all(const std::vector<WebpageContent>& contents, const Vocab& vocab,
                                        int max_positions) {
    std::vector<TokenSequence> seqs(contents.size());
    for (std::size_t i = 0; i < contents.size(); ++i) seqs[i] = tokenize(contents[i], vocab, max_positions);
    return seqs;
}

}  // namespace

Matrix extract_cls_features(const EncoderModel& m, const std::vector<WebpageContent>& contents,
                            const Vocab& vocab) {
    auto seqs = tokenize_all(contents, vocab, m.config.max_positions);
    Matrix out(static_cast<int>(contents.size()), m.config.pooler_dim);
    const int nt = num_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(seqs.size()); ++i) {
        auto cache = encoder_forward(m, seqs[i], false, nullptr);
        double* r = out.row(static_cast<int>(i));
        for (int j = 0; j < m.config.pooler_dim; ++j) r[j] = cache.pooled[j];
    }
    return out;
}

Matrix extract_mean_features(const EncoderModel& m, const std::vector<WebpageContent>& contents,
                             const Vocab& vocab) {
    auto seqs = tokenize_all(contents, vocab, m.config.max_positions);
    Matrix out(static_cast<int>(contents.size()), m.config.model_dim);
    const int nt = num_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(seqs.size()); ++i) {
        auto cache = encoder_forward(m, seqs[i], false, nullptr);
        auto mean = pool_mean(cache.hidden, seqs[i]);
        double* r = out.row(static_cast<int>(i));
        for (int j = 0; j < m.config.model_dim; ++j) r[j] = mean[j];
    }
    return out;
}

namespace {

struct ClassificationCell {
    double macro = 0.0;
    double micro = 0.0;
};

ClassificationCell run_classification_cell(const Matrix& features, const std::vector<int>& labels,
                                           int num_classes, ProbeActivation act, int n, std::uint64_t seed,
                                           int test_cap) {
    auto split = few_shot_sample(labels, num_classes, n, seed, test_cap);
    Matrix train_x(static_cast<int>(split.train_indices.size()), features.cols());
    std::vector<int> train_y(split.train_indices.size());
    for (std::size_t i = 0; i < split.train_indices.size(); ++i) {
        const double* src = features.row(split.train_indices[i]);
        std::copy(src, src + features.cols(), train_x.row(static_cast<int>(i)));
        train_y[i] = labels[split.train_indices[i]];
    }
    ProbeConfig cfg;
    cfg.activation = act;
    cfg.num_classes = num_classes;
    cfg.seed = derive_seed(seed, "probe");
    ProbeHead head = train_probe(train_x, train_y, cfg);

    std::vector<int> preds(split.test_indices.size()), truth(split.test_indices.size());
    for (std::size_t i = 0; i < split.test_indices.size(); ++i) {
        preds[i] = head.predict(features.row(split.test_indices[i]), features.cols());
        truth[i] = labels[split.test_indices[i]];
    }
    return {macro_f1(preds, truth, num_classes), micro_f1(preds, truth, num_classes)};
}

double run_engagement_cell(const Matrix& features, const std::vector<int>& labels, int n,
                           std::uint64_t seed, int test_cap) {
    auto split = few_shot_sample(labels, 2, n, seed, test_cap);
    Matrix train_x(static_cast<int>(split.train_indices.size()), features.cols());
    std::vector<int> train_y(split.train_indices.size());
    for (std::size_t i = 0; i < split.train_indices.size(); ++i) {
        const double* src = features.row(split.train_indices[i]);
        std::copy(src, src + features.cols(), train_x.row(static_cast<int>(i)));
        train_y[i] = labels[split.train_indices[i]];
    }
    ProbeConfig cfg;
    cfg.activation = ProbeActivation::Tanh;
    cfg.num_classes = 2;
    cfg.seed = derive_seed(seed, "probe");
    ProbeHead head = train_probe(train_x, train_y, cfg);

    std::vector<double> scores(split.test_indices.size());
    std::vector<int> truth(split.test_indices.size());
    for (std::size_t i = 0; i < split.test_indices.size(); ++i) {
        auto probs = head.forward(features.row(split.test_indices[i]), features.cols());
        scores[i] = probs[1];
        truth[i] = labels[split.test_indices[i]];
    }
    return pr_auc(scores, truth);
}

// Balanced engagement instances: held-out edges are positives; distinct
// non-edges (absent from both the training graph and the held-out set) are
// negatives.
struct EngagementData {
    std::vector<HeldoutEdge> pairs;
    std::vector<int> labels;
};

EngagementData build_engagement_instances(const SyntheticCorpus& corpus,
                                          const std::vector<HeldoutEdge>& heldout, std::uint64_t seed) {
    EngagementData data;
    std::unordered_set<std::int64_t> taken;
    auto key = [](UserId u, UrlId w) { return (static_cast<std::int64_t>(u) << 32) | w; };
    for (const auto& e : heldout) {
        data.pairs.push_back(e);
        data.labels.push_back(1);
        taken.insert(key(e.user, e.url));
    }
    Rng rng(derive_seed(seed, "engagement-negatives"));
    const int num_users = corpus.graph.num_users();
    const int num_urls = corpus.graph.num_urls();
    std::size_t wanted = heldout.size();
    std::size_t guard = 0;
    while (wanted > 0) {
        if (++guard > heldout.size() * 10000ULL)
            throw ValidationError("engagement task: cannot sample enough non-edges");
        UserId u = static_cast<UserId>(rng.uniform_index(num_users));
        UrlId w = static_cast<UrlId>(rng.uniform_index(num_urls));
        if (corpus.graph.has_edge(u, w)) continue;
        if (!taken.insert(key(u, w)).second) continue;
        data.pairs.push_back({u, w});
        data.labels.push_back(0);
        --wanted;
    }
    return data;
}

Matrix engagement_features(const EngagementData& data, const EmbeddingTable& users,
                           const Matrix& url_cls_features) {
    const int ud = users.dim;
    const int ld = url_cls_features.cols();
    Matrix out(static_cast<int>(data.pairs.size()), ud + ld);
    for (std::size_t i = 0; i < data.pairs.size(); ++i) {
        const auto& pr = data.pairs[i];
        if (pr.user < 0 || pr.user >= users.rows())
            throw ValidationError("engagement task: user " + std::to_string(pr.user) +
                                  " missing from the embedding table");
        double* r = out.row(static_cast<int>(i));
        const double* uv = users.row(pr.user);
        std::copy(uv, uv + ud, r);
        const double* lv = url_cls_features.row(pr.url);
        std::copy(lv, lv + ld, r + ud);
    }
    return out;
}

}  // namespace

MetricsReport run_task_suite(const TaskSuiteInputs& in, const TaskGridSpec& spec) {
    if (in.aligned == nullptr || in.baseline == nullptr || in.vocab == nullptr)
        throw ValidationError("run_task_suite: missing encoder or vocab input");
    if ((spec.run_topic || spec.run_hashtag) && in.topic_items == nullptr)
        throw ValidationError("run_task_suite: topic/hashtag tasks need labeled contents");
    if (spec.run_engagement &&
        (in.corpus == nullptr || in.user_table == nullptr || in.heldout == nullptr))
        throw ValidationError("run_task_suite: engagement task needs corpus, user table, held-out edges");
    if (spec.n_grid.empty()) throw ValidationError("run_task_suite: empty N grid");
    if (spec.num_seeds < 1) throw ValidationError("run_task_suite: num_seeds must be >= 1");

    MetricsReport report;
    const std::pair<std::string, const EncoderModel*> variants[] = {{"aligned", in.aligned},
                                                                    {"baseline", in.baseline}};

    // Topic + hashtag share the labeled contents; features are extracted once
    // per (variant, pooling) pair and reused across N and seeds.
    if (spec.run_topic || spec.run_hashtag) {
        std::vector<WebpageContent> contents;
        std::vector<int> labels;
        int num_classes = 0;
        for (const auto& item : *in.topic_items) {
            contents.push_back(item.content);
            labels.push_back(item.community);
            num_classes = std::max(num_classes, item.community + 1);
        }
        for (const auto& [vname, model] : variants) {
            Matrix cls_feat, mean_feat;
            if (spec.run_topic) cls_feat = extract_cls_features(*model, contents, *in.vocab);
            if (spec.run_hashtag) mean_feat = extract_mean_features(*model, contents, *in.vocab);
            for (int n : spec.n_grid) {
                for (int s = 0; s < spec.num_seeds; ++s) {
                    std::uint64_t cell_seed =
                        derive_seed(spec.seed, "cell-" + vname + "-" + std::to_string(n) + "-" + std::to_string(s));
                    if (spec.run_topic) {
                        auto cell = run_classification_cell(cls_feat, labels, num_classes,
                                                            ProbeActivation::Tanh, n, cell_seed,
                                                            spec.test_cap_per_class);
                        report.records.push_back({"topic", vname, n, static_cast<std::uint64_t>(s),
                                                  "macro_f1", cell.macro});
                        report.records.push_back({"topic", vname, n, static_cast<std::uint64_t>(s),
                                                  "micro_f1", cell.micro});
                    }
                    if (spec.run_hashtag) {
                        auto cell = run_classification_cell(mean_feat, labels, num_classes,
                                                            ProbeActivation::Relu, n, cell_seed,
                                                            spec.test_cap_per_class);
                        report.records.push_back({"hashtag", vname, n, static_cast<std::uint64_t>(s),
                                                  "macro_f1", cell.macro});
                        report.records.push_back({"hashtag", vname, n, static_cast<std::uint64_t>(s),
                                                  "micro_f1", cell.micro});
                    }
                }
            }
        }
    }

    if (spec.run_engagement) {
        EngagementData data = build_engagement_instances(*in.corpus, *in.heldout, spec.seed);
        for (const auto& [vname, model] : variants) {
            Matrix url_feat = extract_cls_features(*model, in.corpus->contents, *in.vocab);
            Matrix features = engagement_features(data, *in.user_table, url_feat);
            for (int n : spec.n_grid) {
                for (int s = 0; s < spec.num_seeds; ++s) {
                    std::uint64_t cell_seed = derive_seed(
                        spec.seed, "eng-" + vname + "-" + std::to_string(n) + "-" + std::to_string(s));
                    double auc =
                        run_engagement_cell(features, data.labels, n, cell_seed, spec.test_cap_per_class);
                    report.records.push_back(
                        {"engagement", vname, n, static_cast<std::uint64_t>(s), "pr_auc", auc});
                }
            }
        }
    }
    return report;
}

}  // namespace webrep
