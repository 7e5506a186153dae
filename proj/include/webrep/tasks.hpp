#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "webrep/align.hpp"
#include "webrep/embedding.hpp"
#include "webrep/encoder.hpp"
#include "webrep/probes.hpp"
#include "webrep/synthetic.hpp"

namespace webrep {

// Declarative description of the few-shot evaluation run: which tasks, the
// N grid, and how many seeds per cell.
struct TaskGridSpec {
    std::vector<int> n_grid = {8, 16, 64, 128, 256, 512};
    int num_seeds = 1;
    std::uint64_t seed = 1;
    int test_cap_per_class = 10000;
    bool run_topic = true;
    bool run_hashtag = true;
    bool run_engagement = true;
};

struct MetricRecord {
    std::string task;     // topic | hashtag | engagement
    std::string variant;  // aligned | baseline
    int n = 0;
    std::uint64_t seed = 0;
    std::string metric;   // macro_f1 | micro_f1 | pr_auc
    double value = 0.0;
};

struct MetricsReport {
    std::vector<MetricRecord> records;

    std::string to_tsv() const;
    double get(const std::string& task, const std::string& variant, int n, std::uint64_t seed,
               const std::string& metric) const;
    // Mean over seeds for one cell.
    double mean(const std::string& task, const std::string& variant, int n, const std::string& metric) const;
};

struct TaskSuiteInputs {
    const EncoderModel* aligned = nullptr;
    const EncoderModel* baseline = nullptr;
    const Vocab* vocab = nullptr;
    // Topic/hashtag instances: labeled contents disjoint from the graph corpus.
    const std::vector<LabeledContent>* topic_items = nullptr;
    // Engagement instances are built from the graph corpus and held-out edges.
    const SyntheticCorpus* corpus = nullptr;
    const EmbeddingTable* user_table = nullptr;
    const std::vector<HeldoutEdge>* heldout = nullptr;
};

// Frozen-encoder few-shot suite over (task, variant, N, seed) cells:
//  - topic: pool_cls features of fresh labeled contents, tanh probe, F1.
//  - hashtag: pool_mean features of the same contents, ReLU probe, F1.
//  - engagement: user embedding (+) pool_cls URL feature, tanh probe, PR-AUC
//    over held-out positive edges vs sampled non-edges (balanced).
MetricsReport run_task_suite(const TaskSuiteInputs& in, const TaskGridSpec& spec);

// Pool_cls features for a list of contents (row per item). Parallel over items.
Matrix extract_cls_features(const EncoderModel& m, const std::vector<WebpageContent>& contents,
                            const Vocab& vocab);
Matrix extract_mean_features(const EncoderModel& m, const std::vector<WebpageContent>& contents,
                             const Vocab& vocab);

}  // namespace webrep
