#pragma once

#include <cstdint>
#include <vector>

#include "webrep/embedding.hpp"
#include "webrep/encoder.hpp"
#include "webrep/synthetic.hpp"
#include "webrep/tokenizer.hpp"

namespace webrep {

struct AlignConfig {
    double temperature = 0.01;
    int batch_size = 128;
    int epochs = 3;
    double learning_rate = 3e-5;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 1;
};

// Cosine similarity in [-1, 1]. Throws ValidationError on zero vectors or a
// dimension mismatch.
double cosine_sim(const std::vector<double>& a, const std::vector<double>& b);
double cosine_sim(const double* a, const double* b, int dim);

// Mean in-batch-negative InfoNCE over rows: reps and targets are B x d.
// L_i = -log( exp(cos(f_i, g_i)/tau) / sum_j exp(cos(f_i, g_j)/tau) ), with the
// denominator over exactly the B batch targets (including j = i). Log-sum-exp
// is computed with max subtraction. d_reps, when non-null, receives dL/d reps.
double info_nce_loss(const Matrix& reps, const Matrix& targets, double temperature,
                     Matrix* d_reps = nullptr);

struct AlignLogRow {
    int epoch = 0;  // 0 rows are the pre-training evaluation pass
    int step = 0;
    double loss = 0.0;
};

struct AlignResult {
    std::vector<AlignLogRow> log;            // one row per optimizer step
    std::vector<double> epoch_mean_loss;     // index 0 = pre-training evaluation
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

// Stage-2 distillation: aligns pool_cls(encoder(t_i)) with the frozen rows of
// url_table under InfoNCE. Shuffles URL ids per epoch, forms duplicate-free
// batches, trains encoder+pooler only; a final partial batch is processed if
// it has >= 2 items and dropped otherwise.
AlignResult train_align(EncoderModel& encoder, const std::vector<WebpageContent>& corpus,
                        const Vocab& vocab, const EmbeddingTable& url_table, const AlignConfig& cfg);

// Fraction of URLs whose own table row ranks within the top k by cosine
// against the pooled representation.
double retrieval_accuracy(const EncoderModel& encoder, const std::vector<WebpageContent>& corpus,
                          const Vocab& vocab, const EmbeddingTable& url_table, int k);

}  // namespace webrep
