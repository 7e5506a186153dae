#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "webrep/matrix.hpp"
#include "webrep/tokenizer.hpp"

namespace webrep {

struct EncoderConfig {
    int layers = 4;
    int heads = 4;
    int model_dim = 128;
    int ffn_dim = 512;
    int max_positions = kDefaultMaxTokens;
    double dropout = 0.1;  // applied in train mode only
    int vocab_size = 0;
    int pooler_dim = 128;  // must equal the graph embedding dim at alignment time
    // Weight init stddev. A from-scratch encoder this small needs a larger
    // scale than fine-tuning conventions, or every input pools to nearly the
    // same vector and alignment has nothing to separate.
    double init_std = 0.2;
    std::uint64_t seed = 1;

    void validate() const;
    bool same_shape(const EncoderConfig& o) const;
};

struct EncoderLayer {
    Matrix wq, wk, wv, wo;  // model_dim x model_dim
    Matrix bq, bk, bv, bo;  // 1 x model_dim
    Matrix ln1_gamma, ln1_beta;
    Matrix w1, b1;          // model_dim x ffn_dim, 1 x ffn_dim
    Matrix w2, b2;          // ffn_dim x model_dim, 1 x model_dim
    Matrix ln2_gamma, ln2_beta;
};

// Post-layernorm transformer encoder with a tanh CLS pooler. The same struct
// doubles as a gradient accumulator (zeros_like + visit_params).
struct EncoderModel {
    EncoderConfig config;
    Matrix tok_emb;  // vocab_size x model_dim
    Matrix pos_emb;  // max_positions x model_dim
    std::vector<EncoderLayer> layers;
    Matrix pooler_w;  // model_dim x pooler_dim
    Matrix pooler_b;  // 1 x pooler_dim

    static EncoderModel init(const EncoderConfig& cfg);        // seeded random init
    static EncoderModel zeros_like(const EncoderConfig& cfg);  // gradient accumulator
};

// Visits every parameter tensor in a fixed canonical order.
void visit_params(EncoderModel& m, const std::function<void(const std::string&, Matrix&)>& fn);
void visit_params(const EncoderModel& m, const std::function<void(const std::string&, const Matrix&)>& fn);
std::size_t parameter_count(const EncoderModel& m);

// Per-layer activation cache for backward.
struct LayerCache {
    Matrix input;
    Matrix q, k, v;
    std::vector<Matrix> probs;  // per head, L x L
    Matrix ctx;                 // concatenated heads
    Matrix attn_out;
    Matrix attn_drop_mask;
    Matrix ln1_in, ln1_out;
    std::vector<double> ln1_mean, ln1_rstd;
    Matrix ffn_pre, ffn_act, ffn_out;
    Matrix ffn_drop_mask;
    Matrix ln2_in;
    std::vector<double> ln2_mean, ln2_rstd;
};

struct ForwardCache {
    TokenSequence seq;
    Matrix emb;  // embedding output (post dropout)
    Matrix emb_drop_mask;
    std::vector<LayerCache> layers;
    Matrix hidden;               // final states, L x model_dim
    std::vector<double> cls_pre; // pooler pre-activation
    std::vector<double> pooled;  // tanh pooled rep
};

// Full forward pass with activation caching. Dropout is active only when
// train is set and cfg.dropout > 0; the rng then supplies the masks.
ForwardCache encoder_forward(const EncoderModel& m, const TokenSequence& seq, bool train = false,
                             Rng* dropout_rng = nullptr);

// Eval-mode hidden states (L x model_dim). PAD positions are masked out of
// attention as keys, so a padded and an unpadded copy of the same sequence
// produce identical states at non-PAD positions.
Matrix encode(const EncoderModel& m, const TokenSequence& seq);

// tanh(W_pooler . e_cls + b); every component lies strictly inside (-1, 1).
std::vector<double> pool_cls(const EncoderModel& m, const Matrix& hidden);

// Mean over content positions (URL/title/description segments).
std::vector<double> pool_mean(const Matrix& hidden, const TokenSequence& seq);

// Accumulates parameter gradients into `grads` for the given upstream
// gradients. d_hidden may be empty (treated as zero); d_pooled likewise.
void encoder_backward(const EncoderModel& m, const ForwardCache& cache, const Matrix& d_hidden,
                      const std::vector<double>& d_pooled, EncoderModel& grads);

// Loss closure over a batch of cached forwards: fills d_pooled (B x pooler_dim)
// and optionally per-sequence d_hidden, returns the scalar loss.
struct BatchLossGrad {
    double loss = 0.0;
    Matrix d_pooled;                // B x pooler_dim, may be empty
    std::vector<Matrix> d_hidden;   // per sequence, may be empty
};
using BatchLossFn = std::function<BatchLossGrad(const std::vector<ForwardCache>&)>;

// Exact reverse-mode gradients of a scalar loss over a batch. Throws
// NumericError naming the parameter if any gradient is non-finite. When train
// is set, dropout masks are drawn from streams derived from dropout_seed, so
// results do not depend on thread count.
EncoderModel parameter_gradients(const EncoderModel& m, const std::vector<TokenSequence>& batch,
                                 const BatchLossFn& loss, double* loss_out = nullptr, bool train = false,
                                 std::uint64_t dropout_seed = 0);

// Versioned binary checkpoint; load validates shapes against the config block.
void save_encoder(const EncoderModel& m, const std::string& path);
EncoderModel load_encoder(const std::string& path);

}  // namespace webrep
