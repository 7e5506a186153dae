#include "webrep/encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <omp.h>

#include "webrep/common.hpp"
#include "webrep/kernels.hpp"

namespace webrep {

namespace {

constexpr double kLayerNormEps = 1e-12;
constexpr double kMaskScore = -1e30;
constexpr double kInvSqrt2 = 0.7071067811865476;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

// tanh saturates to exactly +/-1 in doubles; the pooled representation is
// contractually inside the open interval.
double bounded_tanh(double x) {
    double v = std::tanh(x);
    if (v >= 1.0) return std::nextafter(1.0, 0.0);
    if (v <= -1.0) return std::nextafter(-1.0, 0.0);
    return v;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }
double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

void add_bias(Matrix& x, const Matrix& bias) {
    for (int i = 0; i < x.rows(); ++i) {
        double* r = x.row(i);
        const double* b = bias.row(0);
        for (int j = 0; j < x.cols(); ++j) r[j] += b[j];
    }
}

Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b) {
    Matrix out = kernels::matmul(x, w);
    add_bias(out, b);
    return out;
}

// Backward of out = x*w + b: accumulates dw, db; returns dx.
Matrix linear_backward(const Matrix& x, const Matrix& w, const Matrix& d_out, Matrix& dw, Matrix& db) {
    Matrix dx = kernels::matmul_nt(d_out, w);  // d_out * w^T
    Matrix dw_local = kernels::matmul_tn(x, d_out);
    for (std::size_t i = 0; i < dw.size(); ++i) dw.data()[i] += dw_local.data()[i];
    for (int i = 0; i < d_out.rows(); ++i) {
        const double* r = d_out.row(i);
        double* b = db.row(0);
        for (int j = 0; j < d_out.cols(); ++j) b[j] += r[j];
    }
    return dx;
}

void layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta, Matrix& out,
                std::vector<double>& means, std::vector<double>& rstds) {
    const int n = x.cols();
    out = Matrix(x.rows(), n);
    means.resize(x.rows());
    rstds.resize(x.rows());
    for (int i = 0; i < x.rows(); ++i) {
        const double* r = x.row(i);
        double mean = 0.0;
        for (int j = 0; j < n; ++j) mean += r[j];
        mean /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) var += (r[j] - mean) * (r[j] - mean);
        var /= n;
        double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
        means[i] = mean;
        rstds[i] = rstd;
        double* o = out.row(i);
        const double* g = gamma.row(0);
        const double* b = beta.row(0);
        for (int j = 0; j < n; ++j) o[j] = (r[j] - mean) * rstd * g[j] + b[j];
    }
}

// Backward of layer_norm; returns dx and accumulates dgamma/dbeta.
Matrix layer_norm_backward(const Matrix& x, const Matrix& gamma, const std::vector<double>& means,
                           const std::vector<double>& rstds, const Matrix& d_out, Matrix& dgamma,
                           Matrix& dbeta) {
    const int n = x.cols();
    Matrix dx(x.rows(), n);
    for (int i = 0; i < x.rows(); ++i) {
        const double* r = x.row(i);
        const double* dy = d_out.row(i);
        const double* g = gamma.row(0);
        double* dg = dgamma.row(0);
        double* db = dbeta.row(0);
        const double mean = means[i];
        const double rstd = rstds[i];
        double sum_gdy = 0.0, sum_gdy_xhat = 0.0;
        for (int j = 0; j < n; ++j) {
            double xhat = (r[j] - mean) * rstd;
            double gdy = dy[j] * g[j];
            sum_gdy += gdy;
            sum_gdy_xhat += gdy * xhat;
            dg[j] += dy[j] * xhat;
            db[j] += dy[j];
        }
        const double inv_n = 1.0 / n;
        double* dxr = dx.row(i);
        for (int j = 0; j < n; ++j) {
            double xhat = (r[j] - mean) * rstd;
            double gdy = dy[j] * g[j];
            dxr[j] = rstd * (gdy - inv_n * sum_gdy - xhat * inv_n * sum_gdy_xhat);
        }
    }
    return dx;
}

Matrix make_dropout_mask(int rows, int cols, double p, Rng& rng) {
    Matrix mask(rows, cols);
    const double keep = 1.0 - p;
    const double scale = 1.0 / keep;
    for (int i = 0; i < rows; ++i) {
        double* r = mask.row(i);
        for (int j = 0; j < cols; ++j) r[j] = rng.uniform() < keep ? scale : 0.0;
    }
    return mask;
}

void apply_mask_inplace(Matrix& x, const Matrix& mask) {
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] *= mask.data()[i];
}

Matrix masked(const Matrix& x, const Matrix& mask) {
    if (mask.rows() == 0) return x;
    Matrix out = x;
    apply_mask_inplace(out, mask);
    return out;
}

void accumulate(Matrix& into, const Matrix& from) {
    for (std::size_t i = 0; i < into.size(); ++i) into.data()[i] += from.data()[i];
}

}  // namespace

void EncoderConfig::validate() const {
    if (layers < 1) throw ValidationError("encoder: layers must be >= 1");
    if (heads < 1 || model_dim % heads != 0)
        throw ValidationError("encoder: model_dim must be divisible by heads");
    if (ffn_dim < 1) throw ValidationError("encoder: ffn_dim must be >= 1");
    if (max_positions < 1) throw ValidationError("encoder: max_positions must be >= 1");
    if (vocab_size < kFirstCorpusId) throw ValidationError("encoder: vocab_size must cover reserved ids");
    if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("encoder: dropout must be in [0, 1)");
    if (pooler_dim < 1) throw ValidationError("encoder: pooler_dim must be >= 1");
    if (init_std <= 0.0) throw ValidationError("encoder: init_std must be positive");
}

bool EncoderConfig::same_shape(const EncoderConfig& o) const {
    return layers == o.layers && heads == o.heads && model_dim == o.model_dim && ffn_dim == o.ffn_dim &&
           max_positions == o.max_positions && vocab_size == o.vocab_size && pooler_dim == o.pooler_dim;
}

EncoderModel EncoderModel::zeros_like(const EncoderConfig& cfg) {
    cfg.validate();
    EncoderModel m;
    m.config = cfg;
    m.tok_emb = Matrix(cfg.vocab_size, cfg.model_dim);
    m.pos_emb = Matrix(cfg.max_positions, cfg.model_dim);
    m.layers.resize(cfg.layers);
    for (auto& l : m.layers) {
        l.wq = l.wk = l.wv = l.wo = Matrix(cfg.model_dim, cfg.model_dim);
        l.bq = l.bk = l.bv = l.bo = Matrix(1, cfg.model_dim);
        l.ln1_gamma = l.ln1_beta = l.ln2_gamma = l.ln2_beta = Matrix(1, cfg.model_dim);
        l.w1 = Matrix(cfg.model_dim, cfg.ffn_dim);
        l.b1 = Matrix(1, cfg.ffn_dim);
        l.w2 = Matrix(cfg.ffn_dim, cfg.model_dim);
        l.b2 = Matrix(1, cfg.model_dim);
    }
    m.pooler_w = Matrix(cfg.model_dim, cfg.pooler_dim);
    m.pooler_b = Matrix(1, cfg.pooler_dim);
    return m;
}

EncoderModel EncoderModel::init(const EncoderConfig& cfg) {
    EncoderModel m = zeros_like(cfg);
    Rng rng(derive_seed(cfg.seed, "encoder-init"));
    const double std = cfg.init_std;
    m.tok_emb.fill_normal(rng, 0.0, std);
    m.pos_emb.fill_normal(rng, 0.0, std);
    for (auto& l : m.layers) {
        l.wq.fill_normal(rng, 0.0, std);
        l.wk.fill_normal(rng, 0.0, std);
        l.wv.fill_normal(rng, 0.0, std);
        l.wo.fill_normal(rng, 0.0, std);
        l.ln1_gamma.fill(1.0);
        l.ln2_gamma.fill(1.0);
        l.w1.fill_normal(rng, 0.0, std);
        l.w2.fill_normal(rng, 0.0, std);
    }
    m.pooler_w.fill_normal(rng, 0.0, std);
    return m;
}

void visit_params(EncoderModel& m, const std::function<void(const std::string&, Matrix&)>& fn) {
    fn("tok_emb", m.tok_emb);
    fn("pos_emb", m.pos_emb);
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        auto& l = m.layers[i];
        const std::string p = "layer" + std::to_string(i) + ".";
        fn(p + "wq", l.wq);
        fn(p + "bq", l.bq);
        fn(p + "wk", l.wk);
        fn(p + "bk", l.bk);
        fn(p + "wv", l.wv);
        fn(p + "bv", l.bv);
        fn(p + "wo", l.wo);
        fn(p + "bo", l.bo);
        fn(p + "ln1_gamma", l.ln1_gamma);
        fn(p + "ln1_beta", l.ln1_beta);
        fn(p + "w1", l.w1);
        fn(p + "b1", l.b1);
        fn(p + "w2", l.w2);
        fn(p + "b2", l.b2);
        fn(p + "ln2_gamma", l.ln2_gamma);
        fn(p + "ln2_beta", l.ln2_beta);
    }
    fn("pooler_w", m.pooler_w);
    fn("pooler_b", m.pooler_b);
}

void visit_params(const EncoderModel& m, const std::function<void(const std::string&, const Matrix&)>& fn) {
    visit_params(const_cast<EncoderModel&>(m),
                 [&](const std::string& name, Matrix& t) { fn(name, const_cast<const Matrix&>(t)); });
}

std::size_t parameter_count(const EncoderModel& m) {
    std::size_t n = 0;
    visit_params(m, [&](const std::string&, const Matrix& t) { n += t.size(); });
    return n;
}

ForwardCache encoder_forward(const EncoderModel& m, const TokenSequence& seq, bool train, Rng* dropout_rng) {
    const auto& cfg = m.config;
    const int L = seq.length();
    const int d = cfg.model_dim;
    if (L < 1) throw ValidationError("encode: empty sequence");
    if (L > cfg.max_positions) throw ValidationError("encode: sequence length exceeds max_positions");
    for (int i = 0; i < L; ++i)
        if (seq.ids[i] < 0 || seq.ids[i] >= cfg.vocab_size)
            throw ValidationError("encode: token id out of range at position " + std::to_string(i));

    const bool use_dropout = train && cfg.dropout > 0.0 && dropout_rng != nullptr;

    ForwardCache cache;
    cache.seq = seq;

    Matrix x(L, d);
    for (int i = 0; i < L; ++i) {
        const double* te = m.tok_emb.row(seq.ids[i]);
        const double* pe = m.pos_emb.row(i);
        double* r = x.row(i);
        for (int j = 0; j < d; ++j) r[j] = te[j] + pe[j];
    }
    if (use_dropout) {
        cache.emb_drop_mask = make_dropout_mask(L, d, cfg.dropout, *dropout_rng);
        apply_mask_inplace(x, cache.emb_drop_mask);
    }
    cache.emb = x;

    const int heads = cfg.heads;
    const int dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    cache.layers.resize(cfg.layers);
    for (int li = 0; li < cfg.layers; ++li) {
        const auto& l = m.layers[li];
        auto& c = cache.layers[li];
        c.input = x;

        c.q = linear(x, l.wq, l.bq);
        c.k = linear(x, l.wk, l.bk);
        c.v = linear(x, l.wv, l.bv);

        c.probs.assign(heads, Matrix(L, L));
        c.ctx = Matrix(L, d);
        for (int h = 0; h < heads; ++h) {
            const int off = h * dh;
            Matrix& probs = c.probs[h];
            for (int i = 0; i < L; ++i) {
                double* p = probs.row(i);
                double maxv = -1e300;
                for (int j = 0; j < L; ++j) {
                    double s = kernels::dot(c.q.row(i) + off, c.k.row(j) + off, dh) * scale;
                    if (seq.ids[j] == kPadId) s = kMaskScore;  // PAD keys carry no attention
                    p[j] = s;
                    if (s > maxv) maxv = s;
                }
                double denom = 0.0;
                for (int j = 0; j < L; ++j) {
                    p[j] = std::exp(p[j] - maxv);
                    denom += p[j];
                }
                for (int j = 0; j < L; ++j) p[j] /= denom;
                double* ctx = c.ctx.row(i) + off;
                for (int j = 0; j < L; ++j) {
                    const double pj = p[j];
                    if (pj == 0.0) continue;
                    const double* vj = c.v.row(j) + off;
                    for (int t = 0; t < dh; ++t) ctx[t] += pj * vj[t];
                }
            }
        }

        c.attn_out = linear(c.ctx, l.wo, l.bo);
        if (use_dropout) {
            c.attn_drop_mask = make_dropout_mask(L, d, cfg.dropout, *dropout_rng);
            apply_mask_inplace(c.attn_out, c.attn_drop_mask);
        }

        c.ln1_in = x;
        accumulate(c.ln1_in, c.attn_out);
        layer_norm(c.ln1_in, l.ln1_gamma, l.ln1_beta, c.ln1_out, c.ln1_mean, c.ln1_rstd);

        c.ffn_pre = linear(c.ln1_out, l.w1, l.b1);
        c.ffn_act = Matrix(L, cfg.ffn_dim);
        for (std::size_t i = 0; i < c.ffn_pre.size(); ++i) c.ffn_act.data()[i] = gelu(c.ffn_pre.data()[i]);
        c.ffn_out = linear(c.ffn_act, l.w2, l.b2);
        if (use_dropout) {
            c.ffn_drop_mask = make_dropout_mask(L, d, cfg.dropout, *dropout_rng);
            apply_mask_inplace(c.ffn_out, c.ffn_drop_mask);
        }

        c.ln2_in = c.ln1_out;
        accumulate(c.ln2_in, c.ffn_out);
        Matrix out;
        layer_norm(c.ln2_in, l.ln2_gamma, l.ln2_beta, out, c.ln2_mean, c.ln2_rstd);
        x = out;
    }
    cache.hidden = x;

    const int pd = cfg.pooler_dim;
    cache.cls_pre.assign(pd, 0.0);
    const double* cls = cache.hidden.row(0);
    for (int c = 0; c < d; ++c) {
        const double e = cls[c];
        const double* w = m.pooler_w.row(c);
        for (int j = 0; j < pd; ++j) cache.cls_pre[j] += e * w[j];
    }
    for (int j = 0; j < pd; ++j) cache.cls_pre[j] += m.pooler_b(0, j);
    cache.pooled.resize(pd);
    for (int j = 0; j < pd; ++j) cache.pooled[j] = bounded_tanh(cache.cls_pre[j]);
    return cache;
}

Matrix encode(const EncoderModel& m, const TokenSequence& seq) {
    return encoder_forward(m, seq, false, nullptr).hidden;
}

std::vector<double> pool_cls(const EncoderModel& m, const Matrix& hidden) {
    if (hidden.rows() < 1) throw ValidationError("pool_cls: empty hidden states");
    if (hidden.cols() != m.config.model_dim) throw ValidationError("pool_cls: hidden width mismatch");
    const int pd = m.config.pooler_dim;
    std::vector<double> out(pd, 0.0);
    const double* cls = hidden.row(0);
    for (int c = 0; c < hidden.cols(); ++c) {
        const double e = cls[c];
        const double* w = m.pooler_w.row(c);
        for (int j = 0; j < pd; ++j) out[j] += e * w[j];
    }
    for (int j = 0; j < pd; ++j) out[j] = bounded_tanh(out[j] + m.pooler_b(0, j));
    return out;
}

std::vector<double> pool_mean(const Matrix& hidden, const TokenSequence& seq) {
    if (hidden.rows() != seq.length()) throw ValidationError("pool_mean: hidden/sequence length mismatch");
    std::vector<double> out(hidden.cols(), 0.0);
    int n = 0;
    for (int i = 0; i < seq.length(); ++i) {
        if (seq.segments[i] == Segment::Special) continue;
        const double* r = hidden.row(i);
        for (int j = 0; j < hidden.cols(); ++j) out[j] += r[j];
        ++n;
    }
    if (n == 0) throw ValidationError("pool_mean: sequence has no content positions");
    for (auto& x : out) x /= n;
    return out;
}

void encoder_backward(const EncoderModel& m, const ForwardCache& cache, const Matrix& d_hidden,
                      const std::vector<double>& d_pooled, EncoderModel& grads) {
    const auto& cfg = m.config;
    const int L = cache.seq.length();
    const int d = cfg.model_dim;
    const int heads = cfg.heads;
    const int dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Matrix dx(L, d);
    if (d_hidden.rows() > 0) {
        if (d_hidden.rows() != L || d_hidden.cols() != d)
            throw ValidationError("encoder_backward: d_hidden shape mismatch");
        dx = d_hidden;
    }

    if (!d_pooled.empty()) {
        if (static_cast<int>(d_pooled.size()) != cfg.pooler_dim)
            throw ValidationError("encoder_backward: d_pooled size mismatch");
        // pooled = tanh(cls_pre)
        std::vector<double> d_pre(cfg.pooler_dim);
        for (int j = 0; j < cfg.pooler_dim; ++j)
            d_pre[j] = d_pooled[j] * (1.0 - cache.pooled[j] * cache.pooled[j]);
        const double* cls = cache.hidden.row(0);
        double* dcls = dx.row(0);
        for (int c = 0; c < d; ++c) {
            const double* w = m.pooler_w.row(c);
            double* gw = grads.pooler_w.row(c);
            double acc = 0.0;
            for (int j = 0; j < cfg.pooler_dim; ++j) {
                gw[j] += cls[c] * d_pre[j];
                acc += w[j] * d_pre[j];
            }
            dcls[c] += acc;
        }
        double* gb = grads.pooler_b.row(0);
        for (int j = 0; j < cfg.pooler_dim; ++j) gb[j] += d_pre[j];
    }

    for (int li = cfg.layers - 1; li >= 0; --li) {
        const auto& l = m.layers[li];
        const auto& c = cache.layers[li];
        auto& gl = grads.layers[li];

        // x_out = LN2(ln2_in)
        Matrix d_ln2_in = layer_norm_backward(c.ln2_in, l.ln2_gamma, c.ln2_mean, c.ln2_rstd, dx,
                                              gl.ln2_gamma, gl.ln2_beta);
        // ln2_in = ln1_out + dropout(ffn_out)
        Matrix d_ffn_out = masked(d_ln2_in, c.ffn_drop_mask);
        Matrix d_ln1_out = d_ln2_in;

        // ffn_out = ffn_act*w2 + b2; ffn_act = gelu(ffn_pre); ffn_pre = ln1_out*w1 + b1
        Matrix d_ffn_act = linear_backward(c.ffn_act, l.w2, d_ffn_out, gl.w2, gl.b2);
        Matrix d_ffn_pre(L, cfg.ffn_dim);
        for (std::size_t i = 0; i < d_ffn_pre.size(); ++i)
            d_ffn_pre.data()[i] = d_ffn_act.data()[i] * gelu_grad(c.ffn_pre.data()[i]);
        accumulate(d_ln1_out, linear_backward(c.ln1_out, l.w1, d_ffn_pre, gl.w1, gl.b1));

        // ln1_out = LN1(ln1_in); ln1_in = input + dropout(attn_out)
        Matrix d_ln1_in = layer_norm_backward(c.ln1_in, l.ln1_gamma, c.ln1_mean, c.ln1_rstd, d_ln1_out,
                                              gl.ln1_gamma, gl.ln1_beta);
        Matrix d_attn_out = masked(d_ln1_in, c.attn_drop_mask);
        dx = d_ln1_in;

        // attn_out = ctx*wo + bo
        Matrix d_ctx = linear_backward(c.ctx, l.wo, d_attn_out, gl.wo, gl.bo);

        Matrix dq(L, d), dk(L, d), dv(L, d);
        for (int h = 0; h < heads; ++h) {
            const int off = h * dh;
            const Matrix& probs = c.probs[h];
            for (int i = 0; i < L; ++i) {
                const double* dctx = d_ctx.row(i) + off;
                const double* p = probs.row(i);
                // dV += P^T * dctx ; dP = dctx . V^T
                double dot_pdp = 0.0;
                std::vector<double> dp(L);
                for (int j = 0; j < L; ++j) {
                    const double* vj = c.v.row(j) + off;
                    double s = kernels::dot(dctx, vj, dh);
                    dp[j] = s;
                    dot_pdp += s * p[j];
                    if (p[j] != 0.0) {
                        double* dvj = dv.row(j) + off;
                        for (int t = 0; t < dh; ++t) dvj[t] += p[j] * dctx[t];
                    }
                }
                // softmax backward: ds = p .* (dp - sum(p .* dp))
                double* dqi = dq.row(i) + off;
                for (int j = 0; j < L; ++j) {
                    double ds = p[j] * (dp[j] - dot_pdp);
                    if (ds == 0.0) continue;
                    const double dss = ds * scale;
                    const double* kj = c.k.row(j) + off;
                    double* dkj = dk.row(j) + off;
                    const double* qi = c.q.row(i) + off;
                    for (int t = 0; t < dh; ++t) {
                        dqi[t] += dss * kj[t];
                        dkj[t] += dss * qi[t];
                    }
                }
            }
        }

        accumulate(dx, linear_backward(c.input, l.wq, dq, gl.wq, gl.bq));
        accumulate(dx, linear_backward(c.input, l.wk, dk, gl.wk, gl.bk));
        accumulate(dx, linear_backward(c.input, l.wv, dv, gl.wv, gl.bv));
    }

    Matrix d_emb = masked(dx, cache.emb_drop_mask);
    for (int i = 0; i < L; ++i) {
        const double* r = d_emb.row(i);
        double* gt = grads.tok_emb.row(cache.seq.ids[i]);
        double* gp = grads.pos_emb.row(i);
        for (int j = 0; j < d; ++j) {
            gt[j] += r[j];
            gp[j] += r[j];
        }
    }
}

namespace {

void check_gradients_finite(const EncoderModel& grads) {
    std::string bad;
    visit_params(grads, [&](const std::string& name, const Matrix& t) {
        if (!bad.empty()) return;
        for (std::size_t i = 0; i < t.size(); ++i)
            if (!std::isfinite(t.data()[i])) {
                bad = name;
                return;
            }
    });
    if (!bad.empty()) throw NumericError("parameter_gradients: non-finite gradient in " + bad);
}

}  // namespace

EncoderModel parameter_gradients(const EncoderModel& m, const std::vector<TokenSequence>& batch,
                                 const BatchLossFn& loss, double* loss_out, bool train,
                                 std::uint64_t dropout_seed) {
    if (batch.empty()) throw ValidationError("parameter_gradients: empty batch");
    // Validate up front so the parallel loop below cannot throw.
    for (const auto& seq : batch) {
        if (seq.length() < 1) throw ValidationError("parameter_gradients: empty sequence in batch");
        if (seq.length() > m.config.max_positions)
            throw ValidationError("parameter_gradients: sequence exceeds max_positions");
        for (int id : seq.ids)
            if (id < 0 || id >= m.config.vocab_size)
                throw ValidationError("parameter_gradients: token id out of range");
    }

    std::vector<ForwardCache> caches(batch.size());
    const int nt = num_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(batch.size()); ++i) {
        if (train && m.config.dropout > 0.0) {
            Rng rng(derive_seed(dropout_seed, "dropout-" + std::to_string(i)));
            caches[i] = encoder_forward(m, batch[i], true, &rng);
        } else {
            caches[i] = encoder_forward(m, batch[i], false, nullptr);
        }
    }

    BatchLossGrad bl = loss(caches);
    if (loss_out != nullptr) *loss_out = bl.loss;
    if (!std::isfinite(bl.loss)) throw NumericError("parameter_gradients: non-finite loss");

    const Matrix empty;
    auto backward_one = [&](std::size_t i, EncoderModel& acc) {
        std::vector<double> d_pooled;
        if (bl.d_pooled.rows() > 0) {
            d_pooled.assign(bl.d_pooled.row(static_cast<int>(i)),
                            bl.d_pooled.row(static_cast<int>(i)) + bl.d_pooled.cols());
        }
        const Matrix& dh = i < bl.d_hidden.size() ? bl.d_hidden[i] : empty;
        encoder_backward(m, caches[i], dh, d_pooled, acc);
    };

    EncoderModel grads = EncoderModel::zeros_like(m.config);
    if (nt == 1 || batch.size() == 1) {
        for (std::size_t i = 0; i < batch.size(); ++i) backward_one(i, grads);
    } else {
        // Per-thread accumulators reduced in thread order: deterministic for
        // a fixed thread count.
        std::vector<EncoderModel> partial(nt, EncoderModel::zeros_like(m.config));
#pragma omp parallel num_threads(nt)
        {
            const int tid = omp_get_thread_num();
#pragma omp for schedule(static)
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(batch.size()); ++i)
                backward_one(static_cast<std::size_t>(i), partial[tid]);
        }
        std::vector<Matrix*> dst;
        visit_params(grads, [&](const std::string&, Matrix& g) { dst.push_back(&g); });
        for (int t = 0; t < nt; ++t) {
            std::vector<const Matrix*> src;
            visit_params(partial[t], [&](const std::string&, const Matrix& g) { src.push_back(&g); });
            for (std::size_t p = 0; p < dst.size(); ++p)
                for (std::size_t i = 0; i < dst[p]->size(); ++i) dst[p]->data()[i] += src[p]->data()[i];
        }
    }
    check_gradients_finite(grads);
    return grads;
}

namespace {

constexpr char kEncoderMagic[8] = {'W', 'R', 'E', 'N', 'C', '0', '0', '1'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& v, const char* what) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw FormatError(std::string("encoder checkpoint: truncated while reading ") + what);
}

}  // namespace

void save_encoder(const EncoderModel& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write encoder checkpoint: " + path);
    out.write(kEncoderMagic, sizeof(kEncoderMagic));
    write_pod(out, static_cast<std::uint32_t>(m.config.layers));
    write_pod(out, static_cast<std::uint32_t>(m.config.heads));
    write_pod(out, static_cast<std::uint32_t>(m.config.model_dim));
    write_pod(out, static_cast<std::uint32_t>(m.config.ffn_dim));
    write_pod(out, static_cast<std::uint32_t>(m.config.max_positions));
    write_pod(out, static_cast<std::uint32_t>(m.config.vocab_size));
    write_pod(out, static_cast<std::uint32_t>(m.config.pooler_dim));
    write_pod(out, m.config.dropout);
    write_pod(out, m.config.init_std);
    write_pod(out, m.config.seed);
    visit_params(m, [&](const std::string& name, const Matrix& t) {
        write_pod(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod(out, static_cast<std::uint32_t>(t.rows()));
        write_pod(out, static_cast<std::uint32_t>(t.cols()));
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.size() * sizeof(double)));
    });
    if (!out) throw Error("short write on encoder checkpoint: " + path);
}

EncoderModel load_encoder(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("encoder checkpoint does not exist: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kEncoderMagic, sizeof(magic)) != 0)
        throw FormatError("encoder checkpoint: bad magic or version: " + path);

    EncoderConfig cfg;
    std::uint32_t u;
    read_pod(in, u, "layers");
    cfg.layers = static_cast<int>(u);
    read_pod(in, u, "heads");
    cfg.heads = static_cast<int>(u);
    read_pod(in, u, "model_dim");
    cfg.model_dim = static_cast<int>(u);
    read_pod(in, u, "ffn_dim");
    cfg.ffn_dim = static_cast<int>(u);
    read_pod(in, u, "max_positions");
    cfg.max_positions = static_cast<int>(u);
    read_pod(in, u, "vocab_size");
    cfg.vocab_size = static_cast<int>(u);
    read_pod(in, u, "pooler_dim");
    cfg.pooler_dim = static_cast<int>(u);
    read_pod(in, cfg.dropout, "dropout");
    read_pod(in, cfg.init_std, "init_std");
    read_pod(in, cfg.seed, "seed");

    EncoderModel m = EncoderModel::zeros_like(cfg);
    bool ok = true;
    std::string detail;
    visit_params(m, [&](const std::string& name, Matrix& t) {
        if (!ok) return;
        std::uint32_t name_len = 0, rows = 0, cols = 0;
        in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
        if (!in || name_len > 256) {
            ok = false;
            detail = "tensor header for " + name;
            return;
        }
        std::string stored(name_len, '\0');
        in.read(stored.data(), name_len);
        in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
        in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
        if (!in || stored != name || static_cast<int>(rows) != t.rows() || static_cast<int>(cols) != t.cols()) {
            ok = false;
            detail = "tensor " + name + " (got '" + stored + "' " + std::to_string(rows) + "x" +
                     std::to_string(cols) + ")";
            return;
        }
        in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!in) {
            ok = false;
            detail = "tensor data for " + name;
        }
    });
    if (!ok) throw FormatError("encoder checkpoint: shape/name mismatch or truncation at " + detail);
    char extra;
    if (in.read(&extra, 1)) throw FormatError("encoder checkpoint: trailing bytes: " + path);
    return m;
}

}  // namespace webrep
