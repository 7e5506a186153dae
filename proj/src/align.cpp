#include "webrep/align.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "webrep/common.hpp"
#include "webrep/kernels.hpp"
#include "webrep/optimizer.hpp"

namespace webrep {

double cosine_sim(const double* a, const double* b, int dim) {
    double na = kernels::norm(a, dim);
    double nb = kernels::norm(b, dim);
    if (na == 0.0 || nb == 0.0) throw ValidationError("cosine_sim: zero vector has undefined similarity");
    return kernels::dot(a, b, dim) / (na * nb);
}

double cosine_sim(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) throw ValidationError("cosine_sim: dimension mismatch");
    return cosine_sim(a.data(), b.data(), static_cast<int>(a.size()));
}

double info_nce_loss(const Matrix& reps, const Matrix& targets, double temperature, Matrix* d_reps) {
    const int B = reps.rows();
    const int d = reps.cols();
    if (B < 1) throw ValidationError("info_nce_loss: empty batch");
    if (targets.rows() != B || targets.cols() != d)
        throw ValidationError("info_nce_loss: reps/targets shape mismatch");
    if (temperature <= 0.0) throw ValidationError("info_nce_loss: temperature must be positive");

    std::vector<double> rep_norm(B), tgt_norm(B);
    for (int i = 0; i < B; ++i) {
        rep_norm[i] = kernels::norm(reps.row(i), d);
        tgt_norm[i] = kernels::norm(targets.row(i), d);
        if (rep_norm[i] == 0.0 || tgt_norm[i] == 0.0)
            throw ValidationError("info_nce_loss: zero vector at row " + std::to_string(i));
    }

    Matrix sims(B, B);
    for (int i = 0; i < B; ++i)
        for (int j = 0; j < B; ++j)
            sims(i, j) = kernels::dot(reps.row(i), targets.row(j), d) / (rep_norm[i] * tgt_norm[j]);

    // softmax over each row of sims / tau, with max subtraction
    Matrix probs(B, B);
    double loss = 0.0;
    for (int i = 0; i < B; ++i) {
        double maxv = -1e300;
        for (int j = 0; j < B; ++j) maxv = std::max(maxv, sims(i, j) / temperature);
        double denom = 0.0;
        for (int j = 0; j < B; ++j) {
            probs(i, j) = std::exp(sims(i, j) / temperature - maxv);
            denom += probs(i, j);
        }
        for (int j = 0; j < B; ++j) probs(i, j) /= denom;
        loss += -(sims(i, i) / temperature - maxv - std::log(denom));
    }
    loss /= B;
    if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "info_nce_loss: non-finite loss (B=" << B << ", tau=" << temperature << ")";
        throw NumericError(os.str());
    }

    if (d_reps != nullptr) {
        *d_reps = Matrix(B, d);
        for (int i = 0; i < B; ++i) {
            double* out = d_reps->row(i);
            const double* fi = reps.row(i);
            for (int j = 0; j < B; ++j) {
                // dL/ds_ij = (p_ij - [i==j]) / (B * tau)
                double ds = (probs(i, j) - (i == j ? 1.0 : 0.0)) / (B * temperature);
                if (ds == 0.0) continue;
                const double* gj = targets.row(j);
                const double inv = 1.0 / (rep_norm[i] * tgt_norm[j]);
                const double si = sims(i, j);
                const double self = si / (rep_norm[i] * rep_norm[i]);
                for (int c = 0; c < d; ++c) out[c] += ds * (gj[c] * inv - self * fi[c]);
            }
        }
    }
    return loss;
}

namespace {

Matrix pooled_matrix(const std::vector<ForwardCache>& caches) {
    const int B = static_cast<int>(caches.size());
    const int d = static_cast<int>(caches[0].pooled.size());
    Matrix reps(B, d);
    for (int i = 0; i < B; ++i)
        for (int j = 0; j < d; ++j) reps(i, j) = caches[i].pooled[j];
    return reps;
}

Matrix gather_rows(const EmbeddingTable& table, const std::vector<UrlId>& ids) {
    Matrix out(static_cast<int>(ids.size()), table.dim);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const double* r = table.row(ids[i]);
        for (int j = 0; j < table.dim; ++j) out(static_cast<int>(i), j) = r[j];
    }
    return out;
}

}  // namespace

AlignResult train_align(EncoderModel& encoder, const std::vector<WebpageContent>& corpus,
                        const Vocab& vocab, const EmbeddingTable& url_table, const AlignConfig& cfg) {
    if (corpus.empty()) throw ValidationError("train_align: empty corpus");
    if (static_cast<int>(corpus.size()) > url_table.rows())
        throw ValidationError("train_align: corpus URL ids exceed the embedding table rows");
    if (url_table.dim != encoder.config.pooler_dim)
        throw ValidationError("train_align: pooler dim differs from graph embedding dim");
    if (cfg.temperature <= 0.0) throw ValidationError("train_align: temperature must be positive");
    if (cfg.batch_size < 1) throw ValidationError("train_align: batch_size must be >= 1");

    const int n = static_cast<int>(corpus.size());
    std::vector<TokenSequence> seqs(n);
    for (int i = 0; i < n; ++i) seqs[i] = tokenize(corpus[i], vocab, encoder.config.max_positions);

    AlignResult result;

    auto batch_loss = [&](const std::vector<UrlId>& ids) {
        return [&, ids](const std::vector<ForwardCache>& caches) {
            Matrix reps = pooled_matrix(caches);
            Matrix targets = gather_rows(url_table, ids);
            BatchLossGrad out;
            Matrix d_reps;
            out.loss = info_nce_loss(reps, targets, cfg.temperature, &d_reps);
            out.d_pooled = std::move(d_reps);
            return out;
        };
    };

    auto epoch_batches = [&](Rng& rng, bool shuffle) {
        std::vector<UrlId> order(n);
        for (int i = 0; i < n; ++i) order[i] = i;
        if (shuffle) rng.shuffle(order);
        std::vector<std::vector<UrlId>> batches;
        for (int start = 0; start < n; start += cfg.batch_size) {
            int end = std::min(n, start + cfg.batch_size);
            if (end - start < 2 && n > 1) continue;  // drop a size-1 trailing batch
            batches.emplace_back(order.begin() + start, order.begin() + end);
        }
        return batches;
    };

    // Pre-training evaluation pass (epoch 0): mean loss over unshuffled batches.
    {
        Rng rng(derive_seed(cfg.seed, "align-epoch0"));
        double total = 0.0;
        int count = 0;
        for (const auto& ids : epoch_batches(rng, false)) {
            std::vector<TokenSequence> batch;
            batch.reserve(ids.size());
            for (UrlId id : ids) batch.push_back(seqs[id]);
            double loss = 0.0;
            parameter_gradients(encoder, batch, batch_loss(ids), &loss, false, 0);
            result.log.push_back({0, count, loss});
            total += loss;
            ++count;
        }
        result.epoch_mean_loss.push_back(total / std::max(1, count));
    }
    result.initial_loss = result.epoch_mean_loss[0];

    std::vector<Matrix*> params;
    visit_params(encoder, [&](const std::string&, Matrix& t) { params.push_back(&t); });
    AdamOptimizer adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, "align-epoch" + std::to_string(epoch)));
        double total = 0.0;
        int count = 0;
        for (const auto& ids : epoch_batches(rng, true)) {
            std::vector<TokenSequence> batch;
            batch.reserve(ids.size());
            for (UrlId id : ids) batch.push_back(seqs[id]);
            double loss = 0.0;
            std::uint64_t drop_seed =
                derive_seed(cfg.seed, "align-drop-" + std::to_string(epoch) + "-" + std::to_string(count));
            EncoderModel grads = parameter_gradients(encoder, batch, batch_loss(ids), &loss, true, drop_seed);
            std::vector<const Matrix*> grad_list;
            visit_params(grads, [&](const std::string&, const Matrix& t) { grad_list.push_back(&t); });
            adam.step(params, grad_list);
            result.log.push_back({epoch, count, loss});
            total += loss;
            ++count;
        }
        result.epoch_mean_loss.push_back(count > 0 ? total / count : 0.0);
    }
    result.final_loss = result.epoch_mean_loss.back();
    return result;
}

double retrieval_accuracy(const EncoderModel& encoder, const std::vector<WebpageContent>& corpus,
                          const Vocab& vocab, const EmbeddingTable& url_table, int k) {
    if (corpus.empty()) throw ValidationError("retrieval_accuracy: empty corpus");
    if (static_cast<int>(corpus.size()) > url_table.rows())
        throw ValidationError("retrieval_accuracy: corpus larger than table");
    if (k < 1) throw ValidationError("retrieval_accuracy: k must be >= 1");

    const int n = static_cast<int>(corpus.size());
    const int rows = url_table.rows();
    const int d = url_table.dim;
    std::vector<TokenSequence> seqs(n);
    for (int i = 0; i < n; ++i) seqs[i] = tokenize(corpus[i], vocab, encoder.config.max_positions);

    std::vector<double> tgt_norm(rows);
    for (int j = 0; j < rows; ++j) tgt_norm[j] = kernels::norm(url_table.row(j), d);

    std::vector<int> hit(n, 0);
    const int nt = num_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int i = 0; i < n; ++i) {
        auto cache = encoder_forward(encoder, seqs[i], false, nullptr);
        const std::vector<double>& f = cache.pooled;
        double fn = kernels::norm(f.data(), d);
        double own = 0.0;
        int rank = 1;
        if (fn > 0.0 && tgt_norm[i] > 0.0)
            own = kernels::dot(f.data(), url_table.row(i), d) / (fn * tgt_norm[i]);
        for (int j = 0; j < rows; ++j) {
            if (j == i || tgt_norm[j] == 0.0 || fn == 0.0) continue;
            double s = kernels::dot(f.data(), url_table.row(j), d) / (fn * tgt_norm[j]);
            if (s > own) ++rank;
        }
        hit[i] = rank <= k ? 1 : 0;
    }
    double total = 0.0;
    for (int h : hit) total += h;
    return total / n;
}

}  // namespace webrep
