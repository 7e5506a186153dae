#include "webrep/probes.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "webrep/common.hpp"
#include "webrep/kernels.hpp"
#include "webrep/optimizer.hpp"
#include "webrep/rng.hpp"

namespace webrep {

namespace {

double activation(double x, ProbeActivation act) {
    return act == ProbeActivation::Tanh ? std::tanh(x) : (x > 0.0 ? x : 0.0);
}

double activation_grad_from_out(double pre, double out, ProbeActivation act) {
    return act == ProbeActivation::Tanh ? 1.0 - out * out : (pre > 0.0 ? 1.0 : 0.0);
}

}  // namespace

std::vector<double> ProbeHead::forward(const double* x, int dim) const {
    if (dim != w_c.rows()) throw ValidationError("probe forward: feature dim mismatch");
    const int h = w_c.cols();
    const int c = w_out.cols();
    std::vector<double> hid(h, 0.0);
    for (int i = 0; i < dim; ++i) {
        const double xi = x[i];
        const double* w = w_c.row(i);
        for (int j = 0; j < h; ++j) hid[j] += xi * w[j];
    }
    for (int j = 0; j < h; ++j) hid[j] = activation(hid[j] + b_c(0, j), config.activation);

    std::vector<double> logits(c, 0.0);
    for (int j = 0; j < h; ++j) {
        const double hj = hid[j];
        const double* w = w_out.row(j);
        for (int k = 0; k < c; ++k) logits[k] += hj * w[k];
    }
    double maxv = -1e300;
    for (int k = 0; k < c; ++k) {
        logits[k] += b_out(0, k);
        maxv = std::max(maxv, logits[k]);
    }
    double denom = 0.0;
    for (int k = 0; k < c; ++k) {
        logits[k] = std::exp(logits[k] - maxv);
        denom += logits[k];
    }
    for (int k = 0; k < c; ++k) logits[k] /= denom;
    return logits;
}

int ProbeHead::predict(const double* x, int dim) const {
    auto p = forward(x, dim);
    return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

ProbeHead train_probe(const Matrix& features, const std::vector<int>& labels, const ProbeConfig& cfg) {
    const int n = features.rows();
    const int dim = features.cols();
    if (n == 0) throw ValidationError("train_probe: empty feature set");
    if (static_cast<int>(labels.size()) != n) throw ValidationError("train_probe: label count mismatch");
    if (cfg.num_classes < 2) throw ValidationError("train_probe: need at least 2 classes");
    std::vector<int> present(cfg.num_classes, 0);
    for (int y : labels) {
        if (y < 0 || y >= cfg.num_classes) throw ValidationError("train_probe: label out of range");
        present[y] = 1;
    }
    if (std::accumulate(present.begin(), present.end(), 0) < 2)
        throw ValidationError("train_probe: only one class present in labels (degenerate)");

    ProbeHead head;
    head.config = cfg;
    Rng rng(derive_seed(cfg.seed, "probe-init"));
    head.w_c = Matrix(dim, cfg.hidden);
    head.w_c.fill_normal(rng, 0.0, 0.02);
    head.b_c = Matrix(1, cfg.hidden);
    head.w_out = Matrix(cfg.hidden, cfg.num_classes);
    head.w_out.fill_normal(rng, 0.0, 0.002);
    head.b_out = Matrix(1, cfg.num_classes);

    std::vector<Matrix*> params = {&head.w_c, &head.b_c, &head.w_out, &head.b_out};
    AdamOptimizer adam(cfg.learning_rate);

    Matrix gw_c(dim, cfg.hidden), gb_c(1, cfg.hidden);
    Matrix gw_out(cfg.hidden, cfg.num_classes), gb_out(1, cfg.num_classes);
    std::vector<const Matrix*> grads = {&gw_c, &gb_c, &gw_out, &gb_out};

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.seed, "probe-shuffle"));

    std::vector<double> hid_pre(cfg.hidden), hid(cfg.hidden);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int end = std::min(n, start + cfg.batch_size);
            gw_c.zero();
            gb_c.zero();
            gw_out.zero();
            gb_out.zero();
            double batch_loss = 0.0;
            const double inv_bs = 1.0 / (end - start);
            for (int bi = start; bi < end; ++bi) {
                const int idx = order[bi];
                const double* x = features.row(idx);
                const int y = labels[idx];

                for (int j = 0; j < cfg.hidden; ++j) hid_pre[j] = head.b_c(0, j);
                for (int i = 0; i < dim; ++i) {
                    const double xi = x[i];
                    const double* w = head.w_c.row(i);
                    for (int j = 0; j < cfg.hidden; ++j) hid_pre[j] += xi * w[j];
                }
                for (int j = 0; j < cfg.hidden; ++j) hid[j] = activation(hid_pre[j], cfg.activation);

                std::vector<double> probs(cfg.num_classes, 0.0);
                for (int j = 0; j < cfg.hidden; ++j) {
                    const double hj = hid[j];
                    const double* w = head.w_out.row(j);
                    for (int k = 0; k < cfg.num_classes; ++k) probs[k] += hj * w[k];
                }
                double maxv = -1e300;
                for (int k = 0; k < cfg.num_classes; ++k) {
                    probs[k] += head.b_out(0, k);
                    maxv = std::max(maxv, probs[k]);
                }
                double denom = 0.0;
                for (int k = 0; k < cfg.num_classes; ++k) {
                    probs[k] = std::exp(probs[k] - maxv);
                    denom += probs[k];
                }
                for (int k = 0; k < cfg.num_classes; ++k) probs[k] /= denom;
                batch_loss += -std::log(probs[y] + 1e-300);

                // dlogits = probs - onehot(y), scaled by 1/batch
                std::vector<double> dlogits(probs);
                dlogits[y] -= 1.0;
                for (auto& v : dlogits) v *= inv_bs;

                std::vector<double> dhid(cfg.hidden, 0.0);
                for (int j = 0; j < cfg.hidden; ++j) {
                    double* gw = gw_out.row(j);
                    const double* w = head.w_out.row(j);
                    double acc = 0.0;
                    for (int k = 0; k < cfg.num_classes; ++k) {
                        gw[k] += hid[j] * dlogits[k];
                        acc += w[k] * dlogits[k];
                    }
                    dhid[j] = acc * activation_grad_from_out(hid_pre[j], hid[j], cfg.activation);
                }
                for (int k = 0; k < cfg.num_classes; ++k) gb_out(0, k) += dlogits[k];
                for (int i = 0; i < dim; ++i) {
                    const double xi = x[i];
                    double* gw = gw_c.row(i);
                    for (int j = 0; j < cfg.hidden; ++j) gw[j] += xi * dhid[j];
                }
                for (int j = 0; j < cfg.hidden; ++j) gb_c(0, j) += dhid[j];
            }
            if (!std::isfinite(batch_loss)) throw NumericError("train_probe: non-finite loss");
            adam.step(params, grads);
        }
    }
    return head;
}

FewShotSplit few_shot_sample(const std::vector<int>& labels, int num_classes, int n_per_class,
                             std::uint64_t seed, int test_cap_per_class) {
    if (labels.empty()) throw ValidationError("few_shot_sample: empty dataset");
    if (n_per_class < 1) throw ValidationError("few_shot_sample: n_per_class must be >= 1");
    std::vector<std::vector<int>> by_class(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw ValidationError("few_shot_sample: label out of range");
        by_class[labels[i]].push_back(static_cast<int>(i));
    }
    for (int c = 0; c < num_classes; ++c)
        if (static_cast<int>(by_class[c].size()) < n_per_class + 1)
            throw ValidationError("few_shot_sample: class " + std::to_string(c) + " has only " +
                                  std::to_string(by_class[c].size()) + " instances, needs " +
                                  std::to_string(n_per_class + 1));

    Rng rng(derive_seed(seed, "few-shot"));
    FewShotSplit split;
    for (int c = 0; c < num_classes; ++c) {
        auto& pool = by_class[c];
        rng.shuffle(pool);
        for (int i = 0; i < n_per_class; ++i) split.train_indices.push_back(pool[i]);
        int test_count = static_cast<int>(pool.size()) - n_per_class;
        if (test_cap_per_class > 0) test_count = std::min(test_count, test_cap_per_class);
        for (int i = 0; i < test_count; ++i) split.test_indices.push_back(pool[n_per_class + i]);
    }
    std::sort(split.train_indices.begin(), split.train_indices.end());
    std::sort(split.test_indices.begin(), split.test_indices.end());
    return split;
}

std::vector<double> concat_user_url(const std::vector<double>& user_vec, const std::vector<double>& url_rep) {
    if (user_vec.empty() || url_rep.empty()) throw ValidationError("concat_user_url: empty input vector");
    std::vector<double> out;
    out.reserve(user_vec.size() + url_rep.size());
    out.insert(out.end(), user_vec.begin(), user_vec.end());
    out.insert(out.end(), url_rep.begin(), url_rep.end());
    return out;
}

namespace {

struct ConfusionCounts {
    std::vector<std::int64_t> tp, fp, fn;
};

ConfusionCounts confusion(const std::vector<int>& predictions, const std::vector<int>& labels,
                          int num_classes) {
    if (predictions.empty() || predictions.size() != labels.size())
        throw ValidationError("f1: empty input or length mismatch");
    ConfusionCounts c;
    c.tp.assign(num_classes, 0);
    c.fp.assign(num_classes, 0);
    c.fn.assign(num_classes, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        int p = predictions[i], y = labels[i];
        if (p < 0 || p >= num_classes || y < 0 || y >= num_classes)
            throw ValidationError("f1: class id out of range");
        if (p == y)
            c.tp[y]++;
        else {
            c.fp[p]++;
            c.fn[y]++;
        }
    }
    return c;
}

}  // namespace

double macro_f1(const std::vector<int>& predictions, const std::vector<int>& labels, int num_classes) {
    auto c = confusion(predictions, labels, num_classes);
    double total = 0.0;
    for (int k = 0; k < num_classes; ++k) {
        double denom = static_cast<double>(2 * c.tp[k] + c.fp[k] + c.fn[k]);
        total += denom > 0.0 ? 2.0 * c.tp[k] / denom : 0.0;
    }
    return total / num_classes;
}

double micro_f1(const std::vector<int>& predictions, const std::vector<int>& labels, int num_classes) {
    auto c = confusion(predictions, labels, num_classes);
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (int k = 0; k < num_classes; ++k) {
        tp += c.tp[k];
        fp += c.fp[k];
        fn += c.fn[k];
    }
    double denom = static_cast<double>(2 * tp + fp + fn);
    return denom > 0.0 ? 2.0 * tp / denom : 0.0;
}

double pr_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.empty() || scores.size() != labels.size())
        throw ValidationError("pr_auc: empty input or length mismatch");
    std::int64_t positives = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) throw ValidationError("pr_auc: labels must be binary");
        positives += y;
    }
    if (positives == 0 || positives == static_cast<std::int64_t>(labels.size()))
        throw ValidationError("pr_auc: need at least one positive and one negative");

    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });

    double ap = 0.0;
    std::int64_t seen_pos = 0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (labels[order[rank]] == 1) {
            ++seen_pos;
            ap += static_cast<double>(seen_pos) / static_cast<double>(rank + 1);
        }
    }
    return ap / static_cast<double>(positives);
}

}  // namespace webrep
