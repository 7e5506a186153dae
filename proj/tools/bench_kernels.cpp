// Compares the serial reference kernels against the OpenMP versions and the
// batch trainers at several thread counts.

#include <cstdio>
#include <functional>
#include <omp.h>
#include <string>
#include <vector>

#include "webrep/align.hpp"
#include "webrep/common.hpp"
#include "webrep/embedding.hpp"
#include "webrep/encoder.hpp"
#include "webrep/kernels.hpp"
#include "webrep/synthetic.hpp"
#include "webrep/tokenizer.hpp"

using namespace webrep;

namespace {

double time_of(const std::function<void()>& fn, int reps) {
    fn();  // warmup
    double t0 = omp_get_wtime();
    for (int i = 0; i < reps; ++i) fn();
    return (omp_get_wtime() - t0) / reps;
}

void bench_matmul(int n, int reps, const std::vector<int>& thread_counts) {
    Rng rng(7);
    Matrix a(n, n), b(n, n), out;
    a.fill_normal(rng, 0.0, 1.0);
    b.fill_normal(rng, 0.0, 1.0);

    set_num_threads(1);
    double serial = time_of([&] { kernels::serial::matmul(a, b, out); }, reps);
    std::printf("matmul %4dx%-4d serial            %9.3f ms\n", n, n, serial * 1e3);
    for (int t : thread_counts) {
        set_num_threads(t);
        double par = time_of([&] { kernels::matmul(a, b, out); }, reps);
        std::printf("matmul %4dx%-4d omp %2d threads    %9.3f ms   speedup %.2fx\n", n, n, t, par * 1e3,
                    serial / par);
    }
    set_num_threads(1);
}

void bench_encoder_batch(const std::vector<int>& thread_counts) {
    SyntheticConfig scfg;
    scfg.num_users = 40;
    scfg.num_urls = 64;
    scfg.num_communities = 4;
    scfg.edges_per_user = 8;
    auto corpus = generate_synthetic(scfg);
    Vocab vocab = Vocab::build(corpus.contents, 1);

    EncoderConfig ecfg;
    ecfg.vocab_size = vocab.size();
    ecfg.dropout = 0.0;
    EncoderModel model = EncoderModel::init(ecfg);

    std::vector<TokenSequence> batch;
    for (const auto& c : corpus.contents) batch.push_back(tokenize(c, vocab));

    Matrix targets(static_cast<int>(batch.size()), ecfg.pooler_dim);
    Rng rng(11);
    targets.fill_normal(rng, 0.0, 1.0);

    auto loss_fn = [&](const std::vector<ForwardCache>& caches) {
        Matrix reps(static_cast<int>(caches.size()), ecfg.pooler_dim);
        for (std::size_t i = 0; i < caches.size(); ++i)
            for (int j = 0; j < ecfg.pooler_dim; ++j) reps(static_cast<int>(i), j) = caches[i].pooled[j];
        BatchLossGrad out;
        Matrix d;
        out.loss = info_nce_loss(reps, targets, 1.0, &d);
        out.d_pooled = std::move(d);
        return out;
    };

    set_num_threads(1);
    double serial = time_of([&] { parameter_gradients(model, batch, loss_fn); }, 2);
    std::printf("encoder fwd+bwd batch %zu serial          %9.1f ms\n", batch.size(), serial * 1e3);
    for (int t : thread_counts) {
        set_num_threads(t);
        double par = time_of([&] { parameter_gradients(model, batch, loss_fn); }, 2);
        std::printf("encoder fwd+bwd batch %zu omp %2d threads  %9.1f ms   speedup %.2fx\n", batch.size(), t,
                    par * 1e3, serial / par);
    }
    set_num_threads(1);
}

void bench_graph_training(const std::vector<int>& thread_counts) {
    SyntheticConfig scfg;
    auto corpus = generate_synthetic(scfg);

    GraphTrainConfig cfg;
    cfg.epochs = 5;
    cfg.workers = 1;
    double serial = time_of([&] { train_graph_embeddings(corpus.graph, cfg); }, 1);
    std::printf("graph sgd %d epochs 1 worker            %9.1f ms\n", cfg.epochs, serial * 1e3);
    for (int t : thread_counts) {
        cfg.workers = t;
        double par = time_of([&] { train_graph_embeddings(corpus.graph, cfg); }, 1);
        std::printf("graph sgd %d epochs %2d workers          %9.1f ms   speedup %.2fx\n", cfg.epochs, t,
                    par * 1e3, serial / par);
    }
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> threads = {2, 4};
    if (argc > 1) {
        threads.clear();
        for (int i = 1; i < argc; ++i) threads.push_back(std::stoi(argv[i]));
    }
    std::printf("hardware threads: %d\n\n", omp_get_max_threads());
    bench_matmul(256, 10, threads);
    bench_matmul(512, 4, threads);
    std::printf("\n");
    bench_encoder_batch(threads);
    std::printf("\n");
    bench_graph_training(threads);
    return 0;
}
