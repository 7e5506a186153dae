#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "webrep/common.hpp"
#include "webrep/embedding.hpp"
#include "webrep/synthetic.hpp"

using namespace webrep;

TEST_CASE("score is the dot product") {
    CHECK(score({1.0, 0.0}, {1.0, 0.0}) == doctest::Approx(1.0));   // (e1, e1)
    CHECK(score({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(0.0));   // (e1, e2)
    CHECK(score({0.5, 0.5}, {1.0, 2.0}) == doctest::Approx(1.5));   // hand-computed
    CHECK_THROWS_AS(score({1.0, 2.0}, {1.0}), ValidationError);
    CHECK_THROWS_AS(score({}, {}), ValidationError);
}

TEST_CASE("single-edge training drives the positive pair towards relevance") {
    BipartiteGraph g(1, 1, {{0, 0, 1, 1}});
    GraphTrainConfig cfg;
    cfg.dim = 8;
    cfg.negatives_per_positive = 1;
    cfg.epochs = 2000;  // many steps over the single edge
    cfg.learning_rate = 0.1;
    cfg.seed = 5;
    auto res = train_graph_embeddings(g, cfg);
    double s = score(res.users.row(0), res.urls.row(0), cfg.dim);
    CHECK(sigmoid(s) > 0.9);
}

TEST_CASE("epochs = 0 keeps the seeded random initialization") {
    SyntheticConfig scfg;
    scfg.num_users = 20;
    scfg.num_urls = 16;
    scfg.edges_per_user = 4;
    auto corpus = generate_synthetic(scfg);
    GraphTrainConfig cfg;
    cfg.dim = 16;
    cfg.epochs = 0;
    cfg.seed = 7;
    auto a = train_graph_embeddings(corpus.graph, cfg);
    auto b = train_graph_embeddings(corpus.graph, cfg);
    CHECK(a.users.vectors == b.users.vectors);
    CHECK(a.urls.vectors == b.urls.vectors);
    const double scale = cfg.effective_init_scale();
    for (int i = 0; i < a.users.rows(); ++i)
        for (int j = 0; j < cfg.dim; ++j) {
            CHECK(a.users.vectors(i, j) >= -scale);
            CHECK(a.users.vectors(i, j) <= scale);
        }
}

TEST_CASE("initial loss sits near (1+k) log 2") {
    SyntheticConfig scfg;
    auto corpus = generate_synthetic(scfg);
    GraphTrainConfig cfg;
    cfg.epochs = 0;
    auto res = train_graph_embeddings(corpus.graph, cfg);
    REQUIRE(res.loss_trajectory.size() == 1);
    const double expected = (1.0 + cfg.negatives_per_positive) * std::log(2.0);
    CHECK(res.loss_trajectory[0] == doctest::Approx(expected).epsilon(0.05));
}

TEST_CASE("planted two-community graph separates in embedding space") {
    SyntheticConfig scfg;
    scfg.num_users = 80;
    scfg.num_urls = 40;
    scfg.num_communities = 2;
    scfg.edges_per_user = 10;
    scfg.p_in = 0.95;
    scfg.seed = 3;
    auto corpus = generate_synthetic(scfg);
    GraphTrainConfig cfg;
    cfg.dim = 32;
    cfg.epochs = 10;
    cfg.seed = 3;
    auto res = train_graph_embeddings(corpus.graph, cfg);

    // mean within-community user.url score vs cross-community
    double within = 0.0, cross = 0.0;
    std::int64_t nw = 0, nc = 0;
    for (int u = 0; u < corpus.graph.num_users(); ++u)
        for (int w = 0; w < corpus.graph.num_urls(); ++w) {
            double s = score(res.users.row(u), res.urls.row(w), cfg.dim);
            if (corpus.user_community[u] == corpus.url_community[w]) {
                within += s;
                ++nw;
            } else {
                cross += s;
                ++nc;
            }
        }
    CHECK(within / nw > cross / nc);

    auto cosines = community_cosine_stats(res.urls, corpus.url_community);
    CHECK(cosines.within > cosines.cross);
}

TEST_CASE("training loss is non-increasing within tolerance and stays finite") {
    SyntheticConfig scfg;
    auto corpus = generate_synthetic(scfg);
    GraphTrainConfig cfg;
    auto res = train_graph_embeddings(corpus.graph, cfg);
    REQUIRE(res.loss_trajectory.size() == static_cast<std::size_t>(cfg.epochs) + 1);
    for (std::size_t e = 1; e < res.loss_trajectory.size(); ++e)
        CHECK(res.loss_trajectory[e] <= res.loss_trajectory[e - 1] * 1.05);
    for (int i = 0; i < res.users.rows(); ++i)
        for (int j = 0; j < cfg.dim; ++j) CHECK(std::isfinite(res.users.vectors(i, j)));
}

TEST_CASE("workers=1 training is reproducible") {
    SyntheticConfig scfg;
    scfg.num_users = 40;
    scfg.num_urls = 24;
    scfg.edges_per_user = 5;
    auto corpus = generate_synthetic(scfg);
    GraphTrainConfig cfg;
    cfg.dim = 16;
    cfg.epochs = 3;
    cfg.workers = 1;
    auto a = train_graph_embeddings(corpus.graph, cfg);
    auto b = train_graph_embeddings(corpus.graph, cfg);
    CHECK(a.users.vectors == b.users.vectors);
    CHECK(a.urls.vectors == b.urls.vectors);
    CHECK(a.loss_trajectory == b.loss_trajectory);
}

TEST_CASE("parallel workers still learn the planted structure") {
    SyntheticConfig scfg;
    scfg.num_users = 80;
    scfg.num_urls = 40;
    scfg.num_communities = 2;
    scfg.edges_per_user = 10;
    scfg.p_in = 0.95;
    auto corpus = generate_synthetic(scfg);
    GraphTrainConfig cfg;
    cfg.dim = 32;
    cfg.epochs = 10;
    cfg.workers = 4;
    auto res = train_graph_embeddings(corpus.graph, cfg);
    auto cosines = community_cosine_stats(res.urls, corpus.url_community);
    CHECK(cosines.within > cosines.cross);
}

TEST_CASE("isolated nodes keep their initialization and are reported") {
    // URL 3 has no edges.
    BipartiteGraph g(2, 4, {{0, 0, 1, 1}, {0, 1, 1, 1}, {1, 2, 1, 2}});
    GraphTrainConfig cfg;
    cfg.dim = 8;
    cfg.epochs = 2;
    auto init_cfg = cfg;
    init_cfg.epochs = 0;
    auto before = train_graph_embeddings(g, init_cfg);
    auto after = train_graph_embeddings(g, cfg);
    REQUIRE(after.isolated_urls.size() == 1);
    CHECK(after.isolated_urls[0] == 3);
    for (int j = 0; j < cfg.dim; ++j)
        CHECK(after.urls.vectors(3, j) == before.urls.vectors(3, j));
}

TEST_CASE("link prediction on perfectly separating embeddings gives MRR 1") {
    EmbeddingTable users, urls;
    users.dim = urls.dim = 4;
    users.side = TableSide::User;
    urls.side = TableSide::Url;
    users.vectors = Matrix(2, 4);
    urls.vectors = Matrix(10, 4);
    // user u points exactly at url u; all other urls orthogonal
    users.vectors(0, 0) = 1.0;
    users.vectors(1, 1) = 1.0;
    urls.vectors(0, 0) = 5.0;
    urls.vectors(1, 1) = 5.0;
    for (int w = 2; w < 10; ++w) urls.vectors(w, 2) = 1.0;
    std::vector<HeldoutEdge> heldout = {{0, 0}, {1, 1}};
    auto res = link_prediction_eval(users, urls, heldout, 5, 13);
    CHECK(res.mrr == doctest::Approx(1.0));
    CHECK(res.hits_at_10 == doctest::Approx(1.0));
}

TEST_CASE("random embeddings give chance-level hits@10") {
    const int n_urls = 200;
    EmbeddingTable users, urls;
    users.dim = urls.dim = 16;
    users.vectors = Matrix(50, 16);
    urls.vectors = Matrix(n_urls, 16);
    Rng rng(17);
    users.vectors.fill_normal(rng, 0.0, 1.0);
    urls.vectors.fill_normal(rng, 0.0, 1.0);
    std::vector<HeldoutEdge> heldout;
    for (int i = 0; i < 1200; ++i)
        heldout.push_back({static_cast<UserId>(i % 50), static_cast<UrlId>(i % n_urls)});
    auto res = link_prediction_eval(users, urls, heldout, 99, 23);
    // uniform-rank null: hits@10 = 0.10 +/- 0.03, MRR ~ H(100)/100
    CHECK(res.hits_at_10 > 0.07);
    CHECK(res.hits_at_10 < 0.13);
    CHECK(res.mrr > 0.03);
    CHECK(res.mrr < 0.08);
}

TEST_CASE("link prediction validates ids and negative counts") {
    EmbeddingTable users, urls;
    users.dim = urls.dim = 4;
    users.vectors = Matrix(2, 4);
    urls.vectors = Matrix(4, 4);
    CHECK_THROWS_AS(link_prediction_eval(users, urls, {{5, 0}}, 2, 1), ValidationError);
    CHECK_THROWS_AS(link_prediction_eval(users, urls, {{0, 9}}, 2, 1), ValidationError);
    CHECK_THROWS_AS(link_prediction_eval(users, urls, {}, 2, 1), ValidationError);
    CHECK_THROWS_AS(link_prediction_eval(users, urls, {{0, 0}}, 10, 1), ValidationError);
}

TEST_CASE("split_edges holds out the requested fraction and keeps users connected") {
    SyntheticConfig scfg;
    auto corpus = generate_synthetic(scfg);
    auto split = split_edges(corpus.graph, 0.1, 11);
    std::size_t total = corpus.graph.edges().size();
    CHECK(split.heldout.size() == static_cast<std::size_t>(0.1 * total));
    CHECK(split.train.edges().size() + split.heldout.size() == total);
    for (int u = 0; u < split.train.num_users(); ++u) CHECK(split.train.user_degrees()[u] >= 1);
    for (const auto& e : split.heldout) CHECK_FALSE(split.train.has_edge(e.user, e.url));
}

TEST_CASE("table save/load round-trips bitwise and validates") {
    EmbeddingTable t;
    t.dim = 128;
    t.side = TableSide::Url;
    t.vectors = Matrix(200, 128);
    Rng rng(31);
    t.vectors.fill_normal(rng, 0.0, 1.0);
    const std::string path = "/tmp/webrep_table_test.bin";
    save_table(t, path);

    SUBCASE("bitwise round-trip and exact file size") {
        auto loaded = load_table(path);
        CHECK(loaded.dim == 128);
        CHECK(loaded.side == TableSide::Url);
        CHECK(loaded.vectors == t.vectors);
        CHECK(std::filesystem::file_size(path) == table_file_size(200, 128));
    }

    SUBCASE("truncated file is a format error, not a partial table") {
        auto bytes = std::filesystem::file_size(path);
        std::filesystem::resize_file(path, bytes - 64);
        CHECK_THROWS_AS(load_table(path), FormatError);
    }

    SUBCASE("bad magic is rejected") {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << "garbage";
        out.close();
        CHECK_THROWS_AS(load_table(path), FormatError);
    }

    SUBCASE("missing file is a format error") {
        CHECK_THROWS_AS(load_table("/tmp/webrep_no_such_table.bin"), FormatError);
    }
}
