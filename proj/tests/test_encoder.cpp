#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "webrep/common.hpp"
#include "webrep/encoder.hpp"

using namespace webrep;

namespace {

EncoderConfig tiny_config() {
    EncoderConfig cfg;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.model_dim = 8;
    cfg.ffn_dim = 16;
    cfg.max_positions = 8;
    cfg.dropout = 0.0;
    cfg.vocab_size = 12;
    cfg.pooler_dim = 8;
    cfg.seed = 21;
    return cfg;
}

TokenSequence make_seq(std::vector<std::int32_t> ids) {
    TokenSequence seq;
    seq.ids = std::move(ids);
    seq.segments.assign(seq.ids.size(), Segment::Desc);
    seq.segments.front() = Segment::Special;
    for (auto& id : seq.ids) (void)id;
    for (std::size_t i = 0; i < seq.ids.size(); ++i)
        if (seq.ids[i] < kFirstCorpusId) seq.segments[i] = Segment::Special;
    seq.attention_length = 0;
    for (auto id : seq.ids)
        if (id != kPadId) seq.attention_length++;
    return seq;
}

// Independent dense-matrix forward pass written directly from the layer
// equations; shares no code with the implementation.
std::vector<std::vector<double>> oracle_forward(const EncoderModel& m, const TokenSequence& seq) {
    const int L = seq.length();
    const int d = m.config.model_dim;
    const int heads = m.config.heads;
    const int dh = d / heads;
    const double eps = 1e-12;

    std::vector<std::vector<double>> x(L, std::vector<double>(d));
    for (int i = 0; i < L; ++i)
        for (int j = 0; j < d; ++j) x[i][j] = m.tok_emb(seq.ids[i], j) + m.pos_emb(i, j);

    auto layer_norm = [&](std::vector<std::vector<double>>& v, const Matrix& gamma, const Matrix& beta) {
        for (auto& row : v) {
            double mean = 0.0;
            for (double a : row) mean += a;
            mean /= d;
            double var = 0.0;
            for (double a : row) var += (a - mean) * (a - mean);
            var /= d;
            double rstd = 1.0 / std::sqrt(var + eps);
            for (int j = 0; j < d; ++j) row[j] = (row[j] - mean) * rstd * gamma(0, j) + beta(0, j);
        }
    };

    for (const auto& l : m.layers) {
        std::vector<std::vector<double>> q(L, std::vector<double>(d, 0.0)), k = q, v = q;
        for (int i = 0; i < L; ++i)
            for (int j = 0; j < d; ++j) {
                double sq = l.bq(0, j), sk = l.bk(0, j), sv = l.bv(0, j);
                for (int c = 0; c < d; ++c) {
                    sq += x[i][c] * l.wq(c, j);
                    sk += x[i][c] * l.wk(c, j);
                    sv += x[i][c] * l.wv(c, j);
                }
                q[i][j] = sq;
                k[i][j] = sk;
                v[i][j] = sv;
            }

        std::vector<std::vector<double>> ctx(L, std::vector<double>(d, 0.0));
        for (int h = 0; h < heads; ++h) {
            for (int i = 0; i < L; ++i) {
                std::vector<double> scores(L);
                for (int j = 0; j < L; ++j) {
                    double s = 0.0;
                    for (int t = 0; t < dh; ++t) s += q[i][h * dh + t] * k[j][h * dh + t];
                    s /= std::sqrt(static_cast<double>(dh));
                    if (seq.ids[j] == kPadId) s = -1e30;
                    scores[j] = s;
                }
                double maxv = *std::max_element(scores.begin(), scores.end());
                double denom = 0.0;
                for (double& s : scores) {
                    s = std::exp(s - maxv);
                    denom += s;
                }
                for (double& s : scores) s /= denom;
                for (int j = 0; j < L; ++j)
                    for (int t = 0; t < dh; ++t) ctx[i][h * dh + t] += scores[j] * v[j][h * dh + t];
            }
        }

        std::vector<std::vector<double>> attn(L, std::vector<double>(d, 0.0));
        for (int i = 0; i < L; ++i)
            for (int j = 0; j < d; ++j) {
                double s = l.bo(0, j);
                for (int c = 0; c < d; ++c) s += ctx[i][c] * l.wo(c, j);
                attn[i][j] = x[i][j] + s;  // residual
            }
        layer_norm(attn, l.ln1_gamma, l.ln1_beta);

        std::vector<std::vector<double>> ffn(L, std::vector<double>(d, 0.0));
        for (int i = 0; i < L; ++i) {
            std::vector<double> h1(m.config.ffn_dim);
            for (int j = 0; j < m.config.ffn_dim; ++j) {
                double s = l.b1(0, j);
                for (int c = 0; c < d; ++c) s += attn[i][c] * l.w1(c, j);
                h1[j] = 0.5 * s * (1.0 + std::erf(s * 0.7071067811865476));
            }
            for (int j = 0; j < d; ++j) {
                double s = l.b2(0, j);
                for (int c = 0; c < m.config.ffn_dim; ++c) s += h1[c] * l.w2(c, j);
                ffn[i][j] = attn[i][j] + s;  // residual
            }
        }
        layer_norm(ffn, l.ln2_gamma, l.ln2_beta);
        x = ffn;
    }
    return x;
}

}  // namespace

TEST_CASE("forward pass matches the independent dense oracle") {
    auto cfg = tiny_config();
    EncoderModel m = EncoderModel::init(cfg);
    auto seq = make_seq({kClsId, 5, 7, 9, kSepId});
    Matrix hidden = encode(m, seq);
    auto expect = oracle_forward(m, seq);
    REQUIRE(hidden.rows() == seq.length());
    for (int i = 0; i < hidden.rows(); ++i)
        for (int j = 0; j < hidden.cols(); ++j)
            CHECK(hidden(i, j) == doctest::Approx(expect[i][j]).epsilon(1e-10));
}

TEST_CASE("single-head single-layer model matches the oracle too") {
    auto cfg = tiny_config();
    cfg.heads = 1;
    cfg.seed = 4;
    EncoderModel m = EncoderModel::init(cfg);
    auto seq = make_seq({kClsId, 6, 8});
    Matrix hidden = encode(m, seq);
    auto expect = oracle_forward(m, seq);
    for (int i = 0; i < hidden.rows(); ++i)
        for (int j = 0; j < hidden.cols(); ++j)
            CHECK(hidden(i, j) == doctest::Approx(expect[i][j]).epsilon(1e-10));
}

TEST_CASE("PAD tails change nothing at non-PAD positions") {
    auto cfg = tiny_config();
    EncoderModel m = EncoderModel::init(cfg);
    auto seq = make_seq({kClsId, 5, 7, kSepId});
    auto padded = seq;
    padded.pad_to(8);

    Matrix a = encode(m, seq);
    Matrix b = encode(m, padded);
    for (int i = 0; i < seq.length(); ++i)
        for (int j = 0; j < a.cols(); ++j) CHECK(a(i, j) == b(i, j));

    CHECK(pool_cls(m, a) == pool_cls(m, b));
    CHECK(pool_mean(a, seq) == pool_mean(b, padded));
}

TEST_CASE("permuting two non-special tokens changes the hidden states") {
    auto cfg = tiny_config();
    EncoderModel m = EncoderModel::init(cfg);
    Matrix a = encode(m, make_seq({kClsId, 5, 7, kSepId}));
    Matrix b = encode(m, make_seq({kClsId, 7, 5, kSepId}));
    bool any_diff = false;
    for (int i = 0; i < a.rows() && !any_diff; ++i)
        for (int j = 0; j < a.cols(); ++j)
            if (a(i, j) != b(i, j)) {
                any_diff = true;
                break;
            }
    CHECK(any_diff);
}

TEST_CASE("encode validates ids and length") {
    auto cfg = tiny_config();
    EncoderModel m = EncoderModel::init(cfg);
    CHECK_THROWS_AS(encode(m, make_seq({kClsId, 99, kSepId})), ValidationError);
    CHECK_THROWS_AS(encode(m, make_seq({kClsId, 5, 5, 5, 5, 5, 5, 5, 5, kSepId})), ValidationError);
}

TEST_CASE("pool_cls basics") {
    auto cfg = tiny_config();
    EncoderModel m = EncoderModel::init(cfg);

    SUBCASE("zero CLS state and zero bias give the zero vector") {
        m.pooler_b.zero();
        Matrix hidden(1, cfg.model_dim);
        auto out = pool_cls(m, hidden);
        for (double v : out) CHECK(v == 0.0);
    }

    SUBCASE("components always lie strictly inside (-1, 1)") {
        Rng rng(3);
        for (int iter = 0; iter < 50; ++iter) {
            Matrix hidden(2, cfg.model_dim);
            hidden.fill_normal(rng, 0.0, 5.0);
            m.pooler_w.fill_normal(rng, 0.0, 2.0);
            m.pooler_b.fill_normal(rng, 0.0, 2.0);
            for (double v : pool_cls(m, hidden)) {
                CHECK(v > -1.0);
                CHECK(v < 1.0);
            }
        }
    }

    SUBCASE("identity pooler on [1,-1] gives [tanh 1, tanh -1]") {
        EncoderConfig c2 = tiny_config();
        c2.model_dim = 2;
        c2.heads = 1;
        c2.ffn_dim = 4;
        c2.pooler_dim = 2;
        EncoderModel m2 = EncoderModel::zeros_like(c2);
        m2.pooler_w(0, 0) = 1.0;
        m2.pooler_w(1, 1) = 1.0;
        Matrix hidden(1, 2);
        hidden(0, 0) = 1.0;
        hidden(0, 1) = -1.0;
        auto out = pool_cls(m2, hidden);
        CHECK(out[0] == doctest::Approx(0.7615941559557649));
        CHECK(out[1] == doctest::Approx(-0.7615941559557649));
    }
}

TEST_CASE("pool_mean basics") {
    TokenSequence seq = make_seq({kClsId, 5, 6, 7, kSepId});
    Matrix hidden(5, 3);

    SUBCASE("identical content states pool to that state") {
        for (int i = 1; i <= 3; ++i)
            for (int j = 0; j < 3; ++j) hidden(i, j) = 2.5;
        auto out = pool_mean(hidden, seq);
        for (double v : out) CHECK(v == doctest::Approx(2.5));
    }

    SUBCASE("v and -v cancel to zero") {
        TokenSequence two = make_seq({kClsId, 5, 6, kSepId});
        Matrix h2(4, 3);
        for (int j = 0; j < 3; ++j) {
            h2(1, j) = 1.0 + j;
            h2(2, j) = -1.0 - j;
        }
        auto out = pool_mean(h2, two);
        for (double v : out) CHECK(v == doctest::Approx(0.0));
    }

    SUBCASE("componentwise mean of three known vectors") {
        double vals[3][3] = {{1, 2, 3}, {4, 5, 6}, {10, 20, 30}};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) hidden(i + 1, j) = vals[i][j];
        auto out = pool_mean(hidden, seq);
        CHECK(out[0] == doctest::Approx(5.0));
        CHECK(out[1] == doctest::Approx(9.0));
        CHECK(out[2] == doctest::Approx(13.0));
    }

    SUBCASE("all-special sequence is rejected") {
        TokenSequence special = make_seq({kClsId, kSepId});
        Matrix h2(2, 3);
        CHECK_THROWS_AS(pool_mean(h2, special), ValidationError);
    }
}

namespace {

// Loss: fixed random projection of all hidden states plus the pooled output.
// Touches the embeddings, attention, FFN, layer norms, and the pooler.
struct ProjectionLoss {
    Matrix hidden_weights;  // L x d
    std::vector<double> pooled_weights;

    BatchLossGrad operator()(const std::vector<ForwardCache>& caches) const {
        BatchLossGrad out;
        const auto& cache = caches[0];
        out.loss = 0.0;
        for (int i = 0; i < cache.hidden.rows(); ++i)
            for (int j = 0; j < cache.hidden.cols(); ++j)
                out.loss += hidden_weights(i, j) * cache.hidden(i, j);
        for (std::size_t j = 0; j < cache.pooled.size(); ++j)
            out.loss += pooled_weights[j] * cache.pooled[j];
        out.d_hidden.push_back(hidden_weights);
        out.d_pooled = Matrix(1, static_cast<int>(cache.pooled.size()));
        for (std::size_t j = 0; j < cache.pooled.size(); ++j)
            out.d_pooled(0, static_cast<int>(j)) = pooled_weights[j];
        return out;
    }
};

double forward_loss(const EncoderModel& m, const TokenSequence& seq, const ProjectionLoss& loss) {
    auto cache = encoder_forward(m, seq, false, nullptr);
    double total = 0.0;
    for (int i = 0; i < cache.hidden.rows(); ++i)
        for (int j = 0; j < cache.hidden.cols(); ++j) total += loss.hidden_weights(i, j) * cache.hidden(i, j);
    for (std::size_t j = 0; j < cache.pooled.size(); ++j) total += loss.pooled_weights[j] * cache.pooled[j];
    return total;
}

}  // namespace

TEST_CASE("analytic gradients match central finite differences under 1e-4") {
    auto cfg = tiny_config();
    EncoderModel m = EncoderModel::init(cfg);
    CHECK(parameter_count(m) <= 5000);
    // The default 0.02 init leaves attention nearly uniform and some gradients
    // around 1e-8, where central differences drown in round-off. Healthy
    // magnitudes make the 1e-4 comparison meaningful.
    {
        Rng r(99);
        visit_params(m, [&](const std::string&, Matrix& t) { t.fill_normal(r, 0.0, 0.3); });
    }

    auto seq = make_seq({kClsId, 5, 7, 9, kPadId});  // includes a PAD key
    ProjectionLoss loss;
    loss.hidden_weights = Matrix(seq.length(), cfg.model_dim);
    Rng rng(8);
    loss.hidden_weights.fill_normal(rng, 0.0, 1.0);
    loss.pooled_weights.assign(cfg.pooler_dim, 0.0);
    for (auto& w : loss.pooled_weights) w = rng.normal(0.0, 1.0);

    EncoderModel grads = parameter_gradients(m, {seq}, loss);

    const double h = 1e-5;
    double max_rel = 0.0;
    std::string worst;
    std::vector<std::pair<std::string, Matrix*>> params;
    visit_params(m, [&](const std::string& name, Matrix& t) { params.emplace_back(name, &t); });
    std::vector<std::pair<std::string, const Matrix*>> grad_list;
    visit_params(grads, [&](const std::string& name, const Matrix& t) { grad_list.emplace_back(name, &t); });

    for (std::size_t p = 0; p < params.size(); ++p) {
        Matrix& t = *params[p].second;
        const Matrix& g = *grad_list[p].second;
        for (std::size_t i = 0; i < t.size(); ++i) {
            double orig = t.data()[i];
            t.data()[i] = orig + h;
            double up = forward_loss(m, seq, loss);
            t.data()[i] = orig - h;
            double down = forward_loss(m, seq, loss);
            t.data()[i] = orig;
            double fd = (up - down) / (2.0 * h);
            double a = g.data()[i];
            double denom = std::max({std::abs(a), std::abs(fd), 1e-6});
            double rel = std::abs(a - fd) / denom;
            if (rel > max_rel) {
                max_rel = rel;
                worst = params[p].first;
            }
        }
    }
    INFO("worst parameter: ", worst);
    CHECK(max_rel < 1e-4);
}

TEST_CASE("constant loss gives all-zero gradients; doubling the loss doubles them") {
    auto cfg = tiny_config();
    EncoderModel m = EncoderModel::init(cfg);
    auto seq = make_seq({kClsId, 5, 7, kSepId});

    auto constant_loss = [](const std::vector<ForwardCache>& caches) {
        BatchLossGrad out;
        out.loss = 42.0;
        out.d_pooled = Matrix(static_cast<int>(caches.size()), static_cast<int>(caches[0].pooled.size()));
        return out;
    };
    EncoderModel zero_grads = parameter_gradients(m, {seq}, constant_loss);
    visit_params(zero_grads, [&](const std::string&, const Matrix& t) {
        for (std::size_t i = 0; i < t.size(); ++i) CHECK(t.data()[i] == 0.0);
    });

    ProjectionLoss loss;
    loss.hidden_weights = Matrix(seq.length(), cfg.model_dim);
    Rng rng(9);
    loss.hidden_weights.fill_normal(rng, 0.0, 1.0);
    loss.pooled_weights.assign(cfg.pooler_dim, 0.5);
    ProjectionLoss doubled = loss;
    for (std::size_t i = 0; i < doubled.hidden_weights.size(); ++i) doubled.hidden_weights.data()[i] *= 2.0;
    for (auto& w : doubled.pooled_weights) w *= 2.0;

    EncoderModel g1 = parameter_gradients(m, {seq}, loss);
    EncoderModel g2 = parameter_gradients(m, {seq}, doubled);
    std::vector<const Matrix*> l1, l2;
    visit_params(g1, [&](const std::string&, const Matrix& t) { l1.push_back(&t); });
    visit_params(g2, [&](const std::string&, const Matrix& t) { l2.push_back(&t); });
    for (std::size_t p = 0; p < l1.size(); ++p)
        for (std::size_t i = 0; i < l1[p]->size(); ++i)
            CHECK(l2[p]->data()[i] == doctest::Approx(2.0 * l1[p]->data()[i]).epsilon(1e-12));
}

TEST_CASE("eval forward is identical across runs and thread counts") {
    EncoderConfig cfg;
    cfg.layers = 2;
    cfg.heads = 4;
    cfg.model_dim = 32;
    cfg.ffn_dim = 64;
    cfg.max_positions = 16;
    cfg.vocab_size = 50;
    cfg.dropout = 0.0;
    cfg.pooler_dim = 16;
    EncoderModel m = EncoderModel::init(cfg);
    auto seq = make_seq({kClsId, 10, 20, 30, 40, 11, 21, kSepId});

    set_num_threads(1);
    Matrix base = encode(m, seq);
    for (int threads : {2, 4, 8}) {
        set_num_threads(threads);
        Matrix other = encode(m, seq);
        CHECK(other == base);
    }
    set_num_threads(1);
}

TEST_CASE("dropout masks activations in train mode but never in eval mode") {
    auto cfg = tiny_config();
    cfg.dropout = 0.5;
    EncoderModel m = EncoderModel::init(cfg);
    auto seq = make_seq({kClsId, 5, 7, kSepId});
    Rng rng(5);
    auto train_cache = encoder_forward(m, seq, true, &rng);
    auto eval_cache = encoder_forward(m, seq, false, nullptr);
    bool differs = false;
    for (int i = 0; i < train_cache.hidden.rows() && !differs; ++i)
        for (int j = 0; j < train_cache.hidden.cols(); ++j)
            if (train_cache.hidden(i, j) != eval_cache.hidden(i, j)) {
                differs = true;
                break;
            }
    CHECK(differs);

    auto eval2 = encoder_forward(m, seq, false, nullptr);
    CHECK(eval_cache.hidden == eval2.hidden);
}

TEST_CASE("checkpoint round-trips bitwise and rejects corruption") {
    auto cfg = tiny_config();
    EncoderModel m = EncoderModel::init(cfg);
    const std::string path = "/tmp/webrep_encoder_test.bin";
    save_encoder(m, path);

    SUBCASE("round-trip") {
        EncoderModel loaded = load_encoder(path);
        CHECK(loaded.config.same_shape(m.config));
        std::vector<const Matrix*> a, b;
        visit_params(m, [&](const std::string&, const Matrix& t) { a.push_back(&t); });
        visit_params(loaded, [&](const std::string&, const Matrix& t) { b.push_back(&t); });
        for (std::size_t p = 0; p < a.size(); ++p) CHECK(*a[p] == *b[p]);
    }

    SUBCASE("truncation is detected") {
        auto bytes = std::filesystem::file_size(path);
        std::filesystem::resize_file(path, bytes - 40);
        CHECK_THROWS_AS(load_encoder(path), FormatError);
    }

    SUBCASE("trailing garbage is detected") {
        std::ofstream out(path, std::ios::binary | std::ios::app);
        out << "x";
        out.close();
        CHECK_THROWS_AS(load_encoder(path), FormatError);
    }

    SUBCASE("missing file is a format error") {
        CHECK_THROWS_AS(load_encoder("/tmp/webrep_no_such_encoder.bin"), FormatError);
    }
}

TEST_CASE("config validation") {
    EncoderConfig cfg = tiny_config();
    cfg.model_dim = 10;
    cfg.heads = 4;  // not divisible
    CHECK_THROWS_AS(EncoderModel::init(cfg), ValidationError);
    cfg = tiny_config();
    cfg.vocab_size = 2;
    CHECK_THROWS_AS(EncoderModel::init(cfg), ValidationError);
}
