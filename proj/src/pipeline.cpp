#include "webrep/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "webrep/common.hpp"
#include "webrep/tokenizer.hpp"

namespace fs = std::filesystem;

namespace webrep {

void atomic_write_with(const std::string& path, const std::function<void(const std::string&)>& writer) {
    const std::string tmp = path + ".tmp." + std::to_string(::getpid());
    try {
        writer(tmp);
        fs::rename(tmp, path);
    } catch (...) {
        std::error_code ec;
        fs::remove(tmp, ec);
        throw;
    }
}

void atomic_write_text(const std::string& path, const std::string& content) {
    atomic_write_with(path, [&](const std::string& tmp) {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp);
        out << content;
        if (!out) throw Error("short write on " + tmp);
    });
}

namespace {

// One command at a time per artifact directory.
struct LockFile {
    std::string path;
    int fd = -1;

    explicit LockFile(const std::string& dir) : path(dir + "/.lock") {
        fd = ::open(path.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0)
            throw Error("another webrep command holds " + path + " (remove the file if it is stale)");
        std::string pid = std::to_string(::getpid()) + "\n";
        ssize_t n = ::write(fd, pid.data(), pid.size());
        (void)n;
    }
    ~LockFile() {
        if (fd >= 0) {
            ::close(fd);
            ::unlink(path.c_str());
        }
    }
    LockFile(const LockFile&) = delete;
    LockFile& operator=(const LockFile&) = delete;
};

std::uint64_t digest_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot digest missing file: " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
        if (in.eof()) break;
    }
    return h;
}

std::map<std::string, std::uint64_t> read_manifest(const std::string& path) {
    std::map<std::string, std::uint64_t> out;
    std::ifstream in(path);
    if (!in) return out;
    std::string stage;
    std::uint64_t fp;
    while (in >> stage >> fp) out[stage] = fp;
    return out;
}

void write_manifest(const std::string& path, const std::map<std::string, std::uint64_t>& m) {
    std::ostringstream os;
    for (const auto& [stage, fp] : m) os << stage << '\t' << fp << '\n';
    atomic_write_text(path, os.str());
}

bool all_exist(const std::vector<std::string>& paths) {
    for (const auto& p : paths)
        if (!fs::exists(p)) return false;
    return true;
}

std::string loss_csv(const std::vector<double>& trajectory) {
    std::ostringstream os;
    os << "epoch,loss\n";
    char buf[64];
    for (std::size_t e = 0; e < trajectory.size(); ++e) {
        std::snprintf(buf, sizeof(buf), "%.10g", trajectory[e]);
        os << e << ',' << buf << '\n';
    }
    return os.str();
}

}  // namespace

Pipeline::Pipeline(const PipelineConfig& cfg, std::string artifact_dir, bool force)
    : cfg_(cfg), dir_(std::move(artifact_dir)), force_(force) {
    fs::create_directories(dir_);
    // Per-stage seeds derive from the single pipeline seed, so stage reruns
    // are reproducible in isolation.
    cfg_.graph.seed = derive_seed(cfg_.seed, "stage-generate");
    cfg_.embed.seed = derive_seed(cfg_.seed, "stage-train-graph");
    cfg_.encoder.seed = derive_seed(cfg_.seed, "stage-encoder-init");
    cfg_.align.seed = derive_seed(cfg_.seed, "stage-train-align");
    cfg_.eval.seed = derive_seed(cfg_.seed, "stage-evaluate");
    cfg_.embed.workers = cfg_.workers;
    set_num_threads(cfg_.workers);
}

std::string Pipeline::edges_path() const { return dir_ + "/edges.tsv"; }
std::string Pipeline::contents_path() const { return dir_ + "/contents.tsv"; }
std::string Pipeline::labels_path() const { return dir_ + "/labels.tsv"; }
std::string Pipeline::heldout_path() const { return dir_ + "/heldout.tsv"; }
std::string Pipeline::user_table_path() const { return dir_ + "/user_emb.bin"; }
std::string Pipeline::url_table_path() const { return dir_ + "/url_emb.bin"; }
std::string Pipeline::graph_loss_path() const { return dir_ + "/graph_loss.csv"; }
std::string Pipeline::linkpred_path() const { return dir_ + "/linkpred.tsv"; }
std::string Pipeline::vocab_path() const { return dir_ + "/vocab.tsv"; }
std::string Pipeline::encoder_path() const { return dir_ + "/encoder.bin"; }
std::string Pipeline::align_loss_path() const { return dir_ + "/align_loss.csv"; }
std::string Pipeline::retrieval_path() const { return dir_ + "/retrieval.txt"; }
std::string Pipeline::eval_contents_path() const { return dir_ + "/eval_contents.tsv"; }
std::string Pipeline::eval_labels_path() const { return dir_ + "/eval_labels.tsv"; }
std::string Pipeline::metrics_path() const { return dir_ + "/metrics.tsv"; }

std::uint64_t Pipeline::generate_fingerprint() const {
    return fnv1a64("generate|" + canonical_section(cfg_, "graph"));
}

std::uint64_t Pipeline::graph_fingerprint() const {
    std::string s = "train-graph|" + canonical_section(cfg_, "embed");
    s += std::to_string(digest_file(edges_path()));
    s += std::to_string(digest_file(contents_path()));
    s += std::to_string(digest_file(labels_path()));
    return fnv1a64(s);
}

std::uint64_t Pipeline::align_fingerprint() const {
    std::string s = "train-align|" + canonical_section(cfg_, "tokenizer") +
                    canonical_section(cfg_, "encoder") + canonical_section(cfg_, "align");
    s += std::to_string(digest_file(contents_path()));
    s += std::to_string(digest_file(url_table_path()));
    return fnv1a64(s);
}

std::uint64_t Pipeline::eval_fingerprint() const {
    std::string s = "evaluate|" + canonical_section(cfg_, "eval") + canonical_section(cfg_, "graph");
    s += std::to_string(digest_file(encoder_path()));
    s += std::to_string(digest_file(vocab_path()));
    s += std::to_string(digest_file(user_table_path()));
    s += std::to_string(digest_file(heldout_path()));
    s += std::to_string(digest_file(contents_path()));
    s += std::to_string(digest_file(labels_path()));
    return fnv1a64(s);
}

bool Pipeline::stage_fresh(const std::string& stage, std::uint64_t expected,
                           const std::vector<std::string>& outputs) const {
    if (!all_exist(outputs)) return false;
    auto manifest = read_manifest(dir_ + "/manifest.tsv");
    auto it = manifest.find(stage);
    return it != manifest.end() && it->second == expected;
}

void Pipeline::require_dependency(const std::string& stage, std::uint64_t expected,
                                  const std::vector<std::string>& outputs,
                                  const std::string& producer) const {
    for (const auto& p : outputs)
        if (!fs::exists(p))
            throw ValidationError("missing artifact " + p + "; run `webrep " + producer + "` first");
    auto manifest = read_manifest(dir_ + "/manifest.tsv");
    auto it = manifest.find(stage);
    if ((it == manifest.end() || it->second != expected) && !force_)
        throw ValidationError("artifacts of stage '" + stage +
                              "' are stale relative to the current config; rerun `webrep " + producer +
                              "` (or `webrep all`), or pass --force to use them anyway");
}

void Pipeline::record_fingerprint(const std::string& stage, std::uint64_t fp) {
    auto manifest = read_manifest(dir_ + "/manifest.tsv");
    manifest[stage] = fp;
    write_manifest(dir_ + "/manifest.tsv", manifest);
}

StageResult Pipeline::run_generate() {
    SyntheticCorpus corpus = generate_synthetic(cfg_.graph);
    atomic_write_with(edges_path(), [&](const std::string& tmp) {
        save_edges(corpus.graph, tmp);
        fs::rename(tmp + ".users.idmap.tsv", edges_path() + ".users.idmap.tsv");
        fs::rename(tmp + ".urls.idmap.tsv", edges_path() + ".urls.idmap.tsv");
    });
    atomic_write_with(contents_path(), [&](const std::string& tmp) { save_contents(corpus.contents, tmp); });
    atomic_write_with(labels_path(), [&](const std::string& tmp) {
        std::ostringstream os;
        os << "# communities\t" << corpus.num_communities << '\n';
        for (std::size_t i = 0; i < corpus.url_community.size(); ++i)
            os << "url\t" << i << '\t' << corpus.url_community[i] << '\n';
        for (std::size_t i = 0; i < corpus.user_community.size(); ++i)
            os << "user\t" << i << '\t' << corpus.user_community[i] << '\n';
        std::ofstream out(tmp, std::ios::trunc);
        out << os.str();
    });
    record_fingerprint("generate", generate_fingerprint());
    std::ostringstream d;
    d << corpus.graph.num_users() << " users, " << corpus.graph.num_urls() << " urls, "
      << corpus.graph.edges().size() << " merged edges";
    return {"generate", true, d.str()};
}

StageResult Pipeline::run_train_graph() {
    require_dependency("generate", generate_fingerprint(),
                       {edges_path(), contents_path(), labels_path()}, "generate");
    SyntheticCorpus corpus = load_corpus(edges_path(), contents_path(), labels_path());
    EdgeSplit split = split_edges(corpus.graph, cfg_.holdout_fraction, cfg_.embed.seed);
    GraphTrainResult trained = train_graph_embeddings(split.train, cfg_.embed);

    atomic_write_with(user_table_path(), [&](const std::string& tmp) { save_table(trained.users, tmp); });
    atomic_write_with(url_table_path(), [&](const std::string& tmp) { save_table(trained.urls, tmp); });
    atomic_write_text(graph_loss_path(), loss_csv(trained.loss_trajectory));
    {
        std::ostringstream os;
        for (const auto& e : split.heldout) os << e.user << '\t' << e.url << '\n';
        atomic_write_text(heldout_path(), os.str());
    }

    // Decomposition quality summary: trained metrics vs a random-embedding null.
    LinkPredictionResult lp = link_prediction_eval(trained.users, trained.urls, split.heldout,
                                                   cfg_.linkpred_negatives, cfg_.embed.seed, &split.train);
    GraphTrainConfig null_cfg = cfg_.embed;
    null_cfg.epochs = 0;
    null_cfg.seed = derive_seed(cfg_.embed.seed, "null-tables");
    GraphTrainResult null_tables = train_graph_embeddings(split.train, null_cfg);
    LinkPredictionResult null_lp = link_prediction_eval(null_tables.users, null_tables.urls, split.heldout,
                                                        cfg_.linkpred_negatives, cfg_.embed.seed, &split.train);
    {
        char buf[256];
        std::snprintf(buf, sizeof(buf),
                      "hits_at_10\t%.6f\nmrr\t%.6f\nnull_hits_at_10\t%.6f\nnull_mrr\t%.6f\nheldout\t%d\n",
                      lp.hits_at_10, lp.mrr, null_lp.hits_at_10, null_lp.mrr, lp.evaluated);
        atomic_write_text(linkpred_path(), buf);
    }

    record_fingerprint("train-graph", graph_fingerprint());
    std::ostringstream d;
    d << split.heldout.size() << " held-out edges, final loss "
      << trained.loss_trajectory.back() << ", mrr " << lp.mrr;
    return {"train-graph", true, d.str()};
}

StageResult Pipeline::run_train_align() {
    require_dependency("generate", generate_fingerprint(),
                       {edges_path(), contents_path(), labels_path()}, "generate");
    require_dependency("train-graph", graph_fingerprint(),
                       {user_table_path(), url_table_path(), heldout_path()}, "train-graph");

    auto contents = load_contents(contents_path());
    EmbeddingTable url_table = load_table(url_table_path());

    Vocab vocab = Vocab::build(contents, cfg_.min_freq);
    atomic_write_with(vocab_path(), [&](const std::string& tmp) { vocab.save(tmp); });

    EncoderConfig ecfg = cfg_.encoder;
    ecfg.vocab_size = vocab.size();
    ecfg.max_positions = cfg_.max_tokens;
    ecfg.pooler_dim = url_table.dim;
    EncoderModel encoder = EncoderModel::init(ecfg);

    AlignResult res = webrep::train_align(encoder, contents, vocab, url_table, cfg_.align);
    atomic_write_with(encoder_path(), [&](const std::string& tmp) { save_encoder(encoder, tmp); });
    {
        std::ostringstream os;
        os << "epoch,step,loss\n";
        char buf[64];
        for (const auto& row : res.log) {
            std::snprintf(buf, sizeof(buf), "%.10g", row.loss);
            os << row.epoch << ',' << row.step << ',' << buf << '\n';
        }
        atomic_write_text(align_loss_path(), os.str());
    }
    double acc = retrieval_accuracy(encoder, contents, vocab, url_table, 1);
    {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "retrieval_at_1\t%.6f\ninitial_loss\t%.6f\nfinal_loss\t%.6f\n", acc,
                      res.initial_loss, res.final_loss);
        atomic_write_text(retrieval_path(), buf);
    }

    record_fingerprint("train-align", align_fingerprint());
    std::ostringstream d;
    d << "initial loss " << res.initial_loss << ", final loss " << res.final_loss << ", retrieval@1 " << acc;
    return {"train-align", true, d.str()};
}

StageResult Pipeline::run_evaluate() {
    require_dependency("generate", generate_fingerprint(),
                       {edges_path(), contents_path(), labels_path()}, "generate");
    require_dependency("train-graph", graph_fingerprint(),
                       {user_table_path(), url_table_path(), heldout_path()}, "train-graph");
    require_dependency("train-align", align_fingerprint(), {vocab_path(), encoder_path()}, "train-align");

    SyntheticCorpus corpus = load_corpus(edges_path(), contents_path(), labels_path());
    EmbeddingTable user_table = load_table(user_table_path());
    Vocab vocab = Vocab::load(vocab_path());
    EncoderModel aligned = load_encoder(encoder_path());

    EncoderConfig bcfg = aligned.config;
    bcfg.seed = derive_seed(cfg_.seed, "baseline-encoder");
    EncoderModel baseline = EncoderModel::init(bcfg);

    // Few-shot topic/hashtag instances come from fresh contents drawn from
    // the corpus content model, so large N grids are not capped by the graph.
    auto eval_items = generate_eval_contents(cfg_.graph, cfg_.topic_per_class);
    atomic_write_with(eval_contents_path(), [&](const std::string& tmp) {
        std::vector<WebpageContent> cs;
        for (const auto& it : eval_items) cs.push_back(it.content);
        save_contents(cs, tmp);
    });
    atomic_write_with(eval_labels_path(), [&](const std::string& tmp) {
        std::ostringstream os;
        for (std::size_t i = 0; i < eval_items.size(); ++i)
            os << "url\t" << i << '\t' << eval_items[i].community << '\n';
        std::ofstream out(tmp, std::ios::trunc);
        out << os.str();
    });

    std::vector<HeldoutEdge> heldout;
    {
        std::ifstream in(heldout_path());
        UserId u;
        UrlId w;
        while (in >> u >> w) heldout.push_back({u, w});
    }

    TaskSuiteInputs inputs;
    inputs.aligned = &aligned;
    inputs.baseline = &baseline;
    inputs.vocab = &vocab;
    inputs.topic_items = &eval_items;
    inputs.corpus = &corpus;
    inputs.user_table = &user_table;
    inputs.heldout = &heldout;

    MetricsReport report = run_task_suite(inputs, cfg_.eval);
    atomic_write_text(metrics_path(), report.to_tsv());

    record_fingerprint("evaluate", eval_fingerprint());
    std::ostringstream d;
    d << report.records.size() << " metric records";
    return {"evaluate", true, d.str()};
}

StageResult Pipeline::generate() {
    LockFile lock(dir_);
    return run_generate();
}

StageResult Pipeline::train_graph() {
    LockFile lock(dir_);
    return run_train_graph();
}

StageResult Pipeline::train_align() {
    LockFile lock(dir_);
    return run_train_align();
}

StageResult Pipeline::evaluate() {
    LockFile lock(dir_);
    return run_evaluate();
}

std::vector<StageResult> Pipeline::all() {
    LockFile lock(dir_);
    std::vector<StageResult> results;

    if (stage_fresh("generate", generate_fingerprint(), {edges_path(), contents_path(), labels_path()}))
        results.push_back({"generate", false, "up to date"});
    else
        results.push_back(run_generate());

    if (stage_fresh("train-graph", graph_fingerprint(),
                    {user_table_path(), url_table_path(), heldout_path(), graph_loss_path(), linkpred_path()}))
        results.push_back({"train-graph", false, "up to date"});
    else
        results.push_back(run_train_graph());

    if (stage_fresh("train-align", align_fingerprint(),
                    {vocab_path(), encoder_path(), align_loss_path(), retrieval_path()}))
        results.push_back({"train-align", false, "up to date"});
    else
        results.push_back(run_train_align());

    if (stage_fresh("evaluate", eval_fingerprint(), {metrics_path()}))
        results.push_back({"evaluate", false, "up to date"});
    else
        results.push_back(run_evaluate());

    return results;
}

}  // namespace webrep
