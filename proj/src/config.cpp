#include "webrep/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "webrep/common.hpp"

namespace webrep {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

long long to_int(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        long long x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ValidationError("config: key '" + key + "' expects an integer, got '" + v + "'");
    }
}

double to_double(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ValidationError("config: key '" + key + "' expects a number, got '" + v + "'");
    }
}

bool to_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ValidationError("config: key '" + key + "' expects true/false, got '" + v + "'");
}

std::vector<int> to_int_list(const std::string& v, const std::string& key) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(static_cast<int>(to_int(item, key)));
    }
    if (out.empty()) throw ValidationError("config: key '" + key + "' expects a comma-separated int list");
    return out;
}

}  // namespace

PipelineConfig parse_config_text(const std::string& text) {
    PipelineConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ParseError("config line " + std::to_string(line_no) + ": malformed section header");
            section = t.substr(1, t.size() - 2);
            if (section != "graph" && section != "embed" && section != "tokenizer" && section != "encoder" &&
                section != "align" && section != "eval" && section != "pipeline")
                throw ValidationError("config: unknown section [" + section + "]");
            continue;
        }
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ParseError("config line " + std::to_string(line_no) + ": expected key = value");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        std::size_t hash = value.find(" #");
        if (hash != std::string::npos) value = trim(value.substr(0, hash));
        if (section.empty()) throw ValidationError("config: key '" + key + "' outside any section");

        const std::string qkey = section + "." + key;
        if (section == "graph") {
            if (key == "num_users") cfg.graph.num_users = static_cast<int>(to_int(value, qkey));
            else if (key == "num_urls") cfg.graph.num_urls = static_cast<int>(to_int(value, qkey));
            else if (key == "num_communities") cfg.graph.num_communities = static_cast<int>(to_int(value, qkey));
            else if (key == "edges_per_user") cfg.graph.edges_per_user = static_cast<int>(to_int(value, qkey));
            else if (key == "p_in") cfg.graph.p_in = to_double(value, qkey);
            else if (key == "vocab_size") cfg.graph.vocab_size = static_cast<int>(to_int(value, qkey));
            else if (key == "background_rate") cfg.graph.background_rate = to_double(value, qkey);
            else if (key == "community_boost") cfg.graph.community_boost = to_double(value, qkey);
            else throw ValidationError("config: unknown key '" + qkey + "'");
        } else if (section == "embed") {
            if (key == "dim") cfg.embed.dim = static_cast<int>(to_int(value, qkey));
            else if (key == "negatives") cfg.embed.negatives_per_positive = static_cast<int>(to_int(value, qkey));
            else if (key == "learning_rate") cfg.embed.learning_rate = to_double(value, qkey);
            else if (key == "epochs") cfg.embed.epochs = static_cast<int>(to_int(value, qkey));
            else if (key == "init_scale") cfg.embed.init_scale = to_double(value, qkey);
            else if (key == "uniform_negatives") cfg.embed.uniform_negatives = to_bool(value, qkey);
            else if (key == "holdout_fraction") cfg.holdout_fraction = to_double(value, qkey);
            else if (key == "linkpred_negatives") cfg.linkpred_negatives = static_cast<int>(to_int(value, qkey));
            else throw ValidationError("config: unknown key '" + qkey + "'");
        } else if (section == "tokenizer") {
            if (key == "min_freq") cfg.min_freq = static_cast<int>(to_int(value, qkey));
            else if (key == "max_tokens") cfg.max_tokens = static_cast<int>(to_int(value, qkey));
            else throw ValidationError("config: unknown key '" + qkey + "'");
        } else if (section == "encoder") {
            if (key == "layers") cfg.encoder.layers = static_cast<int>(to_int(value, qkey));
            else if (key == "heads") cfg.encoder.heads = static_cast<int>(to_int(value, qkey));
            else if (key == "model_dim") cfg.encoder.model_dim = static_cast<int>(to_int(value, qkey));
            else if (key == "ffn_dim") cfg.encoder.ffn_dim = static_cast<int>(to_int(value, qkey));
            else if (key == "dropout") cfg.encoder.dropout = to_double(value, qkey);
            else if (key == "init_std") cfg.encoder.init_std = to_double(value, qkey);
            else throw ValidationError("config: unknown key '" + qkey + "'");
        } else if (section == "align") {
            if (key == "temperature") cfg.align.temperature = to_double(value, qkey);
            else if (key == "batch_size") cfg.align.batch_size = static_cast<int>(to_int(value, qkey));
            else if (key == "epochs") cfg.align.epochs = static_cast<int>(to_int(value, qkey));
            else if (key == "learning_rate") cfg.align.learning_rate = to_double(value, qkey);
            else throw ValidationError("config: unknown key '" + qkey + "'");
        } else if (section == "eval") {
            if (key == "n_grid") cfg.eval.n_grid = to_int_list(value, qkey);
            else if (key == "num_seeds") cfg.eval.num_seeds = static_cast<int>(to_int(value, qkey));
            else if (key == "test_cap_per_class") cfg.eval.test_cap_per_class = static_cast<int>(to_int(value, qkey));
            else if (key == "topic_per_class") cfg.topic_per_class = static_cast<int>(to_int(value, qkey));
            else if (key == "run_topic") cfg.eval.run_topic = to_bool(value, qkey);
            else if (key == "run_hashtag") cfg.eval.run_hashtag = to_bool(value, qkey);
            else if (key == "run_engagement") cfg.eval.run_engagement = to_bool(value, qkey);
            else throw ValidationError("config: unknown key '" + qkey + "'");
        } else if (section == "pipeline") {
            if (key == "seed") cfg.seed = static_cast<std::uint64_t>(to_int(value, qkey));
            else if (key == "workers") cfg.workers = static_cast<int>(to_int(value, qkey));
            else throw ValidationError("config: unknown key '" + qkey + "'");
        }
    }
    cfg.encoder.max_positions = cfg.max_tokens;
    return cfg;
}

PipelineConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("config file does not exist: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace

std::string canonical_section(const PipelineConfig& cfg, const std::string& section) {
    std::map<std::string, std::string> kv;
    if (section == "graph") {
        kv["num_users"] = std::to_string(cfg.graph.num_users);
        kv["num_urls"] = std::to_string(cfg.graph.num_urls);
        kv["num_communities"] = std::to_string(cfg.graph.num_communities);
        kv["edges_per_user"] = std::to_string(cfg.graph.edges_per_user);
        kv["p_in"] = fmt_double(cfg.graph.p_in);
        kv["vocab_size"] = std::to_string(cfg.graph.vocab_size);
        kv["background_rate"] = fmt_double(cfg.graph.background_rate);
        kv["community_boost"] = fmt_double(cfg.graph.community_boost);
        kv["seed"] = std::to_string(cfg.graph.seed);
    } else if (section == "embed") {
        kv["dim"] = std::to_string(cfg.embed.dim);
        kv["negatives"] = std::to_string(cfg.embed.negatives_per_positive);
        kv["learning_rate"] = fmt_double(cfg.embed.learning_rate);
        kv["epochs"] = std::to_string(cfg.embed.epochs);
        kv["init_scale"] = fmt_double(cfg.embed.init_scale);
        kv["uniform_negatives"] = cfg.embed.uniform_negatives ? "true" : "false";
        kv["holdout_fraction"] = fmt_double(cfg.holdout_fraction);
        kv["linkpred_negatives"] = std::to_string(cfg.linkpred_negatives);
        kv["seed"] = std::to_string(cfg.embed.seed);
    } else if (section == "tokenizer") {
        kv["min_freq"] = std::to_string(cfg.min_freq);
        kv["max_tokens"] = std::to_string(cfg.max_tokens);
    } else if (section == "encoder") {
        kv["layers"] = std::to_string(cfg.encoder.layers);
        kv["heads"] = std::to_string(cfg.encoder.heads);
        kv["model_dim"] = std::to_string(cfg.encoder.model_dim);
        kv["ffn_dim"] = std::to_string(cfg.encoder.ffn_dim);
        kv["dropout"] = fmt_double(cfg.encoder.dropout);
        kv["init_std"] = fmt_double(cfg.encoder.init_std);
        kv["seed"] = std::to_string(cfg.encoder.seed);
    } else if (section == "align") {
        kv["temperature"] = fmt_double(cfg.align.temperature);
        kv["batch_size"] = std::to_string(cfg.align.batch_size);
        kv["epochs"] = std::to_string(cfg.align.epochs);
        kv["learning_rate"] = fmt_double(cfg.align.learning_rate);
        kv["seed"] = std::to_string(cfg.align.seed);
    } else if (section == "eval") {
        std::string grid;
        for (std::size_t i = 0; i < cfg.eval.n_grid.size(); ++i) {
            if (i) grid += ",";
            grid += std::to_string(cfg.eval.n_grid[i]);
        }
        kv["n_grid"] = grid;
        kv["num_seeds"] = std::to_string(cfg.eval.num_seeds);
        kv["test_cap_per_class"] = std::to_string(cfg.eval.test_cap_per_class);
        kv["topic_per_class"] = std::to_string(cfg.topic_per_class);
        kv["run_topic"] = cfg.eval.run_topic ? "true" : "false";
        kv["run_hashtag"] = cfg.eval.run_hashtag ? "true" : "false";
        kv["run_engagement"] = cfg.eval.run_engagement ? "true" : "false";
        kv["seed"] = std::to_string(cfg.eval.seed);
    } else {
        throw ValidationError("canonical_section: unknown section " + section);
    }
    std::string out;
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
}

std::string default_config_text() {
    PipelineConfig d;
    std::ostringstream out;
    out << "# webrep pipeline configuration (defaults)\n"
        << "[pipeline]\n"
        << "seed = " << d.seed << "\n"
        << "workers = " << d.workers << "\n\n"
        << "[graph]\n"
        << "num_users = " << d.graph.num_users << "\n"
        << "num_urls = " << d.graph.num_urls << "\n"
        << "num_communities = " << d.graph.num_communities << "\n"
        << "edges_per_user = " << d.graph.edges_per_user << "\n"
        << "p_in = " << fmt_double(d.graph.p_in) << "\n"
        << "vocab_size = " << d.graph.vocab_size << "\n"
        << "background_rate = " << fmt_double(d.graph.background_rate) << "\n"
        << "community_boost = " << fmt_double(d.graph.community_boost) << "\n\n"
        << "[embed]\n"
        << "dim = " << d.embed.dim << "\n"
        << "negatives = " << d.embed.negatives_per_positive << "\n"
        << "learning_rate = " << fmt_double(d.embed.learning_rate) << "\n"
        << "epochs = " << d.embed.epochs << "\n"
        << "init_scale = " << fmt_double(d.embed.init_scale) << "  # 0 selects 1/sqrt(dim)\n"
        << "uniform_negatives = false\n"
        << "holdout_fraction = " << fmt_double(d.holdout_fraction) << "\n"
        << "linkpred_negatives = " << d.linkpred_negatives << "\n\n"
        << "[tokenizer]\n"
        << "min_freq = " << d.min_freq << "\n"
        << "max_tokens = " << d.max_tokens << "\n\n"
        << "[encoder]\n"
        << "layers = " << d.encoder.layers << "\n"
        << "heads = " << d.encoder.heads << "\n"
        << "model_dim = " << d.encoder.model_dim << "\n"
        << "ffn_dim = " << d.encoder.ffn_dim << "\n"
        << "dropout = " << fmt_double(d.encoder.dropout) << "\n"
        << "init_std = " << fmt_double(d.encoder.init_std) << "\n\n"
        << "[align]\n"
        << "temperature = " << fmt_double(d.align.temperature) << "\n"
        << "batch_size = " << d.align.batch_size << "\n"
        << "epochs = " << d.align.epochs << "\n"
        << "learning_rate = " << fmt_double(d.align.learning_rate) << "\n\n"
        << "[eval]\n"
        << "n_grid = 8,16,64,128,256,512\n"
        << "num_seeds = " << d.eval.num_seeds << "\n"
        << "test_cap_per_class = " << d.eval.test_cap_per_class << "\n"
        << "topic_per_class = " << d.topic_per_class << "\n"
        << "run_topic = true\n"
        << "run_hashtag = true\n"
        << "run_engagement = true\n";
    return out.str();
}

}  // namespace webrep
