// webrep: two-stage webpage representation pipeline over a user<->URL
// engagement graph. Subcommands run individual stages or the whole chain
// against a shared artifact directory.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "webrep/common.hpp"
#include "webrep/config.hpp"
#include "webrep/pipeline.hpp"

namespace {

void print_stage(const webrep::StageResult& r) {
    std::cout << (r.ran ? "[ran]     " : "[skipped] ") << r.name;
    if (!r.detail.empty()) std::cout << ": " << r.detail;
    std::cout << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"webrep: engagement-graph decomposition + contrastive text-encoder alignment"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "artifacts";
    long long seed = -1;
    int workers = -1;
    bool force = false;

    app.add_option("--config", config_path, "Pipeline config file (INI sections)");
    app.add_option("--out", out_dir, "Artifact directory")->capture_default_str();
    app.add_option("--seed", seed, "Override the pipeline seed");
    app.add_option("--workers", workers, "Worker threads (1 = fully reproducible)");
    app.add_flag("--force", force, "Use stale upstream artifacts instead of refusing");

    auto* cmd_generate = app.add_subcommand("generate", "Generate the synthetic planted-community corpus");
    auto* cmd_train_graph = app.add_subcommand("train-graph", "Stage 1: train graph embeddings");
    auto* cmd_train_align = app.add_subcommand("train-align", "Stage 2: align the text encoder");
    auto* cmd_evaluate = app.add_subcommand("evaluate", "Frozen-encoder few-shot evaluation suite");
    auto* cmd_all = app.add_subcommand("all", "Run every stage, skipping fresh ones");
    auto* cmd_config = app.add_subcommand("print-config", "Print the default config file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_config->parsed()) {
            std::cout << webrep::default_config_text();
            return 0;
        }

        webrep::PipelineConfig cfg = config_path.empty() ? webrep::PipelineConfig{}
                                                         : webrep::parse_config_file(config_path);
        if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
        if (workers >= 1) cfg.workers = workers;

        webrep::Pipeline pipeline(cfg, out_dir, force);
        if (cmd_generate->parsed()) {
            print_stage(pipeline.generate());
        } else if (cmd_train_graph->parsed()) {
            print_stage(pipeline.train_graph());
        } else if (cmd_train_align->parsed()) {
            print_stage(pipeline.train_align());
        } else if (cmd_evaluate->parsed()) {
            print_stage(pipeline.evaluate());
        } else if (cmd_all->parsed()) {
            for (const auto& r : pipeline.all()) print_stage(r);
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
