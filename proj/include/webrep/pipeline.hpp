#pragma once

#include <functional>
#include <string>
#include <vector>

#include "webrep/config.hpp"

namespace webrep {

struct StageResult {
    std::string name;
    bool ran = false;       // false = outputs were fresh and the stage was skipped
    std::string detail;
};

// Writes through a temp file in the same directory plus an atomic rename, so
// a crash mid-write never leaves a partial artifact behind.
void atomic_write_text(const std::string& path, const std::string& content);
void atomic_write_with(const std::string& path, const std::function<void(const std::string&)>& writer);

// Orchestrates generate -> train-graph -> train-align -> evaluate over a
// shared artifact directory. Stage outputs carry config fingerprints (hash of
// the relevant config sections plus upstream artifact digests); `all` skips
// stages whose outputs are fresh. A lock file serializes commands per
// directory.
class Pipeline {
public:
    Pipeline(const PipelineConfig& cfg, std::string artifact_dir, bool force = false);

    StageResult generate();
    StageResult train_graph();
    StageResult train_align();
    StageResult evaluate();
    std::vector<StageResult> all();

    // Artifact locations inside the directory.
    std::string edges_path() const;
    std::string contents_path() const;
    std::string labels_path() const;
    std::string heldout_path() const;
    std::string user_table_path() const;
    std::string url_table_path() const;
    std::string graph_loss_path() const;
    std::string linkpred_path() const;
    std::string vocab_path() const;
    std::string encoder_path() const;
    std::string align_loss_path() const;
    std::string retrieval_path() const;
    std::string eval_contents_path() const;
    std::string eval_labels_path() const;
    std::string metrics_path() const;

    const PipelineConfig& config() const { return cfg_; }

private:
    struct Guard;

    std::uint64_t generate_fingerprint() const;
    std::uint64_t graph_fingerprint() const;
    std::uint64_t align_fingerprint() const;
    std::uint64_t eval_fingerprint() const;

    bool stage_fresh(const std::string& stage, std::uint64_t expected,
                     const std::vector<std::string>& outputs) const;
    void require_dependency(const std::string& stage, std::uint64_t expected,
                            const std::vector<std::string>& outputs, const std::string& producer) const;
    void record_fingerprint(const std::string& stage, std::uint64_t fp);

    StageResult run_generate();
    StageResult run_train_graph();
    StageResult run_train_align();
    StageResult run_evaluate();

    PipelineConfig cfg_;
    std::string dir_;
    bool force_ = false;
};

}  // namespace webrep
