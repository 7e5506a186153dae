#pragma once

#include <cstdint>
#include <string>

#include "webrep/align.hpp"
#include "webrep/embedding.hpp"
#include "webrep/encoder.hpp"
#include "webrep/synthetic.hpp"
#include "webrep/tasks.hpp"

namespace webrep {

// Full pipeline configuration. Defaults match the per-module defaults; the
// file format is INI-style sections of key = value lines with '#' comments.
// Unknown sections or keys are rejected.
struct PipelineConfig {
    SyntheticConfig graph;      // [graph]
    GraphTrainConfig embed;     // [embed]
    double holdout_fraction = 0.1;
    int linkpred_negatives = 99;

    int min_freq = 1;           // [tokenizer]
    int max_tokens = kDefaultMaxTokens;

    EncoderConfig encoder;      // [encoder]; vocab_size is filled from the built vocab

    AlignConfig align;          // [align]

    TaskGridSpec eval;          // [eval]
    int topic_per_class = 650;

    std::uint64_t seed = 1;     // [pipeline]
    int workers = 1;
};

PipelineConfig parse_config_file(const std::string& path);
PipelineConfig parse_config_text(const std::string& text);

// Canonical "key = value" rendering of one section (sorted keys, parsed
// values). Input to the stage fingerprints, so semantically identical configs
// fingerprint identically.
std::string canonical_section(const PipelineConfig& cfg, const std::string& section);

// A commented config file with every key at its default.
std::string default_config_text();

}  // namespace webrep
