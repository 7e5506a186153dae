#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "webrep/matrix.hpp"

namespace webrep {

enum class ProbeActivation : std::uint8_t { Tanh = 0, Relu = 1 };

struct ProbeConfig {
    int hidden = 128;
    ProbeActivation activation = ProbeActivation::Tanh;
    int num_classes = 2;
    double learning_rate = 1e-5;
    int batch_size = 8;
    int epochs = 10;
    std::uint64_t seed = 1;
};

// Two-layer probe: act(x W_c + b_c) -> softmax(W_out + b_out). Trained on
// fixed feature vectors; never touches the encoder or graph tables.
struct ProbeHead {
    ProbeConfig config;
    Matrix w_c, b_c;      // input_dim x hidden, 1 x hidden
    Matrix w_out, b_out;  // hidden x num_classes, 1 x num_classes

    // Probability vector over classes (sums to 1).
    std::vector<double> forward(const double* x, int dim) const;
    int predict(const double* x, int dim) const;
};

// Minimizes softmax cross-entropy on the given features with the fixed
// few-shot hyperparameters (no validation-set tuning).
ProbeHead train_probe(const Matrix& features, const std::vector<int>& labels, const ProbeConfig& cfg);

struct FewShotSplit {
    std::vector<int> train_indices;  // exactly n_per_class per class
    std::vector<int> test_indices;   // disjoint remainder, optionally capped per class
};

// Seeded uniform sampling without replacement of n_per_class instances per
// class; throws ValidationError naming any class with < n_per_class + 1
// instances. test_cap_per_class <= 0 means uncapped.
FewShotSplit few_shot_sample(const std::vector<int>& labels, int num_classes, int n_per_class,
                             std::uint64_t seed, int test_cap_per_class = 10000);

// x = user_vec (+) url_rep.
std::vector<double> concat_user_url(const std::vector<double>& user_vec, const std::vector<double>& url_rep);

// Unweighted mean of per-class F1; classes absent from both predictions and
// labels contribute 0.
double macro_f1(const std::vector<int>& predictions, const std::vector<int>& labels, int num_classes);
// F1 over pooled counts; equals accuracy for single-label multi-class input.
double micro_f1(const std::vector<int>& predictions, const std::vector<int>& labels, int num_classes);

// Average precision: scores sorted descending (ties broken by stable input
// order), precision integrated over recall steps. Requires both label kinds.
double pr_auc(const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace webrep
