#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dflearn/algebra.hpp"
#include "dflearn/dynamics.hpp"
#include "dflearn/likelihood.hpp"

namespace dflearn::training {

struct TrainConfig {
    int epochs = 300;
    int batch_size = 0;  // 0: full batch up to 128 chains, minibatches of 64 beyond
    double learning_rate = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    int restarts = 3;
    double init_scale = 0.2;
    std::uint64_t seed = 0;
    int eval_every = 1;
    int lindblad_count = 0;  // 0: structure default

    void validate() const;
};

struct HistoryEntry {
    int epoch = 0;
    double train_value = 0.0;
    double test_value = 0.0;
};

struct TrainReport {
    algebra::AlgebraStructure structure;
    int restart_index = -1;
    int epochs = 0;
    int best_epoch = 0;
    double best_test_value = -std::numeric_limits<double>::infinity();
    double final_test_value = 0.0;
    double final_train_value = 0.0;
    // |test(T) - test(previous evaluation)|; meaningful when the best epoch
    // falls in the last 5% of training, i.e. the run may still be improving.
    double convergence_delta = 0.0;
    bool best_near_end = false;
    int failed_restarts = 0;
    std::vector<HistoryEntry> history;  // winning restart only
    likelihood::ParameterVector best_params;
};

// Gaussian initialisation of all continuous parameters (std init_scale per
// real component); the generator draw is symmetrised to Hermitian.
likelihood::ParameterVector init_params(const algebra::AlgebraStructure& structure,
                                        int lindblad_count, double init_scale,
                                        rng::Engine& eng);

// Maximises the batched log likelihood with Adam over `restarts` independent
// initialisations and returns the restart with the highest test value.
// Deterministic for fixed config and datasets; restart r draws its rng
// streams from (seed, r) independently of the other restarts.
TrainReport train(const algebra::AlgebraStructure& structure, const TrainConfig& cfg,
                  const dynamics::Dataset& train_data, const dynamics::Dataset& test_data);

struct ScanRow {
    algebra::AlgebraStructure structure;
    TrainReport report;
    bool failed = false;
    std::string error;
};

struct ScanResult {
    std::vector<ScanRow> rows;  // sorted by best test value, failures last
    std::optional<double> reference_value;  // generating model on the test set
};

// Trains every candidate structure on the same data.  Rows run on `jobs`
// worker threads; per-row seeds depend only on the row index, so the thread
// schedule cannot change results.  A row that throws is recorded as failed
// and the scan continues.
ScanResult structure_scan(const std::vector<algebra::AlgebraStructure>& candidates,
                          const TrainConfig& cfg, const dynamics::Dataset& train_data,
                          const dynamics::Dataset& test_data, int jobs = 1);

struct Violation {
    algebra::AlgebraStructure expressive;  // embeds into `simple`'s algebra
    algebra::AlgebraStructure simple;
    double expressive_value = 0.0;
    double simple_value = 0.0;
    double gap = 0.0;  // simple_value - expressive_value, larger than margin
};

struct ConsistencyReport {
    double margin = 0.0;
    std::vector<Violation> violations;
    // Most expressive structure whose restriction of the scan to itself and
    // all simpler classes is violation free; ties broken by test value.
    std::optional<algebra::AlgebraStructure> frontier;
};

// Checks the scan against the embedding order: a model class that contains
// another must not test worse than it by more than the margin.
ConsistencyReport hierarchy_consistency(const ScanResult& scan,
                                        const algebra::HierarchyDag& dag,
                                        double margin = 0.005);

}  // namespace dflearn::training
