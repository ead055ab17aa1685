#include "dflearn/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "dflearn/physmodels.hpp"

namespace dflearn::training {

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be positive");
    if (batch_size < 0) throw std::invalid_argument("TrainConfig: negative batch size");
    if (learning_rate <= 0.0) throw std::invalid_argument("TrainConfig: learning rate must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw std::invalid_argument("TrainConfig: Adam moments must lie in [0, 1)");
    if (adam_epsilon <= 0.0) throw std::invalid_argument("TrainConfig: Adam epsilon must be positive");
    if (restarts < 1) throw std::invalid_argument("TrainConfig: need at least one restart");
    if (init_scale <= 0.0) throw std::invalid_argument("TrainConfig: init scale must be positive");
    if (eval_every < 1) throw std::invalid_argument("TrainConfig: eval_every must be positive");
    if (lindblad_count < 0) throw std::invalid_argument("TrainConfig: negative lindblad count");
}

likelihood::ParameterVector init_params(const algebra::AlgebraStructure& structure,
                                        int lindblad_count, double init_scale,
                                        rng::Engine& eng) {
    return likelihood::pack(
        physmodels::random_structured_model(structure, lindblad_count, init_scale, eng));
}

namespace {

struct RestartOutcome {
    bool failed = false;
    std::string error;
    int best_epoch = 0;
    double best_test_value = -std::numeric_limits<double>::infinity();
    double final_test_value = 0.0;
    double final_train_value = 0.0;
    double convergence_delta = 0.0;
    std::vector<HistoryEntry> history;
    likelihood::ParameterVector best_params;
};

RestartOutcome run_restart(const algebra::AlgebraStructure& structure, const TrainConfig& cfg,
                           const dynamics::Dataset& train_data,
                           const dynamics::Dataset& test_data, int lindblad_count,
                           int restart) {
    RestartOutcome out;
    const int chains = train_data.size();
    const int batch_size =
        cfg.batch_size > 0 ? std::min(cfg.batch_size, chains) : (chains <= 128 ? chains : 64);

    rng::Engine init_eng = rng::make_engine(cfg.seed, 0x496e6974ULL + restart);
    rng::Engine shuffle_eng = rng::make_engine(cfg.seed, 0x53687566ULL + restart);
    likelihood::ParameterVector params =
        init_params(structure, lindblad_count, cfg.init_scale, init_eng);

    const int dim = params.layout.total_size();
    RealVector m = RealVector::Zero(dim);
    RealVector v = RealVector::Zero(dim);
    long step = 0;

    std::vector<int> order(chains);
    std::iota(order.begin(), order.end(), 0);

    const auto evaluate = [&](int epoch) {
        const double train_value = likelihood::batch_log_likelihood(params, train_data);
        const double test_value = likelihood::batch_log_likelihood(params, test_data);
        out.history.push_back(HistoryEntry{epoch, train_value, test_value});
        if (test_value > out.best_test_value) {
            out.best_test_value = test_value;
            out.best_epoch = epoch;
            out.best_params = params;
        }
        out.final_test_value = test_value;
        out.final_train_value = train_value;
    };

    try {
        evaluate(0);
        for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
            if (batch_size < chains)
                std::shuffle(order.begin(), order.end(), shuffle_eng);
            for (int start = 0; start < chains; start += batch_size) {
                const int len = std::min(batch_size, chains - start);
                const std::vector<int> batch(order.begin() + start,
                                             order.begin() + start + len);
                const likelihood::GradientResult g =
                    likelihood::gradient(params, train_data, batch);
                if (!std::isfinite(g.value))
                    throw std::runtime_error("non-finite objective");
                ++step;
                for (int i = 0; i < dim; ++i) {
                    const double gi = g.gradient(i);
                    m(i) = cfg.beta1 * m(i) + (1.0 - cfg.beta1) * gi;
                    v(i) = cfg.beta2 * v(i) + (1.0 - cfg.beta2) * gi * gi;
                    const double mhat = m(i) / (1.0 - std::pow(cfg.beta1, step));
                    const double vhat = v(i) / (1.0 - std::pow(cfg.beta2, step));
                    params.values(i) += cfg.learning_rate * mhat /
                                        (std::sqrt(vhat) + cfg.adam_epsilon);
                }
            }
            if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) evaluate(epoch);
        }
    } catch (const std::exception& e) {
        out.failed = true;
        out.error = e.what();
        return out;
    }
    if (out.history.size() >= 2) {
        const auto& last = out.history[out.history.size() - 1];
        const auto& prev = out.history[out.history.size() - 2];
        out.convergence_delta = std::abs(last.test_value - prev.test_value);
    }
    return out;
}

}  // namespace

TrainReport train(const algebra::AlgebraStructure& structure, const TrainConfig& cfg,
                  const dynamics::Dataset& train_data, const dynamics::Dataset& test_data) {
    cfg.validate();
    structure.validate();
    train_data.validate();
    test_data.validate();
    if (train_data.size() == 0 || test_data.size() == 0)
        throw std::invalid_argument("train: datasets must be non-empty");
    if (train_data.n != structure.dim())
        throw std::invalid_argument("train: structure dimension does not match data");
    const int lindblad_count = cfg.lindblad_count > 0
                                   ? cfg.lindblad_count
                                   : generator::GkslModel::default_lindblad_count(structure);

    TrainReport report;
    report.structure = structure;
    report.epochs = cfg.epochs;
    for (int r = 0; r < cfg.restarts; ++r) {
        RestartOutcome outcome =
            run_restart(structure, cfg, train_data, test_data, lindblad_count, r);
        if (outcome.failed) {
            ++report.failed_restarts;
            continue;
        }
        if (outcome.best_test_value > report.best_test_value) {
            report.restart_index = r;
            report.best_epoch = outcome.best_epoch;
            report.best_test_value = outcome.best_test_value;
            report.final_test_value = outcome.final_test_value;
            report.final_train_value = outcome.final_train_value;
            report.convergence_delta = outcome.convergence_delta;
            report.history = std::move(outcome.history);
            report.best_params = std::move(outcome.best_params);
        }
    }
    if (report.restart_index < 0)
        throw std::runtime_error("train: all restarts failed");
    report.best_near_end = report.best_epoch >= static_cast<int>(0.95 * cfg.epochs);
    return report;
}

ScanResult structure_scan(const std::vector<algebra::AlgebraStructure>& candidates,
                          const TrainConfig& cfg, const dynamics::Dataset& train_data,
                          const dynamics::Dataset& test_data, int jobs) {
    cfg.validate();
    if (candidates.empty()) throw std::invalid_argument("structure_scan: no candidates");
    if (jobs < 1) jobs = 1;

    ScanResult result;
    result.rows.resize(candidates.size());
    std::atomic<std::size_t> next{0};
    const auto worker = [&]() {
        while (true) {
            const std::size_t row = next.fetch_add(1);
            if (row >= candidates.size()) return;
            ScanRow& slot = result.rows[row];
            slot.structure = candidates[row];
            TrainConfig row_cfg = cfg;
            row_cfg.seed = rng::derive(cfg.seed, 0x526f77ULL + row);
            try {
                slot.report = train(candidates[row], row_cfg, train_data, test_data);
            } catch (const std::exception& e) {
                slot.failed = true;
                slot.error = e.what();
            }
        }
    };
    if (jobs == 1 || candidates.size() == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        const int count = std::min<int>(jobs, static_cast<int>(candidates.size()));
        pool.reserve(count);
        for (int t = 0; t < count; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    std::sort(result.rows.begin(), result.rows.end(), [](const ScanRow& a, const ScanRow& b) {
        if (a.failed != b.failed) return !a.failed;
        if (a.failed) return a.structure < b.structure;
        if (a.report.best_test_value != b.report.best_test_value)
            return a.report.best_test_value > b.report.best_test_value;
        return a.structure < b.structure;
    });

    if (train_data.generator_metadata.contains("model")) {
        const generator::GkslModel reference =
            train_data.generator_metadata.at("model").get<generator::GkslModel>();
        result.reference_value =
            likelihood::batch_log_likelihood(likelihood::pack(reference), test_data);
    }
    return result;
}

ConsistencyReport hierarchy_consistency(const ScanResult& scan,
                                        const algebra::HierarchyDag& dag, double margin) {
    if (margin < 0.0) throw std::invalid_argument("hierarchy_consistency: negative margin");
    ConsistencyReport report;
    report.margin = margin;

    const int count = static_cast<int>(dag.nodes.size());
    std::vector<int> row_of(count, -1);
    for (std::size_t r = 0; r < scan.rows.size(); ++r) {
        if (scan.rows[r].failed) continue;
        const auto it = std::find(dag.nodes.begin(), dag.nodes.end(), scan.rows[r].structure);
        if (it == dag.nodes.end())
            throw std::invalid_argument("hierarchy_consistency: scan row not in hierarchy");
        row_of[it - dag.nodes.begin()] = static_cast<int>(r);
    }

    // Transitive closure over the reduced edges; reach[i][j] means node i's
    // algebra embeds into node j's, i.e. class i is the more expressive one.
    std::vector<std::vector<bool>> reach(count, std::vector<bool>(count, false));
    for (const auto& [sub, super] : dag.edges) reach[sub][super] = true;
    for (int k = 0; k < count; ++k)
        for (int i = 0; i < count; ++i)
            if (reach[i][k])
                for (int j = 0; j < count; ++j)
                    if (reach[k][j]) reach[i][j] = true;

    const auto value_of = [&](int node) {
        return scan.rows[row_of[node]].report.best_test_value;
    };
    for (int i = 0; i < count; ++i)
        for (int j = 0; j < count; ++j) {
            if (!reach[i][j] || row_of[i] < 0 || row_of[j] < 0) continue;
            const double gap = value_of(j) - value_of(i);
            if (gap > margin)
                report.violations.push_back(Violation{dag.nodes[i], dag.nodes[j],
                                                      value_of(i), value_of(j), gap});
        }

    // Frontier: among structures whose up-set (itself plus everything it
    // embeds into) is violation free, keep the ones maximal in the order and
    // break ties by test value.
    std::vector<int> clean;
    for (int x = 0; x < count; ++x) {
        if (row_of[x] < 0) continue;
        bool ok = true;
        std::vector<int> upset{x};
        for (int j = 0; j < count; ++j)
            if (reach[x][j] && row_of[j] >= 0) upset.push_back(j);
        for (int i : upset)
            for (int j : upset)
                if (i != j && reach[i][j] && value_of(j) - value_of(i) > margin) ok = false;
        if (ok) clean.push_back(x);
    }
    int best = -1;
    for (int x : clean) {
        bool maximal = true;
        for (int y : clean)
            if (y != x && reach[y][x]) maximal = false;
        if (!maximal) continue;
        if (best < 0 || value_of(x) > value_of(best)) best = x;
    }
    if (best >= 0) report.frontier = dag.nodes[best];
    return report;
}

}  // namespace dflearn::training
