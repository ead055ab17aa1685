#include "dflearn/io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace dflearn::io {

nlohmann::json matrix_to_json(const Matrix& m) {
    return nlohmann::json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", matrix_to_flat_json(m)}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
    return matrix_from_flat_json(j.at("data"), j.at("rows").get<int>(), j.at("cols").get<int>());
}

nlohmann::json matrix_to_flat_json(const Matrix& m) {
    nlohmann::json data = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            data.push_back(m(r, c).real());
            data.push_back(m(r, c).imag());
        }
    return data;
}

Matrix matrix_from_flat_json(const nlohmann::json& j, int rows, int cols) {
    if (!j.is_array() || j.size() != static_cast<std::size_t>(2 * rows * cols))
        throw std::invalid_argument("matrix_from_flat_json: wrong number of entries");
    Matrix m(rows, cols);
    std::size_t pos = 0;
    for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) {
            const double re = j[pos++].get<double>();
            const double im = j[pos++].get<double>();
            m(r, c) = Complex(re, im);
        }
    return m;
}

nlohmann::json real_vector_to_json(const RealVector& v) {
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

RealVector real_vector_from_json(const nlohmann::json& j) {
    RealVector v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
    return v;
}

void save_dataset(const std::string& path, const dynamics::Dataset& data) {
    data.validate();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
    nlohmann::json header{{"n", data.n},
                          {"tau", data.tau},
                          {"accessible_structure", data.accessible_structure},
                          {"generator_metadata", data.generator_metadata}};
    header["generator_metadata"]["accessible_unitary"] = matrix_to_flat_json(data.accessible_unitary);
    out << header.dump() << '\n';
    for (std::size_t i = 0; i < data.instruments.size(); ++i) {
        nlohmann::json line{{"id", i}, {"projectors", nlohmann::json::array()}};
        for (const Matrix& e : data.instruments[i].projectors)
            line["projectors"].push_back(matrix_to_flat_json(e));
        out << line.dump() << '\n';
    }
    for (const auto& chain : data.chains) {
        nlohmann::json line{{"instrument_ids", chain.instrument_ids},
                            {"outcomes", chain.outcomes}};
        if (chain.initial_state.maximally_mixed)
            line["initial_state"] = "maximally_mixed";
        else
            line["initial_state"] = nlohmann::json{{"sigma", matrix_to_flat_json(chain.initial_state.sigma)}};
        out << line.dump() << '\n';
    }
}

dynamics::Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
    dynamics::Dataset data;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const nlohmann::json j = nlohmann::json::parse(line);
        if (j.contains("n")) {
            data.n = j.at("n").get<int>();
            data.tau = j.at("tau").get<double>();
            j.at("accessible_structure").get_to(data.accessible_structure);
            data.generator_metadata = j.value("generator_metadata", nlohmann::json::object());
            if (data.generator_metadata.contains("accessible_unitary")) {
                data.accessible_unitary = matrix_from_flat_json(
                    data.generator_metadata.at("accessible_unitary"), data.n, data.n);
                data.generator_metadata.erase("accessible_unitary");
            } else {
                data.accessible_unitary = Matrix::Identity(data.n, data.n);
            }
            have_header = true;
        } else if (j.contains("projectors")) {
            if (!have_header) throw std::runtime_error("load_dataset: instrument before header");
            dynamics::Instrument inst;
            for (const auto& p : j.at("projectors"))
                inst.projectors.push_back(matrix_from_flat_json(p, data.n, data.n));
            inst.includes_complement = data.accessible_structure.n0 > 0;
            const std::size_t id = j.at("id").get<std::size_t>();
            if (id != data.instruments.size())
                throw std::runtime_error("load_dataset: instrument ids out of order");
            data.instruments.push_back(std::move(inst));
        } else if (j.contains("outcomes")) {
            if (!have_header) throw std::runtime_error("load_dataset: chain before header");
            dynamics::MeasurementChain chain;
            j.at("instrument_ids").get_to(chain.instrument_ids);
            j.at("outcomes").get_to(chain.outcomes);
            const auto& init = j.at("initial_state");
            if (init.is_string() && init.get<std::string>() == "maximally_mixed")
                chain.initial_state = dynamics::InitialState::mixed();
            else
                chain.initial_state = dynamics::InitialState::of(
                    matrix_from_flat_json(init.at("sigma"), data.n, data.n));
            data.chains.push_back(std::move(chain));
        } else {
            throw std::runtime_error("load_dataset: unrecognised line");
        }
    }
    if (!have_header) throw std::runtime_error("load_dataset: missing header");
    data.validate();
    return data;
}

nlohmann::json train_report_to_json(const training::TrainReport& report) {
    nlohmann::json history = nlohmann::json::array();
    for (const auto& h : report.history)
        history.push_back({{"epoch", h.epoch},
                           {"train_value", h.train_value},
                           {"test_value", h.test_value}});
    return nlohmann::json{{"structure", report.structure},
                          {"structure_label", report.structure.to_string()},
                          {"restart_index", report.restart_index},
                          {"epochs", report.epochs},
                          {"best_epoch", report.best_epoch},
                          {"best_test_value", report.best_test_value},
                          {"final_test_value", report.final_test_value},
                          {"final_train_value", report.final_train_value},
                          {"convergence_delta", report.convergence_delta},
                          {"best_near_end", report.best_near_end},
                          {"failed_restarts", report.failed_restarts},
                          {"history", history},
                          {"parameter_layout_version",
                           likelihood::ParameterLayout::kLayoutVersion},
                          {"lindblad_count", report.best_params.layout.lindblad_count},
                          {"best_parameters", real_vector_to_json(report.best_params.values)}};
}

nlohmann::json scan_result_to_json(const training::ScanResult& scan) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : scan.rows) {
        nlohmann::json r{{"structure", row.structure},
                         {"structure_label", row.structure.to_string()},
                         {"failed", row.failed}};
        if (row.failed)
            r["error"] = row.error;
        else
            r["report"] = train_report_to_json(row.report);
        rows.push_back(std::move(r));
    }
    nlohmann::json out{{"rows", rows}};
    if (scan.reference_value) out["reference_value"] = *scan.reference_value;
    return out;
}

nlohmann::json consistency_report_to_json(const training::ConsistencyReport& report) {
    nlohmann::json violations = nlohmann::json::array();
    for (const auto& v : report.violations)
        violations.push_back({{"expressive", v.expressive},
                              {"expressive_label", v.expressive.to_string()},
                              {"simple", v.simple},
                              {"simple_label", v.simple.to_string()},
                              {"expressive_value", v.expressive_value},
                              {"simple_value", v.simple_value},
                              {"gap", v.gap}});
    nlohmann::json out{{"margin", report.margin}, {"violations", violations}};
    if (report.frontier) {
        out["frontier"] = *report.frontier;
        out["frontier_label"] = report.frontier->to_string();
    }
    return out;
}

std::string scan_table(const training::ScanResult& scan) {
    std::ostringstream os;
    os << std::left << std::setw(28) << "structure" << std::right << std::setw(12) << "best F/N"
       << std::setw(12) << "final F/N" << std::setw(10) << "epoch" << std::setw(9) << "restart"
       << '\n';
    os << std::string(71, '-') << '\n';
    for (const auto& row : scan.rows) {
        os << std::left << std::setw(28) << row.structure.to_string();
        if (row.failed) {
            os << "  failed: " << row.error << '\n';
            continue;
        }
        os << std::right << std::fixed << std::setprecision(4) << std::setw(12)
           << row.report.best_test_value << std::setw(12) << row.report.final_test_value
           << std::setw(10) << row.report.best_epoch << std::setw(9)
           << row.report.restart_index << '\n';
    }
    if (scan.reference_value)
        os << std::string(71, '-') << '\n'
           << std::left << std::setw(28) << "generating model" << std::right << std::fixed
           << std::setprecision(4) << std::setw(12) << *scan.reference_value << '\n';
    return os.str();
}

std::string scan_csv(const training::ScanResult& scan) {
    std::ostringstream os;
    os << "structure,best_test_value,final_test_value,best_epoch,restart_index,failed\n";
    os << std::setprecision(17);
    for (const auto& row : scan.rows) {
        os << '"' << row.structure.to_string() << '"' << ',';
        if (row.failed) {
            os << ",,,," << 1 << '\n';
        } else {
            os << row.report.best_test_value << ',' << row.report.final_test_value << ','
               << row.report.best_epoch << ',' << row.report.restart_index << ",0\n";
        }
    }
    return os.str();
}

std::string history_csv(const training::TrainReport& report) {
    std::ostringstream os;
    os << "epoch,train_value,test_value\n";
    os << std::setprecision(17);
    for (const auto& h : report.history)
        os << h.epoch << ',' << h.train_value << ',' << h.test_value << '\n';
    return os.str();
}

}  // namespace dflearn::io
