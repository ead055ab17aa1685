#pragma once

#include <string>

#include "dflearn/dynamics.hpp"
#include "dflearn/jsonutil.hpp"
#include "dflearn/training.hpp"

namespace dflearn::io {

// Dataset files are JSON lines: a header object first, then one object per
// instrument, then one per chain.  Doubles round-trip bit exactly.
void save_dataset(const std::string& path, const dynamics::Dataset& data);
dynamics::Dataset load_dataset(const std::string& path);

nlohmann::json train_report_to_json(const training::TrainReport& report);
nlohmann::json scan_result_to_json(const training::ScanResult& scan);
nlohmann::json consistency_report_to_json(const training::ConsistencyReport& report);

// Fixed-width text table of a scan, best structures first.
std::string scan_table(const training::ScanResult& scan);
std::string scan_csv(const training::ScanResult& scan);

std::string history_csv(const training::TrainReport& report);

}  // namespace dflearn::io
