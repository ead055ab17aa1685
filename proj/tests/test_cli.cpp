// End-to-end tests that shell out to the dflearn binary (path passed as argv[1]).
#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dflearn/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

static std::string g_cli;

int main(int argc, char** argv) {
    std::vector<char*> args;
    args.push_back(argv[0]);
    for (int i = 1; i < argc; ++i) {
        if (g_cli.empty() && argv[i][0] != '-') {
            g_cli = argv[i];
            continue;
        }
        args.push_back(argv[i]);
    }
    if (g_cli.empty()) {
        std::fprintf(stderr, "usage: cli_tests <path-to-dflearn> [doctest options]\n");
        return 1;
    }
    doctest::Context ctx(static_cast<int>(args.size()), args.data());
    return ctx.run();
}

namespace {

struct RunResult {
    int code = -1;
    std::string out;
};

fs::path scratch_root() {
    return fs::temp_directory_path() / "dflearn_cli_tests";
}

fs::path fresh_dir(const std::string& name) {
    fs::path d = scratch_root() / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), "cannot open " << p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

// Runs the CLI through /bin/sh; env_prefix like "DFLEARN_SEED=7 " may be prepended.
RunResult run_cli(const std::string& args, const std::string& env_prefix = "") {
    static int counter = 0;
    fs::create_directories(scratch_root());
    fs::path cap = scratch_root() / ("stdout_" + std::to_string(counter++) + ".txt");
    std::string cmd = env_prefix + "\"" + g_cli + "\" " + args + " > \"" + cap.string() + "\" 2>&1";
    int rc = std::system(cmd.c_str());
    RunResult r;
    r.code = (rc >= 0) ? ((rc >> 8) & 0xff) : -1;
    r.out = read_file(cap);
    return r;
}

json parse_json(const std::string& text) {
    json j;
    REQUIRE_NOTHROW(j = json::parse(text));
    return j;
}

json error_json(const RunResult& r) {
    json j = parse_json(r.out);
    REQUIRE(j.contains("error"));
    REQUIRE(j["error"].contains("type"));
    REQUIRE(j["error"].contains("message"));
    return j["error"];
}

// Minimal CSV reader aware of double-quoted fields (labels contain commas).
std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> fields;
        std::string f;
        bool quoted = false;
        for (char c : line) {
            if (quoted) {
                if (c == '"')
                    quoted = false;
                else
                    f.push_back(c);
            } else if (c == '"') {
                quoted = true;
            } else if (c == ',') {
                fields.push_back(f);
                f.clear();
            } else {
                f.push_back(c);
            }
        }
        fields.push_back(f);
        rows.push_back(fields);
    }
    return rows;
}

}  // namespace

TEST_CASE("enumerate: exit code, manifest shape, counts") {
    fs::path d = fresh_dir("enum");
    RunResult r = run_cli("enumerate --out \"" + d.string() + "\"");
    CHECK(r.code == 0);

    json manifest = parse_json(r.out);
    CHECK(manifest.at("command") == "enumerate");
    CHECK(manifest.at("seed") == 1);
    CHECK(manifest.at("jobs") == 1);
    CHECK(manifest.at("full") == false);
    const std::string hash = manifest.at("config_hash").get<std::string>();
    CHECK(hash.size() == 16);
    for (char c : hash) CHECK(((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f')));
    bool lists_structures = false;
    for (const auto& o : manifest.at("outputs"))
        if (o.get<std::string>() == "structures.json") lists_structures = true;
    CHECK(lists_structures);
    CHECK(fs::exists(d / "manifest.json"));

    json s = parse_json(read_file(d / "structures.json"));
    CHECK(s.at("n") == 4);
    CHECK(s.at("ordered_count") == 18);
    CHECK(s.at("canonical_count") == 11);
    CHECK(s.at("labels").size() == 11);
}

TEST_CASE("enumerate: byte-identical reruns, --jobs does not change outputs") {
    fs::path a = fresh_dir("enum_a");
    fs::path b = fresh_dir("enum_b");
    RunResult ra = run_cli("enumerate --out \"" + a.string() + "\"");
    RunResult rb = run_cli("enumerate --jobs 3 --out \"" + b.string() + "\"");
    CHECK(ra.code == 0);
    CHECK(rb.code == 0);
    CHECK(read_file(a / "structures.json") == read_file(b / "structures.json"));
    json ma = parse_json(ra.out);
    json mb = parse_json(rb.out);
    CHECK(ma.at("config_hash") == mb.at("config_hash"));  // jobs is schedule, not config
    CHECK(mb.at("jobs") == 3);
}

TEST_CASE("hierarchy: embedding witness and dot output") {
    fs::path d = fresh_dir("hier");
    RunResult r = run_cli("hierarchy --out \"" + d.string() + "\"");
    CHECK(r.code == 0);

    json h = parse_json(read_file(d / "hierarchy.json"));
    const auto& labels = h.at("labels");
    CHECK(labels.size() == 11);
    int i22 = -1, i2121 = -1;
    for (int i = 0; i < static_cast<int>(labels.size()); ++i) {
        if (labels[i] == "({2,2})") i22 = i;
        if (labels[i] == "({2,1}^2)") i2121 = i;
    }
    REQUIRE(i22 >= 0);
    REQUIRE(i2121 >= 0);
    bool witness = false;
    for (const auto& e : h.at("edges"))
        if (e.at("sub") == i22 && e.at("super") == i2121) witness = true;
    CHECK(witness);  // ({2,2}) embeds into ({2,1},{2,1})
    CHECK(h.at("topological_order").size() == labels.size());

    std::string dot = read_file(d / "hierarchy.dot");
    CHECK(dot.find("digraph") != std::string::npos);
    std::string arrow = "s" + std::to_string(i2121) + " -> s" + std::to_string(i22) + ";";
    CHECK(dot.find(arrow) != std::string::npos);
}

TEST_CASE("gen-data: dataset loads, determinism, scale") {
    fs::path a = fresh_dir("gen_a");
    fs::path b = fresh_dir("gen_b");
    fs::path c = fresh_dir("gen_c");
    RunResult ra = run_cli("gen-data --seed 7 --scale 0.1 --out \"" + a.string() + "\"");
    RunResult rb = run_cli("gen-data --seed 7 --scale 0.1 --out \"" + b.string() + "\"");
    RunResult rc = run_cli("gen-data --seed 8 --scale 0.1 --out \"" + c.string() + "\"");
    CHECK(ra.code == 0);
    CHECK(rb.code == 0);
    CHECK(rc.code == 0);

    json ma = parse_json(ra.out);
    CHECK(ma.at("config").at("chains") == 5);  // 50 desk chains * 0.1

    std::string bytes_a = read_file(a / "data.jsonl");
    CHECK(bytes_a == read_file(b / "data.jsonl"));
    CHECK(bytes_a != read_file(c / "data.jsonl"));

    auto data = dflearn::io::load_dataset((a / "data.jsonl").string());
    CHECK(data.n == 4);
    CHECK(data.size() == 5);
    CHECK(data.tau == doctest::Approx(0.15));
    for (const auto& chain : data.chains) CHECK(chain.length() == 100);
    CHECK_NOTHROW(data.validate());
}

TEST_CASE("environment overrides for seed and output dir") {
    fs::path d = fresh_dir("envtest");
    RunResult r = run_cli("gen-data --scale 0.04",
                          "DFLEARN_SEED=123 DFLEARN_OUT=\"" + d.string() + "\" ");
    CHECK(r.code == 0);
    json m = parse_json(r.out);
    CHECK(m.at("seed") == 123);
    CHECK(fs::exists(d / "data.jsonl"));

    // Explicit flag beats the environment.
    fs::path e = fresh_dir("envtest2");
    RunResult r2 = run_cli("gen-data --scale 0.04 --seed 5 --out \"" + e.string() + "\"",
                           "DFLEARN_SEED=123 ");
    CHECK(r2.code == 0);
    CHECK(parse_json(r2.out).at("seed") == 5);
}

TEST_CASE("config file drives the run and lands in the manifest") {
    fs::path d = fresh_dir("cfg");
    fs::path cfg = d / "cfg.json";
    write_file(cfg, "{\"chains\": 3, \"length\": 20}\n");
    RunResult r = run_cli("gen-data --config \"" + cfg.string() + "\" --out \"" + d.string() + "\"");
    CHECK(r.code == 0);
    json m = parse_json(r.out);
    CHECK(m.at("config").at("chains") == 3);
    CHECK(m.at("config").at("length") == 20);
    auto data = dflearn::io::load_dataset((d / "data.jsonl").string());
    CHECK(data.size() == 3);
    CHECK(data.chains.front().length() == 20);
}

TEST_CASE("error paths exit 2 with machine-readable config errors") {
    fs::path d = fresh_dir("errs");

    SUBCASE("unknown command") {
        RunResult r = run_cli("frobnicate --out \"" + d.string() + "\"");
        CHECK(r.code == 2);
        CHECK(error_json(r).at("type") == "config");
    }
    SUBCASE("zero chains rejected") {
        fs::path cfg = d / "bad.json";
        write_file(cfg, "{\"chains\": 0}\n");
        RunResult r = run_cli("gen-data --config \"" + cfg.string() + "\" --out \"" + d.string() + "\"");
        CHECK(r.code == 2);
        CHECK(error_json(r).at("type") == "config");
    }
    SUBCASE("wrong option type rejected") {
        fs::path cfg = d / "bad_type.json";
        write_file(cfg, "{\"chains\": \"many\"}\n");
        RunResult r = run_cli("gen-data --config \"" + cfg.string() + "\" --out \"" + d.string() + "\"");
        CHECK(r.code == 2);
        CHECK(error_json(r).at("type") == "config");
    }
    SUBCASE("missing config file") {
        RunResult r = run_cli("gen-data --config /nonexistent/cfg.json --out \"" + d.string() + "\"");
        CHECK(r.code == 2);
        CHECK(error_json(r).at("type") == "config");
    }
    SUBCASE("config file with invalid JSON") {
        fs::path cfg = d / "broken.json";
        write_file(cfg, "{not json\n");
        RunResult r = run_cli("gen-data --config \"" + cfg.string() + "\" --out \"" + d.string() + "\"");
        CHECK(r.code == 2);
        CHECK(error_json(r).at("type") == "config");
    }
    SUBCASE("report without input") {
        RunResult r = run_cli("report --out \"" + d.string() + "\"");
        CHECK(r.code == 2);
        CHECK(error_json(r).at("type") == "config");
    }
    SUBCASE("negative scale rejected") {
        RunResult r = run_cli("gen-data --scale -1 --out \"" + d.string() + "\"");
        CHECK(r.code == 2);
        CHECK(error_json(r).at("type") == "config");
    }
}

TEST_CASE("report: sorts rows, gap equals consecutive value difference") {
    fs::path d = fresh_dir("report");
    json fixture = {
        {"reference_value", -1.25},
        {"rows", json::array()},
    };
    auto make_row = [](const std::string& label, double value, int best_epoch, bool near_end,
                       double delta) {
        return json{{"structure_label", label},
                    {"failed", false},
                    {"report",
                     {{"best_test_value", value},
                      {"best_epoch", best_epoch},
                      {"best_near_end", near_end},
                      {"convergence_delta", delta}}}};
    };
    // Deliberately unsorted input; one failed row mixed in.
    fixture["rows"].push_back(make_row("({4,1})", -1.78251234567, 40, false, 0.2));
    fixture["rows"].push_back(make_row("({1,4})", -1.30149876543, 120, true, 1e-4));
    fixture["rows"].push_back(json{{"structure_label", "({2,2})"},
                                   {"failed", true},
                                   {"error", "optimizer diverged"}});
    fixture["rows"].push_back(make_row("({1,2}^2)", -1.35520000111, 90, true, 3e-4));

    fs::path input = d / "scan.json";
    write_file(input, fixture.dump(2));
    fs::path cfg = d / "cfg.json";
    write_file(cfg, json{{"input", input.string()}, {"format", "both"}}.dump());

    RunResult r = run_cli("report --config \"" + cfg.string() + "\" --out \"" + d.string() + "\"");
    CHECK(r.code == 0);
    CHECK(fs::exists(d / "report.txt"));

    auto csv = parse_csv(read_file(d / "report.csv"));
    REQUIRE(csv.size() == 5);  // header + 4 rows
    CHECK(csv[0][0] == "structure");
    CHECK(csv[1][0] == "({1,4})");
    CHECK(csv[2][0] == "({1,2}^2)");
    CHECK(csv[3][0] == "({4,1})");
    CHECK(csv[4][0] == "({2,2})");  // failed row last
    CHECK(csv[4][1].empty());

    CHECK(csv[1][2].empty());  // best row has no gap
    for (std::size_t i = 2; i <= 3; ++i) {
        double prev = std::stod(csv[i - 1][1]);
        double value = std::stod(csv[i][1]);
        double gap = std::stod(csv[i][2]);
        CHECK(std::abs(gap - (prev - value)) < 1e-9);
    }

    std::string table = read_file(d / "report.txt");
    CHECK(table.find("T_best") != std::string::npos);
    CHECK(table.find("generating model F/N") != std::string::npos);

    SUBCASE("input without rows or cells is a config error") {
        fs::path bad = d / "bad.json";
        write_file(bad, "{\"neither\": true}\n");
        fs::path cfg2 = d / "cfg2.json";
        write_file(cfg2, json{{"input", bad.string()}}.dump());
        RunResult r2 = run_cli("report --config \"" + cfg2.string() + "\" --out \"" + d.string() + "\"");
        CHECK(r2.code == 2);
    }
}

TEST_CASE("report: tradeoff-style input renders cells") {
    fs::path d = fresh_dir("report_cells");
    json fixture = {
        {"product", 600},
        {"rows_ignored", false},
        {"cells", json::array()},
    };
    fixture.erase("rows_ignored");
    fixture["cells"].push_back(json{
        {"length", 10},
        {"chains", 60},
        {"report", {{"best_test_value", -1.41}, {"best_epoch", 55}, {"best_near_end", false}, {"convergence_delta", 0.1}}}});
    fixture["cells"].push_back(json{
        {"length", 30},
        {"chains", 20},
        {"report", {{"best_test_value", -1.40}, {"best_epoch", 70}, {"best_near_end", true}, {"convergence_delta", 2e-4}}}});
    fs::path input = d / "tradeoff.json";
    write_file(input, fixture.dump());
    fs::path cfg = d / "cfg.json";
    write_file(cfg, json{{"input", input.string()}, {"format", "csv"}}.dump());

    RunResult r = run_cli("report --config \"" + cfg.string() + "\" --out \"" + d.string() + "\"");
    CHECK(r.code == 0);
    auto csv = parse_csv(read_file(d / "report.csv"));
    REQUIRE(csv.size() == 3);
    CHECK(csv[0][0] == "length");
    CHECK(csv[1][0] == "10");
    CHECK(csv[2][2].substr(0, 5) == "-1.40");
    CHECK(fs::exists(d / "report.txt") == false);  // csv-only format
}

TEST_CASE("verify: clean bill of health and deterministic outputs") {
    fs::path d = fresh_dir("verify");
    fs::path cfg = d / "cfg.json";
    write_file(cfg, "{\"models\": 2}\n");
    RunResult r = run_cli("verify --config \"" + cfg.string() + "\" --seed 3 --out \"" + d.string() + "\"");
    CHECK(r.code == 0);

    json v = parse_json(read_file(d / "verify.json"));
    CHECK(v.at("pass") == true);
    CHECK(v.at("structures").size() == 11);
    for (const auto& row : v.at("structures")) {
        CHECK(row.at("pass") == true);
        CHECK(row.at("trace_deviation").get<double>() < 1e-10);
    }
    for (const auto& row : v.at("waveguide")) CHECK(row.at("pass") == true);

    fs::path d2 = fresh_dir("verify2");
    RunResult r2 = run_cli("verify --config \"" + cfg.string() + "\" --seed 3 --jobs 2 --out \"" +
                           d2.string() + "\"");
    CHECK(r2.code == 0);
    CHECK(read_file(d / "verify.json") == read_file(d2 / "verify.json"));
}
