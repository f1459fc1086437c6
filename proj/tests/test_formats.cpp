#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>

#include "bbcast/cli.hpp"
#include "bbcast/serialize.hpp"
#include "bbcast/synth.hpp"
#include "helpers.hpp"

using namespace bbcast;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const char* name) {
    const fs::path dir = fs::temp_directory_path() / "bbcast_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run_cli(const std::string& args) {
#ifdef BBCAST_CLI_PATH
    const std::string cmd = std::string(BBCAST_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
#else
    (void)args;
    return -1;
#endif
}

}  // namespace

TEST_CASE("shipped hardware file loads, validates, and round-trips") {
    const std::string path = std::string(BBCAST_DATA_DIR) + "/xeon_e5_2695.json";
    const HardwareConfig hw = load_hardware(path);
    CHECK(validate_hardware(hw).empty());
    CHECK(hw.clock_hz == 2.1e9);
    CHECK(hw.cache_levels.size() == 3);
    CHECK(hw.cache_levels[2].associativity == 20);
    CHECK(hw.pipelines.at("iadd").latency_s == 1.04e-9);

    // write -> read -> write must reproduce the bytes
    const std::string once = hardware_to_json(hw).dump(2) + "\n";
    const std::string twice =
        hardware_to_json(hardware_from_json(json::parse(once))).dump(2) + "\n";
    CHECK(once == twice);
    CHECK(once == read_file(path));
}

TEST_CASE("trace text round-trips byte-identically") {
    const SynthResult r = generate({KernelKind::matmul, {{"n", 3}}, 8});
    std::ostringstream first;
    write_trace(first, r.trace);
    std::istringstream in(first.str());
    const MemoryTrace parsed = parse_trace(in);
    std::ostringstream second;
    write_trace(second, parsed);
    CHECK(first.str() == second.str());
    CHECK(parsed.records.size() == r.trace.records.size());
}

TEST_CASE("trace parser reports the offending line") {
    auto expect_line = [](const std::string& text, const char* needle) {
        std::istringstream in(text);
        try {
            parse_trace(in, "t");
            FAIL("expected a parse error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::parse);
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    expect_line("B 0\nM zz L\n", "t:2");
    expect_line("B 0\nQ 1\n", "t:2");
    expect_line("M 10 L\nB x\n", "t:2");
    expect_line("B 0\nM 10 W\n", "t:2");
    expect_line("B 0 extra\n", "t:1");
}

TEST_CASE("trace parser accepts comments, blanks and 0x prefixes") {
    std::istringstream in("# header\n\nB 0\nM 0x1000 L # inline note\nM ff S\n");
    const MemoryTrace t = parse_trace(in);
    REQUIRE(t.records.size() == 3);
    CHECK(t.records[1].value == 0x1000);
    CHECK(t.records[2].value == 0xff);
    CHECK(t.records[2].kind == RecordKind::store);
}

TEST_CASE("program files round-trip byte-identically, models included") {
    SynthResult r = generate({KernelKind::stencil2d, {{"n", 6}}, 8});
    // attach a fitted-looking count model and an edge model
    ScalingModel m;
    m.feature_terms = {Monomial{{"n"}}, Monomial{{"n", "n"}}};
    m.weights = {-3.0, 1.0};
    m.intercept = 2.0;
    m.l1_penalty = 1e-8;
    r.model.blocks[4].count = m;
    r.model.cfg_edges[1].prob.reset();
    r.model.cfg_edges[1].prob_model = m;

    ProgramFile pf{r.model, std::nullopt, 0};
    const std::string once = program_to_json(pf).dump(2);
    const std::string twice =
        program_to_json(program_from_json(json::parse(once))).dump(2);
    CHECK(once == twice);

    const ProgramFile back = program_from_json(json::parse(once));
    CHECK(back.model.blocks.size() == 9);
    const auto& restored = std::get<ScalingModel>(back.model.blocks[4].count);
    CHECK(restored.weights == m.weights);
    CHECK(restored.intercept == m.intercept);
}

TEST_CASE("profiles serialize infinite distances as a string") {
    const ReuseProfile p =
        ReuseProfile::from_bins({{0, 0.5}, {kInfiniteDistance, 0.5}}, 2);
    const json j = profile_to_json(p);
    CHECK(j["bins"][1][0] == "inf");
    const ReuseProfile back = profile_from_json(j);
    CHECK(back == p);
}

TEST_CASE("observation files round-trip byte-identically") {
    const auto dir = scratch_dir("obs");
    const SynthResult r = generate({KernelKind::saxpy, {{"n", 8}}, 8});
    save_trace((dir / "trace.txt").string(), r.trace);
    save_program((dir / "program.json").string(), ProgramFile{r.model, std::nullopt, 0});

    cli::ProfileOptions opt;
    opt.trace_path = (dir / "trace.txt").string();
    opt.program_path = (dir / "program.json").string();
    opt.out_path = (dir / "obs.json").string();
    opt.seed = 7;
    opt.input_point = {{"n", 8.0}};
    const Observation obs = cli::run_profile(opt);
    CHECK(obs.block_counts.at(2) == 8);

    const std::string once = read_file(opt.out_path);
    const Observation back = observation_from_json(json::parse(once));
    const std::string twice = observation_to_json(back).dump(2) + "\n";
    CHECK(once == twice);
    CHECK(back.whole_program == obs.whole_program);
}

TEST_CASE("reports round-trip byte-identically") {
    const SynthResult r = generate({KernelKind::saxpy, {{"n", 16}}, 8});
    ProfileSource profiles;
    profiles.per_block.emplace(2, block_reuse_profile(r.trace, 2, 1.0, 1, 64));
    const PredictionReport rep =
        predict(r.model, profiles, testing::e5_2695(), {{"n", 16.0}});
    const std::string once = report_to_json(rep, {{"n", 16.0}}).dump(2);
    const PredictionReport back = report_from_json(json::parse(once));
    const std::string twice = report_to_json(back, {{"n", 16.0}}).dump(2);
    CHECK(once == twice);
    CHECK(back.total_runtime_s == rep.total_runtime_s);
}

TEST_CASE("sweep CSV carries the documented header and one row per value") {
    std::vector<SweepRow> rows(3);
    rows[0] = {32768.0, std::nullopt, 1.5e-3, {0.9, 0.95, 0.99}, 2e-9};
    rows[1] = {65536.0, std::string("bad config"), 0, {}, 0};
    rows[2] = {131072.0, std::nullopt, 1.2e-3, {0.95, 0.97, 0.995}, 1.8e-9};
    const std::string csv = sweep_csv(rows);
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    CHECK(line == "axis_value,total_runtime_s,l1_hit,l2_hit,l3_hit,lambda_eff_s");
    std::size_t count = 0;
    while (std::getline(lines, line)) {
        ++count;
        CHECK(std::count(line.begin(), line.end(), ',') == 5);
    }
    CHECK(count == rows.size());
}

TEST_CASE("size suffixes scale by 1024") {
    CHECK(cli::parse_size_value("32K") == 32768.0);
    CHECK(cli::parse_size_value("4M") == 4.0 * 1024 * 1024);
    CHECK(cli::parse_size_value("10") == 10.0);
    CHECK(cli::parse_size_value("2.5") == 2.5);
    CHECK_THROWS_AS(cli::parse_size_value("12Q"), Error);
    const auto input = cli::parse_input_point("n=4096,k=10");
    CHECK(input.at("n") == 4096.0);
    CHECK(input.at("k") == 10.0);
}

TEST_CASE("cli pipeline: synth, profile, fit, predict, sweep") {
    const auto dir = scratch_dir("pipeline");
    const std::string hw = std::string(BBCAST_DATA_DIR) + "/xeon_e5_2695.json";

    REQUIRE(run_cli("synth matmul 4 --out " + (dir / "g4").string()) == 0);
    REQUIRE(run_cli("synth matmul 6 --out " + (dir / "g6").string()) == 0);
    fs::create_directories(dir / "obs");
    for (const char* n : {"4", "6"}) {
        const std::string g = (dir / (std::string("g") + n)).string();
        REQUIRE(run_cli("profile " + g + "/trace.txt " + g + "/program.json --seed 1 " +
                        "--input n=" + n + " --out " + (dir / "obs" / n).string() +
                        ".json") == 0);
    }
    REQUIRE(run_cli("fit " + (dir / "obs").string() + " --program " +
                    (dir / "g4" / "program.json").string() + " --penalty 1e-8 --out " +
                    (dir / "fitted.json").string()) == 0);
    REQUIRE(run_cli("predict " + (dir / "fitted.json").string() + " " + hw +
                    " --input n=8 --report " + (dir / "report.json").string()) == 0);
    REQUIRE(run_cli("sweep " + (dir / "fitted.json").string() + " " + hw +
                    " --axis pipeline.fmul.count --values 1,2,4 --input n=8 --csv " +
                    (dir / "sweep.csv").string()) == 0);

    const json report = parse_json_file((dir / "report.json").string());
    CHECK(report.contains("total_runtime_s"));
    CHECK(report.contains("lambda_eff"));
    CHECK(report["hit_rates"].size() == 3);

    const json fitted = parse_json_file((dir / "fitted.json").string());
    REQUIRE(fitted.contains("reuse_bins"));
    CHECK(fitted["reuse_bins"]["nbins"] == 40); // serialized default

    std::istringstream csv(read_file((dir / "sweep.csv").string()));
    std::string line;
    std::size_t lines = 0;
    while (std::getline(csv, line)) ++lines;
    CHECK(lines == 4); // header + 3 values

    // the L1 ladder parses with K suffixes and yields one row per value, the
    // sizes colliding with L2 becoming per-row errors
    REQUIRE(run_cli("sweep " + (dir / "fitted.json").string() + " " + hw +
                    " --axis l1.size --values 32K,64K,128K,256K --input n=8 --csv " +
                    (dir / "l1.csv").string()) == 0);
    std::istringstream l1csv(read_file((dir / "l1.csv").string()));
    lines = 0;
    while (std::getline(l1csv, line)) ++lines;
    CHECK(lines == 5); // header + 4 values
}

TEST_CASE("cli exit codes: 2 usage/parse, 3 invariant, 4 guardrail") {
    const auto dir = scratch_dir("codes");
    const std::string hw = std::string(BBCAST_DATA_DIR) + "/xeon_e5_2695.json";
    CHECK(run_cli("profile /nonexistent.txt /nonexistent.json --seed 1 --out " +
                  (dir / "x.json").string()) == 2);
    CHECK(run_cli("synth warp 4 --out " + (dir / "w").string()) == 2);
    CHECK(run_cli("synth matmul 4000 --out " + (dir / "big").string()) == 4);
    CHECK(run_cli("nonsense") == 2);

    REQUIRE(run_cli("synth saxpy 4 --out " + (dir / "s").string()) == 0);
    REQUIRE(run_cli("profile " + (dir / "s/trace.txt").string() + " " +
                    (dir / "s/program.json").string() + " --seed 1 --input n=4 --out " +
                    (dir / "obs.json").string()) == 0);
    // unknown sweep axis lists the valid ones and exits 2
    CHECK(run_cli("sweep " + (dir / "s/program.json").string() + " " + hw +
                  " --axis l9.size --values 1K --input n=4") == 2);
    CHECK(run_cli("sweep " + (dir / "s/program.json").string() + " " + hw +
                  " --axis bogus --values 1K --input n=4") == 2);

    // an invalid program file is an invariant violation: duplicate block ids
    json bad = program_to_json(
        ProgramFile{generate({KernelKind::saxpy, {{"n", 2}}, 8}).model, std::nullopt, 0});
    bad["blocks"][1]["id"] = 0;
    write_file((dir / "bad.json").string(), bad.dump(2));
    CHECK(run_cli("profile " + (dir / "s/trace.txt").string() + " " +
                  (dir / "bad.json").string() + " --seed 1 --out " +
                  (dir / "y.json").string()) == 3);
}

TEST_CASE("cli profile runs are byte-identical under one seed") {
    const auto dir = scratch_dir("determinism");
    REQUIRE(run_cli("synth stencil2d 8 --out " + (dir / "g").string()) == 0);
    const std::string base = "profile " + (dir / "g/trace.txt").string() + " " +
                             (dir / "g/program.json").string() +
                             " --sample-fraction 0.5 --seed 99 --input n=8 --out ";
    REQUIRE(run_cli(base + (dir / "a.json").string()) == 0);
    REQUIRE(run_cli(base + (dir / "b.json").string()) == 0);
    CHECK(read_file((dir / "a.json").string()) == read_file((dir / "b.json").string()));
}
