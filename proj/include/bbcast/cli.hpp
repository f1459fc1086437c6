#pragma once

// Subcommand implementations behind the command-line tool. They live here,
// not in the binary, so tests can drive the exact same code paths in-process.
//
// Exit code contract (stable): 0 success, 2 usage/parse error, 3 invariant
// violation, 4 resource guardrail.

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "bbcast/cache.hpp"
#include "bbcast/learn.hpp"
#include "bbcast/model.hpp"
#include "bbcast/predict.hpp"
#include "bbcast/serialize.hpp"
#include "bbcast/synth.hpp"
#include "bbcast/trace.hpp"

namespace bbcast::cli {

// "32K" -> 32768, "4M" -> 4194304; plain integers and decimals pass through.
inline double parse_size_value(const std::string& text) {
    if (text.empty()) throw Error(ErrorKind::usage, "empty value");
    double scale = 1.0;
    std::string body = text;
    switch (body.back()) {
    case 'k': case 'K': scale = 1024.0; body.pop_back(); break;
    case 'm': case 'M': scale = 1024.0 * 1024.0; body.pop_back(); break;
    case 'g': case 'G': scale = 1024.0 * 1024.0 * 1024.0; body.pop_back(); break;
    default: break;
    }
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(body, &used);
    } catch (const std::exception&) {
        throw Error(ErrorKind::usage, "bad numeric value \"" + text + "\"");
    }
    if (used != body.size())
        throw Error(ErrorKind::usage, "bad numeric value \"" + text + "\"");
    return v * scale;
}

inline std::vector<double> parse_value_list(const std::string& text) {
    std::vector<double> out;
    std::string item;
    std::istringstream is(text);
    while (std::getline(is, item, ','))
        if (!item.empty()) out.push_back(parse_size_value(item));
    if (out.empty()) throw Error(ErrorKind::usage, "no values given");
    return out;
}

// "n=4096,k=10" -> {n: 4096, k: 10}
inline std::map<std::string, double> parse_input_point(const std::string& text) {
    std::map<std::string, double> out;
    if (text.empty()) return out;
    std::string item;
    std::istringstream is(text);
    while (std::getline(is, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0)
            throw Error(ErrorKind::usage, "input must look like name=value: \"" + item + "\"");
        out[item.substr(0, eq)] = parse_size_value(item.substr(eq + 1));
    }
    return out;
}

// ---------------------------------------------------------------------------
// profile

struct ProfileOptions {
    std::string trace_path;
    std::string program_path;
    std::string out_path;
    double sample_fraction = 1.0;
    std::uint64_t seed = 0;
    std::size_t bins = 0;        // 0 = keep raw distances
    std::uint32_t line_bytes = 64; // 0 = raw addresses
    std::map<std::string, double> input_point;
};

inline Observation run_profile(const ProfileOptions& opt) {
    const MemoryTrace trace = load_trace(opt.trace_path);
    const ProgramFile program = load_program(opt.program_path);
    {
        auto violations = validate_program(program.model);
        for (const std::string& v : validate_trace(trace)) violations.push_back(v);
        if (!violations.empty())
            throw Error(ErrorKind::invariant, violations.front());
    }

    Observation obs;
    obs.input_point = opt.input_point;
    obs.line_bytes = opt.line_bytes;
    obs.sample_fraction = opt.sample_fraction;
    obs.seed = opt.seed;

    std::set<int> seen_blocks;
    std::optional<int> prev;
    for (const TraceRecord& r : trace.records) {
        if (r.kind != RecordKind::block_entry) continue;
        const int bb = static_cast<int>(r.value);
        ++obs.block_counts[bb];
        seen_blocks.insert(bb);
        if (prev) ++obs.edge_transitions[{*prev, bb}];
        prev = bb;
    }
    for (const BasicBlockModel& bb : program.model.blocks)
        if (!obs.block_counts.count(bb.id)) obs.block_counts[bb.id] = 0;

    obs.whole_program = whole_program_profile(trace, opt.line_bytes);
    for (int bb : seen_blocks) {
        ReuseProfile p =
            block_reuse_profile(trace, bb, opt.sample_fraction, opt.seed, opt.line_bytes);
        if (!p.empty()) obs.per_block.emplace(bb, std::move(p));
    }
    if (opt.bins > 0) {
        obs.whole_program = bin_profile(obs.whole_program, opt.bins);
        for (auto& [id, p] : obs.per_block) p = bin_profile(p, opt.bins);
    }
    if (!opt.out_path.empty()) save_observation(opt.out_path, obs);
    return obs;
}

// ---------------------------------------------------------------------------
// fit

struct FitOptions {
    std::string observations_dir;
    std::string program_path;
    std::string out_path;
    int degree = 3;
    double penalty = 1e-6;
    std::size_t bins = 40;
    bool reciprocal_probs = true;
};

inline std::vector<Observation> load_observations(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir))
        throw Error(ErrorKind::parse, dir + " is not a directory");
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());
    std::vector<Observation> out;
    for (const std::string& p : paths) out.push_back(load_observation(p));
    if (out.size() < 2)
        throw Error(ErrorKind::invariant,
                    dir + ": need at least 2 observation files to fit");
    return out;
}

inline ProgramFile run_fit(const FitOptions& opt) {
    const std::vector<Observation> observations = load_observations(opt.observations_dir);
    ProgramFile program = load_program(opt.program_path);
    const std::vector<std::string>& params = program.model.input_params;

    std::vector<std::vector<double>> points;
    for (const Observation& o : observations) {
        std::vector<double> point;
        for (const std::string& p : params) {
            auto it = o.input_point.find(p);
            if (it == o.input_point.end())
                throw Error(ErrorKind::invariant,
                            "observation is missing input parameter " + p);
            point.push_back(it->second);
        }
        points.push_back(std::move(point));
        if (o.line_bytes != observations.front().line_bytes)
            throw Error(ErrorKind::invariant,
                        "observations disagree on line_bytes granularity");
    }

    // block counts
    std::map<int, TrainingSet> count_obs;
    for (const BasicBlockModel& bb : program.model.blocks) {
        TrainingSet ts;
        ts.param_names = params;
        ts.points = points;
        for (const Observation& o : observations) {
            auto it = o.block_counts.find(bb.id);
            ts.targets.push_back(
                it == o.block_counts.end() ? 0.0 : static_cast<double>(it->second));
        }
        count_obs.emplace(bb.id, std::move(ts));
    }
    const auto count_models =
        fit_block_counts(program.model, count_obs, opt.degree, opt.penalty);
    for (BasicBlockModel& bb : program.model.blocks) {
        const ScalingModel& m = count_models.at(bb.id);
        if (m.is_constant())
            bb.count = static_cast<std::uint64_t>(std::max(0.0, std::floor(m.intercept + 0.5)));
        else
            bb.count = m;
    }

    // branch probabilities (informational; counts drive the runtime)
    std::map<std::pair<int, int>, TrainingSet> edge_obs;
    for (const CfgEdge& e : program.model.cfg_edges) {
        TrainingSet ts;
        ts.param_names = params;
        for (std::size_t i = 0; i < observations.size(); ++i) {
            const Observation& o = observations[i];
            std::uint64_t from_src = 0, on_edge = 0;
            for (const auto& [edge, c] : o.edge_transitions) {
                if (edge.first != e.src) continue;
                from_src += c;
                if (edge.second == e.dst) on_edge = c;
            }
            if (from_src == 0) continue; // block never branched at this size
            ts.points.push_back(points[i]);
            ts.targets.push_back(static_cast<double>(on_edge) /
                                 static_cast<double>(from_src));
        }
        if (ts.points.size() >= 2) edge_obs.emplace(std::make_pair(e.src, e.dst), std::move(ts));
    }
    const auto edge_models =
        fit_branch_probs(edge_obs, opt.degree, opt.penalty, opt.reciprocal_probs);
    for (CfgEdge& e : program.model.cfg_edges) {
        auto it = edge_models.find({e.src, e.dst});
        if (it == edge_models.end()) continue;
        if (it->second.is_constant()) {
            e.prob = std::clamp(it->second.intercept, 0.0, 1.0);
            e.prob_model.reset();
        } else {
            e.prob_model = it->second;
            e.prob.reset();
        }
    }

    // binned reuse-distance models over the whole-program profiles
    std::vector<std::pair<std::vector<double>, AlignedBins>> bin_obs;
    for (std::size_t i = 0; i < observations.size(); ++i)
        bin_obs.emplace_back(points[i],
                             quantile_bins(observations[i].whole_program, opt.bins));
    program.reuse_bins = fit_reuse_bins(params, bin_obs, opt.degree, opt.penalty);
    program.line_bytes = observations.front().line_bytes;

    if (!opt.out_path.empty()) save_program(opt.out_path, program);
    return program;
}

// ---------------------------------------------------------------------------
// predict

struct PredictOptions {
    std::string model_path;
    std::string hw_path;
    std::string profiles_path; // optional measured observation
    std::string report_path;
    std::map<std::string, double> input_point;
};

inline PredictionReport run_predict(const PredictOptions& opt) {
    const ProgramFile program = load_program(opt.model_path);
    const HardwareConfig hw = load_hardware(opt.hw_path);
    {
        auto violations = validate_hardware(hw);
        for (const std::string& v : validate_program(program.model))
            violations.push_back(v);
        if (!violations.empty()) throw Error(ErrorKind::invariant, violations.front());
    }
    ProfileSource profiles;
    if (!opt.profiles_path.empty())
        profiles.per_block = load_observation(opt.profiles_path).per_block;
    else if (program.reuse_bins)
        profiles.bins = program.reuse_bins;

    const PredictionReport report = predict(program.model, profiles, hw, opt.input_point);
    if (!opt.report_path.empty())
        write_file(opt.report_path, report_to_json(report, opt.input_point).dump(2) + "\n");
    return report;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepOptions {
    std::string model_path;
    std::string hw_path;
    std::string profiles_path;
    std::string csv_path;
    std::string axis;
    std::vector<double> values;
    std::map<std::string, double> input_point;
};

inline SweepAxis parse_axis(const std::string& text) {
    static const char* kAxisHelp =
        "valid axes: l<N>.size (cache size), pipeline.<class>.count, input.<param>";
    SweepAxis axis;
    if (text.rfind("pipeline.", 0) == 0) {
        std::string rest = text.substr(9);
        const auto dot = rest.rfind(".count");
        if (dot == std::string::npos || dot + 6 != rest.size() || dot == 0)
            throw Error(ErrorKind::usage,
                        "unknown axis \"" + text + "\"; " + kAxisHelp);
        axis.kind = SweepAxis::Kind::pipeline_count;
        axis.pipeline_class = rest.substr(0, dot);
        return axis;
    }
    if (text.rfind("input.", 0) == 0) {
        axis.kind = SweepAxis::Kind::input_param;
        axis.param = text.substr(6);
        if (axis.param.empty())
            throw Error(ErrorKind::usage, "unknown axis \"" + text + "\"; " + kAxisHelp);
        return axis;
    }
    if ((text.size() >= 7) && (text[0] == 'l' || text[0] == 'L') &&
        text.substr(text.size() - 5) == ".size") {
        const std::string idx = text.substr(1, text.size() - 6);
        try {
            std::size_t used = 0;
            const int level = std::stoi(idx, &used);
            if (used == idx.size() && level >= 1) {
                axis.kind = SweepAxis::Kind::cache_size;
                axis.cache_level = static_cast<std::size_t>(level - 1);
                return axis;
            }
        } catch (const std::exception&) {
        }
    }
    throw Error(ErrorKind::usage, "unknown axis \"" + text + "\"; " + kAxisHelp);
}

inline std::vector<SweepRow> run_sweep(const SweepOptions& opt) {
    const ProgramFile program = load_program(opt.model_path);
    const HardwareConfig hw = load_hardware(opt.hw_path);
    const SweepAxis axis = parse_axis(opt.axis);
    ProfileSource profiles;
    if (!opt.profiles_path.empty())
        profiles.per_block = load_observation(opt.profiles_path).per_block;
    else if (program.reuse_bins)
        profiles.bins = program.reuse_bins;

    const std::vector<SweepRow> rows =
        sweep(program.model, profiles, hw, axis, opt.values, opt.input_point);
    if (!opt.csv_path.empty()) write_file(opt.csv_path, sweep_csv(rows));
    return rows;
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
    std::string kind;
    std::vector<std::uint64_t> sizes;
    std::string out_dir;
};

struct SynthPaths {
    std::string program;
    std::string trace;
    std::string truth;
};

inline SynthPaths run_synth(const SynthOptions& opt) {
    KernelSpec spec;
    if (opt.kind == "matmul") {
        spec.kind = KernelKind::matmul;
        if (opt.sizes.size() == 1) {
            spec.params = {{"n", opt.sizes[0]}};
        } else if (opt.sizes.size() == 3) {
            spec.params = {{"n", opt.sizes[0]}, {"l", opt.sizes[1]}, {"m", opt.sizes[2]}};
        } else {
            throw Error(ErrorKind::usage, "matmul takes 1 size (n) or 3 sizes (n l m)");
        }
    } else if (opt.kind == "stencil2d" || opt.kind == "saxpy") {
        spec.kind = opt.kind == "saxpy" ? KernelKind::saxpy : KernelKind::stencil2d;
        if (opt.sizes.size() != 1)
            throw Error(ErrorKind::usage, opt.kind + " takes exactly 1 size (n)");
        spec.params = {{"n", opt.sizes[0]}};
    } else {
        throw Error(ErrorKind::usage,
                    "unknown kernel \"" + opt.kind + "\"; valid: matmul, stencil2d, saxpy");
    }

    const SynthResult result = generate(spec);

    namespace fs = std::filesystem;
    fs::create_directories(opt.out_dir);
    SynthPaths paths;
    paths.program = (fs::path(opt.out_dir) / "program.json").string();
    paths.trace = (fs::path(opt.out_dir) / "trace.txt").string();
    paths.truth = (fs::path(opt.out_dir) / "truth.json").string();

    save_program(paths.program, ProgramFile{result.model, std::nullopt, 0});
    save_trace(paths.trace, result.trace);

    json sizes = json::object();
    for (const auto& [k, v] : spec.params) sizes[k] = v;
    json counts = json::object();
    for (const auto& [id, model] : result.ground_truth_counts)
        counts[std::to_string(id)] = scaling_model_to_json(model);
    write_file(paths.truth, json{{"kernel", opt.kind},
                                 {"sizes", sizes},
                                 {"params", result.model.input_params},
                                 {"counts", counts}}
                                    .dump(2) +
                                "\n");
    return paths;
}

}  // namespace bbcast::cli
