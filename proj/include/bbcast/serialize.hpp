#pragma once

// On-disk formats. These are the stable contract shared by the CLI, the
// workload generator and any external instrumenter:
//
//   trace        text, one record per line: "B <bb_id>" marks a dynamic block
//                entry, "M <hex-addr> <L|S>" a load/store; '#' starts a
//                comment
//   hardware     JSON mirroring the hardware parameter table
//   program      JSON: params[], blocks[] {id, graphlet, count}, cfg_edges[],
//                optional reuse_bins; a fitted file is self-contained
//   observation  JSON written by `profile`: input point, block counts, edge
//                transitions, whole-program and per-block reuse profiles
//   report       JSON: per_block[], hit_rates[], lambda_eff, beta_eff,
//                total_runtime_s
//   sweep        CSV: axis_value,total_runtime_s,l1_hit,l2_hit,l3_hit,lambda_eff_s

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bbcast/learn.hpp"
#include "bbcast/model.hpp"
#include "bbcast/predict.hpp"

namespace bbcast {

using nlohmann::json;

// ---------------------------------------------------------------------------
// helpers

namespace detail {

inline const json& require(const json& j, const std::string& key,
                           const std::string& what) {
    if (!j.contains(key))
        throw Error(ErrorKind::parse, what + ": missing field \"" + key + "\"");
    return j.at(key);
}

}  // namespace detail

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::parse, "cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::parse, "cannot write " + path);
    out << content;
}

inline json parse_json_file(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::parse, path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// trace text format

inline void write_trace(std::ostream& out, const MemoryTrace& trace) {
    for (const TraceRecord& r : trace.records) {
        if (r.kind == RecordKind::block_entry) {
            out << "B " << r.value << "\n";
        } else {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%llx",
                          static_cast<unsigned long long>(r.value));
            out << "M " << buf << (r.kind == RecordKind::load ? " L" : " S") << "\n";
        }
    }
}

inline MemoryTrace parse_trace(std::istream& in, const std::string& origin = "trace") {
    MemoryTrace trace;
    std::string line;
    std::size_t lineno = 0;
    auto bad = [&](const std::string& what) {
        return Error(ErrorKind::parse,
                     origin + ":" + std::to_string(lineno) + ": " + what);
    };
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue; // blank
        if (tag == "B") {
            long long bb = 0;
            if (!(ls >> bb) || bb < 0) throw bad("expected nonnegative block id after B");
            trace.records.push_back(TraceRecord::block(static_cast<int>(bb)));
        } else if (tag == "M") {
            std::string addr_s, kind_s;
            if (!(ls >> addr_s >> kind_s)) throw bad("expected \"M <hex-addr> <L|S>\"");
            if (addr_s.rfind("0x", 0) == 0 || addr_s.rfind("0X", 0) == 0)
                addr_s.erase(0, 2);
            std::uint64_t addr = 0;
            std::size_t used = 0;
            try {
                addr = std::stoull(addr_s, &used, 16);
            } catch (const std::exception&) {
                throw bad("bad hex address \"" + addr_s + "\"");
            }
            if (used != addr_s.size()) throw bad("bad hex address \"" + addr_s + "\"");
            if (kind_s != "L" && kind_s != "S") throw bad("access kind must be L or S");
            trace.records.push_back(TraceRecord::access(addr, kind_s == "S"));
        } else {
            throw bad("unknown record tag \"" + tag + "\"");
        }
        std::string extra;
        if (ls >> extra) throw bad("trailing junk \"" + extra + "\"");
    }
    return trace;
}

inline MemoryTrace load_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::parse, "cannot open " + path);
    return parse_trace(in, path);
}

inline void save_trace(const std::string& path, const MemoryTrace& trace) {
    std::ostringstream os;
    write_trace(os, trace);
    write_file(path, os.str());
}

// ---------------------------------------------------------------------------
// hardware JSON

inline json hardware_to_json(const HardwareConfig& hw) {
    json pipes = json::object();
    for (const auto& [name, spec] : hw.pipelines)
        pipes[name] = {{"count", spec.count},
                       {"latency_s", spec.latency_s},
                       {"throughput_s", spec.throughput_s}};
    json levels = json::array();
    for (const CacheLevel& lvl : hw.cache_levels)
        levels.push_back({{"size_bytes", lvl.size_bytes},
                          {"line_bytes", lvl.line_bytes},
                          {"associativity", lvl.associativity},
                          {"latency_s", lvl.latency_s},
                          {"bandwidth_s", lvl.bandwidth_s}});
    return {{"name", hw.name},
            {"clock_hz", hw.clock_hz},
            {"pipelines", pipes},
            {"cache_levels", levels},
            {"ram",
             {{"latency_s", hw.ram.latency_s},
              {"bandwidth_s", hw.ram.bandwidth_s},
              {"size_bytes", hw.ram.size_bytes}}}};
}

inline HardwareConfig hardware_from_json(const json& j) {
    HardwareConfig hw;
    hw.name = detail::require(j, "name", "hardware").get<std::string>();
    hw.clock_hz = detail::require(j, "clock_hz", "hardware").get<double>();
    for (const auto& [name, spec] : detail::require(j, "pipelines", "hardware").items()) {
        PipelineSpec p;
        p.count = detail::require(spec, "count", "pipeline " + name).get<int>();
        p.latency_s = detail::require(spec, "latency_s", "pipeline " + name).get<double>();
        p.throughput_s =
            detail::require(spec, "throughput_s", "pipeline " + name).get<double>();
        hw.pipelines[name] = p;
    }
    for (const json& lvl : detail::require(j, "cache_levels", "hardware")) {
        CacheLevel c;
        c.size_bytes = detail::require(lvl, "size_bytes", "cache level").get<std::uint64_t>();
        c.line_bytes = detail::require(lvl, "line_bytes", "cache level").get<std::uint32_t>();
        c.associativity =
            detail::require(lvl, "associativity", "cache level").get<std::uint32_t>();
        c.latency_s = detail::require(lvl, "latency_s", "cache level").get<double>();
        c.bandwidth_s = detail::require(lvl, "bandwidth_s", "cache level").get<double>();
        hw.cache_levels.push_back(c);
    }
    const json ram = detail::require(j, "ram", "hardware");
    hw.ram.latency_s = detail::require(ram, "latency_s", "ram").get<double>();
    hw.ram.bandwidth_s = detail::require(ram, "bandwidth_s", "ram").get<double>();
    hw.ram.size_bytes = ram.value("size_bytes", std::uint64_t{0});
    return hw;
}

inline HardwareConfig load_hardware(const std::string& path) {
    return hardware_from_json(parse_json_file(path));
}

inline void save_hardware(const std::string& path, const HardwareConfig& hw) {
    write_file(path, hardware_to_json(hw).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// scaling models / program JSON

inline json scaling_model_to_json(const ScalingModel& m) {
    json terms = json::array();
    for (const Monomial& t : m.feature_terms) terms.push_back(t.factors);
    return {{"terms", terms},
            {"weights", m.weights},
            {"intercept", m.intercept},
            {"l1_penalty", m.l1_penalty}};
}

inline ScalingModel scaling_model_from_json(const json& j) {
    ScalingModel m;
    for (const json& t : detail::require(j, "terms", "model")) {
        Monomial mono;
        for (const json& f : t) mono.factors.push_back(f.get<std::string>());
        m.feature_terms.push_back(std::move(mono));
    }
    m.weights = detail::require(j, "weights", "model").get<std::vector<double>>();
    m.intercept = detail::require(j, "intercept", "model").get<double>();
    m.l1_penalty = j.value("l1_penalty", 0.0);
    if (m.weights.size() != m.feature_terms.size())
        throw Error(ErrorKind::parse, "model: weights and terms differ in length");
    return m;
}

inline json profile_to_json(const ReuseProfile& p) {
    json bins = json::array();
    for (const ReuseProfile::Bin& b : p.bins()) {
        if (b.distance == kInfiniteDistance)
            bins.push_back({json("inf"), b.probability});
        else
            bins.push_back({json(b.distance), b.probability});
    }
    return {{"total_accesses", p.total_accesses()}, {"bins", bins}};
}

inline ReuseProfile profile_from_json(const json& j) {
    std::vector<ReuseProfile::Bin> bins;
    for (const json& b : detail::require(j, "bins", "profile")) {
        if (!b.is_array() || b.size() != 2)
            throw Error(ErrorKind::parse, "profile: bin must be [distance, probability]");
        ReuseProfile::Bin bin;
        bin.distance = b[0].is_string() ? kInfiniteDistance : b[0].get<std::uint64_t>();
        bin.probability = b[1].get<double>();
        bins.push_back(bin);
    }
    const auto total =
        detail::require(j, "total_accesses", "profile").get<std::uint64_t>();
    try {
        return ReuseProfile::from_bins(std::move(bins), total);
    } catch (const Error& e) {
        throw Error(ErrorKind::invariant, std::string("profile: ") + e.what());
    }
}

inline json bin_models_to_json(const BinModelSet& b) {
    json models = json::array();
    for (const ScalingModel& m : b.distance_models) models.push_back(scaling_model_to_json(m));
    json snaps = json::array();
    for (const BinSnapshot& s : b.snapshots)
        snaps.push_back({{"point", s.point},
                         {"probability", s.probability},
                         {"infinite_probability", s.infinite_probability},
                         {"total_accesses", s.total_accesses}});
    return {{"nbins", b.nbins},
            {"params", b.param_names},
            {"distance_models", models},
            {"snapshots", snaps}};
}

inline BinModelSet bin_models_from_json(const json& j) {
    BinModelSet b;
    b.nbins = detail::require(j, "nbins", "reuse_bins").get<std::size_t>();
    b.param_names =
        detail::require(j, "params", "reuse_bins").get<std::vector<std::string>>();
    for (const json& m : detail::require(j, "distance_models", "reuse_bins"))
        b.distance_models.push_back(scaling_model_from_json(m));
    for (const json& s : detail::require(j, "snapshots", "reuse_bins")) {
        BinSnapshot snap;
        snap.point = detail::require(s, "point", "snapshot").get<std::vector<double>>();
        snap.probability =
            detail::require(s, "probability", "snapshot").get<std::vector<double>>();
        snap.infinite_probability =
            detail::require(s, "infinite_probability", "snapshot").get<double>();
        snap.total_accesses = s.value("total_accesses", std::uint64_t{0});
        b.snapshots.push_back(std::move(snap));
    }
    return b;
}

struct ProgramFile {
    ProgramModel model;
    std::optional<BinModelSet> reuse_bins;
    std::uint32_t line_bytes = 0; // granularity the embedded bins were built at
};

inline json program_to_json(const ProgramFile& pf) {
    json blocks = json::array();
    for (const BasicBlockModel& bb : pf.model.blocks) {
        json vertices = json::array();
        for (const auto& [id, cls] : bb.graphlet.vertices) vertices.push_back({id, cls});
        json edges = json::array();
        for (const auto& [u, v] : bb.graphlet.edges) edges.push_back({u, v});
        json count;
        if (const auto* literal = std::get_if<std::uint64_t>(&bb.count))
            count = {{"constant", *literal}};
        else
            count = {{"model", scaling_model_to_json(std::get<ScalingModel>(bb.count))}};
        blocks.push_back({{"id", bb.id},
                          {"graphlet", {{"vertices", vertices}, {"edges", edges}}},
                          {"count", count}});
    }
    json edges = json::array();
    for (const CfgEdge& e : pf.model.cfg_edges) {
        json je = {{"src", e.src}, {"dst", e.dst}};
        if (e.prob_model)
            je["model"] = scaling_model_to_json(*e.prob_model);
        else if (e.prob)
            je["prob"] = *e.prob;
        edges.push_back(je);
    }
    json out = {{"params", pf.model.input_params},
                {"blocks", blocks},
                {"cfg_edges", edges}};
    if (pf.reuse_bins) {
        out["reuse_bins"] = bin_models_to_json(*pf.reuse_bins);
        out["line_bytes"] = pf.line_bytes;
    }
    return out;
}

inline ProgramFile program_from_json(const json& j) {
    ProgramFile pf;
    pf.model.input_params =
        detail::require(j, "params", "program").get<std::vector<std::string>>();
    for (const json& jb : detail::require(j, "blocks", "program")) {
        BasicBlockModel bb;
        bb.id = detail::require(jb, "id", "block").get<int>();
        const json g = detail::require(jb, "graphlet", "block");
        for (const json& v : detail::require(g, "vertices", "graphlet")) {
            if (!v.is_array() || v.size() != 2)
                throw Error(ErrorKind::parse, "graphlet vertex must be [id, class]");
            bb.graphlet.vertices.emplace_back(v[0].get<int>(), v[1].get<std::string>());
        }
        for (const json& e : detail::require(g, "edges", "graphlet")) {
            if (!e.is_array() || e.size() != 2)
                throw Error(ErrorKind::parse, "graphlet edge must be [parent, child]");
            bb.graphlet.edges.emplace_back(e[0].get<int>(), e[1].get<int>());
        }
        const json c = detail::require(jb, "count", "block");
        if (c.contains("constant"))
            bb.count = c.at("constant").get<std::uint64_t>();
        else if (c.contains("model"))
            bb.count = scaling_model_from_json(c.at("model"));
        else
            throw Error(ErrorKind::parse, "block " + std::to_string(bb.id) +
                                              ": count needs \"constant\" or \"model\"");
        pf.model.blocks.push_back(std::move(bb));
    }
    for (const json& je : detail::require(j, "cfg_edges", "program")) {
        CfgEdge e;
        e.src = detail::require(je, "src", "cfg edge").get<int>();
        e.dst = detail::require(je, "dst", "cfg edge").get<int>();
        if (je.contains("prob")) e.prob = je.at("prob").get<double>();
        if (je.contains("model")) e.prob_model = scaling_model_from_json(je.at("model"));
        pf.model.cfg_edges.push_back(std::move(e));
    }
    if (j.contains("reuse_bins")) {
        pf.reuse_bins = bin_models_from_json(j.at("reuse_bins"));
        pf.line_bytes = j.value("line_bytes", std::uint32_t{0});
    }
    return pf;
}

inline ProgramFile load_program(const std::string& path) {
    return program_from_json(parse_json_file(path));
}

inline void save_program(const std::string& path, const ProgramFile& pf) {
    write_file(path, program_to_json(pf).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// observation JSON (output of `profile`, input of `fit`)

struct Observation {
    std::map<std::string, double> input_point;
    std::uint32_t line_bytes = 0;
    double sample_fraction = 1.0;
    std::uint64_t seed = 0;
    std::map<int, std::uint64_t> block_counts;
    std::map<std::pair<int, int>, std::uint64_t> edge_transitions;
    ReuseProfile whole_program;
    std::map<int, ReuseProfile> per_block;
};

inline json observation_to_json(const Observation& o) {
    json point = json::object();
    for (const auto& [k, v] : o.input_point) point[k] = v;
    json counts = json::object();
    for (const auto& [id, c] : o.block_counts) counts[std::to_string(id)] = c;
    json transitions = json::array();
    for (const auto& [edge, c] : o.edge_transitions)
        transitions.push_back({edge.first, edge.second, c});
    json per_block = json::object();
    for (const auto& [id, p] : o.per_block)
        per_block[std::to_string(id)] = profile_to_json(p);
    return {{"input_point", point},
            {"line_bytes", o.line_bytes},
            {"sample_fraction", o.sample_fraction},
            {"seed", o.seed},
            {"block_counts", counts},
            {"edge_transitions", transitions},
            {"whole_program", profile_to_json(o.whole_program)},
            {"per_block", per_block}};
}

inline Observation observation_from_json(const json& j) {
    Observation o;
    for (const auto& [k, v] : detail::require(j, "input_point", "observation").items())
        o.input_point[k] = v.get<double>();
    o.line_bytes = j.value("line_bytes", std::uint32_t{0});
    o.sample_fraction = j.value("sample_fraction", 1.0);
    o.seed = j.value("seed", std::uint64_t{0});
    for (const auto& [k, v] : detail::require(j, "block_counts", "observation").items())
        o.block_counts[std::stoi(k)] = v.get<std::uint64_t>();
    for (const json& t : detail::require(j, "edge_transitions", "observation")) {
        if (!t.is_array() || t.size() != 3)
            throw Error(ErrorKind::parse, "edge transition must be [src, dst, count]");
        o.edge_transitions[{t[0].get<int>(), t[1].get<int>()}] = t[2].get<std::uint64_t>();
    }
    o.whole_program = profile_from_json(detail::require(j, "whole_program", "observation"));
    for (const auto& [k, v] : detail::require(j, "per_block", "observation").items())
        o.per_block[std::stoi(k)] = profile_from_json(v);
    return o;
}

inline Observation load_observation(const std::string& path) {
    return observation_from_json(parse_json_file(path));
}

inline void save_observation(const std::string& path, const Observation& o) {
    write_file(path, observation_to_json(o).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// report JSON

inline json report_to_json(const PredictionReport& r,
                           const std::map<std::string, double>& input_point) {
    json per_block = json::array();
    for (const BlockPrediction& b : r.per_block)
        per_block.push_back({{"block_id", b.block_id},
                             {"time_s", b.time_s},
                             {"count", b.count},
                             {"contribution_s", b.contribution_s}});
    json point = json::object();
    for (const auto& [k, v] : input_point) point[k] = v;
    json mix = json::object();
    for (const auto& [cls, n] : r.instruction_mix) mix[cls] = n;
    return {{"input", point},
            {"per_block", per_block},
            {"hit_rates", r.effective_memory.hit_rates},
            {"lambda_eff", r.effective_memory.lambda_eff_s},
            {"beta_eff", r.effective_memory.beta_eff_s},
            {"total_runtime_s", r.total_runtime_s},
            {"aggregate_profile", profile_to_json(r.aggregate_profile)},
            {"instruction_mix", mix}};
}

inline PredictionReport report_from_json(const json& j) {
    PredictionReport r;
    for (const json& b : detail::require(j, "per_block", "report")) {
        BlockPrediction p;
        p.block_id = detail::require(b, "block_id", "report block").get<int>();
        p.time_s = detail::require(b, "time_s", "report block").get<double>();
        p.count = detail::require(b, "count", "report block").get<std::uint64_t>();
        p.contribution_s =
            detail::require(b, "contribution_s", "report block").get<double>();
        r.per_block.push_back(p);
    }
    r.effective_memory.hit_rates =
        detail::require(j, "hit_rates", "report").get<std::vector<double>>();
    r.effective_memory.lambda_eff_s = detail::require(j, "lambda_eff", "report").get<double>();
    r.effective_memory.beta_eff_s = detail::require(j, "beta_eff", "report").get<double>();
    r.total_runtime_s = detail::require(j, "total_runtime_s", "report").get<double>();
    r.aggregate_profile = profile_from_json(detail::require(j, "aggregate_profile", "report"));
    for (const auto& [cls, n] : detail::require(j, "instruction_mix", "report").items())
        r.instruction_mix[cls] = n.get<std::uint64_t>();
    return r;
}

// ---------------------------------------------------------------------------
// sweep CSV

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << "axis_value,total_runtime_s,l1_hit,l2_hit,l3_hit,lambda_eff_s\n";
    char buf[64];
    auto num = [&buf](double v) {
        std::snprintf(buf, sizeof buf, "%.9e", v);
        return std::string(buf);
    };
    for (const SweepRow& row : rows) {
        std::snprintf(buf, sizeof buf, "%.17g", row.axis_value);
        os << buf;
        if (row.error) {
            os << ",,,,,\n"; // numeric cells stay empty on a per-row error
            continue;
        }
        os << "," << num(row.total_runtime_s);
        for (std::size_t i = 0; i < 3; ++i)
            os << "," << (i < row.hit_rates.size() ? num(row.hit_rates[i]) : "");
        os << "," << num(row.lambda_eff_s) << "\n";
    }
    return os.str();
}

}  // namespace bbcast
