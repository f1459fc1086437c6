#pragma once

// Core domain types shared by every other component: hardware descriptions,
// program structure (CFG + per-block dependency graphlets), memory traces,
// reuse profiles and fitted scaling models. All types are plain values,
// immutable after construction, and safe to share across threads.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace bbcast {

// ---------------------------------------------------------------------------
// Errors

enum class ErrorKind {
    usage,      // bad flags / unknown subcommand          -> exit 2
    parse,      // malformed input file                    -> exit 2
    invariant,  // violated data invariant or domain error -> exit 3
    guardrail,  // resource limit exceeded                 -> exit 4
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

    int exit_code() const {
        switch (kind_) {
        case ErrorKind::usage:
        case ErrorKind::parse: return 2;
        case ErrorKind::invariant: return 3;
        case ErrorKind::guardrail: return 4;
        }
        return 3;
    }

private:
    ErrorKind kind_;
};

// ---------------------------------------------------------------------------
// Instruction classes

// Open set keyed by name so a hardware file can introduce new classes.
// "unknown" is the required fallback; "load"/"store" are routed to the
// special memory pipeline, never to their nominal PipelineSpec.
using InstructionClass = std::string;

namespace iclass {
inline const InstructionClass iadd = "iadd";
inline const InstructionClass fadd = "fadd";
inline const InstructionClass idiv = "idiv";
inline const InstructionClass fdiv = "fdiv";
inline const InstructionClass imul = "imul";
inline const InstructionClass fmul = "fmul";
inline const InstructionClass load = "load";
inline const InstructionClass store = "store";
inline const InstructionClass alu = "alu";
inline const InstructionClass br = "br";
inline const InstructionClass unknown = "unknown";
}  // namespace iclass

inline const std::vector<InstructionClass>& default_instruction_classes() {
    static const std::vector<InstructionClass> classes = {
        iclass::iadd, iclass::fadd, iclass::idiv, iclass::fdiv,
        iclass::imul, iclass::fmul, iclass::load, iclass::store,
        iclass::alu,  iclass::br,   iclass::unknown};
    return classes;
}

inline bool is_memory_class(const InstructionClass& c) {
    return c == iclass::load || c == iclass::store;
}

// ---------------------------------------------------------------------------
// Hardware description

struct PipelineSpec {
    int count = 1;             // identical pipeline instances for this class
    double latency_s = 0.0;    // full transit time of one instruction
    double throughput_s = 0.0; // issue-to-issue spacing on one pipeline
};

struct CacheLevel {
    std::uint64_t size_bytes = 0;
    std::uint32_t line_bytes = 0;
    std::uint32_t associativity = 0;
    double latency_s = 0.0;
    double bandwidth_s = 0.0; // seconds per access

    std::uint64_t blocks() const {
        return line_bytes == 0 ? 0 : size_bytes / line_bytes;
    }
};

struct RamSpec {
    double latency_s = 0.0;
    double bandwidth_s = 0.0;
    std::uint64_t size_bytes = 0; // informational
};

struct HardwareConfig {
    std::string name;
    double clock_hz = 0.0;
    std::map<InstructionClass, PipelineSpec> pipelines;
    std::vector<CacheLevel> cache_levels; // L1 first, strictly increasing size
    RamSpec ram;
};

// Returns every invariant violation with a human-readable path; an empty
// list means the config is valid. Violations are data, not failures.
inline std::vector<std::string> validate_hardware(const HardwareConfig& hw) {
    std::vector<std::string> out;
    auto fail = [&out](const std::string& path, const std::string& what) {
        out.push_back(path + ": " + what);
    };

    if (!(hw.clock_hz > 0.0)) fail("clock_hz", "must be positive");
    if (hw.cache_levels.empty()) fail("cache_levels", "must be nonempty");
    for (std::size_t i = 0; i < hw.cache_levels.size(); ++i) {
        const CacheLevel& lvl = hw.cache_levels[i];
        const std::string path = "cache_levels[" + std::to_string(i) + "]";
        if (lvl.size_bytes == 0) fail(path + ".size_bytes", "must be positive");
        if (lvl.line_bytes == 0) fail(path + ".line_bytes", "must be positive");
        if (lvl.associativity < 1) fail(path + ".associativity", "must be >= 1");
        if (!(lvl.latency_s > 0.0)) fail(path + ".latency_s", "must be positive");
        if (!(lvl.bandwidth_s > 0.0)) fail(path + ".bandwidth_s", "must be positive");
        if (lvl.line_bytes != 0 && lvl.size_bytes % lvl.line_bytes != 0)
            fail(path, "line_bytes must divide size_bytes");
        if (lvl.line_bytes != 0 && lvl.blocks() < lvl.associativity)
            fail(path, "blocks (size/line) must be >= associativity");
        if (i > 0 && !(hw.cache_levels[i - 1].size_bytes < lvl.size_bytes))
            fail(path + ".size_bytes",
                 "cache levels must be ordered by strictly increasing size");
    }
    if (!(hw.ram.latency_s > 0.0)) fail("ram.latency_s", "must be positive");
    if (!(hw.ram.bandwidth_s > 0.0)) fail("ram.bandwidth_s", "must be positive");

    for (const auto& [name, spec] : hw.pipelines) {
        const std::string path = "pipelines." + name;
        if (spec.count < 1) fail(path + ".count", "must be >= 1");
        if (!(spec.throughput_s > 0.0))
            fail(path + ".throughput_s", "must be positive");
        else if (!(spec.latency_s >= spec.throughput_s))
            fail(path, "latency_s must be >= throughput_s");
    }
    if (!hw.pipelines.count(iclass::unknown))
        fail("pipelines", "fallback class \"unknown\" is required");
    return out;
}

// ---------------------------------------------------------------------------
// Scaling models (fitted regressions over the program's input parameters)

// A monomial is a multiset of factor names, e.g. {n,n} for n^2. A factor of
// the form "1/<param>" contributes the reciprocal; those come from the
// optional reciprocal-feature extension and keep the multiset encoding.
struct Monomial {
    std::vector<std::string> factors; // kept sorted

    static Monomial one() { return Monomial{}; }

    bool is_constant() const { return factors.empty(); }

    bool has_reciprocal() const {
        return std::any_of(factors.begin(), factors.end(), [](const std::string& f) {
            return f.rfind("1/", 0) == 0;
        });
    }

    double evaluate(const std::map<std::string, double>& point) const {
        double v = 1.0;
        for (const std::string& f : factors) {
            if (f.rfind("1/", 0) == 0) {
                auto it = point.find(f.substr(2));
                if (it == point.end())
                    throw Error(ErrorKind::invariant, "monomial references unknown parameter " + f);
                v /= it->second;
            } else {
                auto it = point.find(f);
                if (it == point.end())
                    throw Error(ErrorKind::invariant, "monomial references unknown parameter " + f);
                v *= it->second;
            }
        }
        return v;
    }

    std::string str() const {
        if (factors.empty()) return "1";
        std::string s;
        for (std::size_t i = 0; i < factors.size(); ++i) {
            if (i) s += "*";
            s += factors[i];
        }
        return s;
    }

    auto operator<=>(const Monomial&) const = default;
};

struct ScalingModel {
    std::vector<Monomial> feature_terms;
    std::vector<double> weights; // one per term
    double intercept = 0.0;
    double l1_penalty = 0.0; // penalty used during fit

    static ScalingModel constant(double value) {
        ScalingModel m;
        m.intercept = value;
        return m;
    }

    bool is_constant() const { return feature_terms.empty(); }

    bool is_polynomial() const {
        return std::none_of(feature_terms.begin(), feature_terms.end(),
                            [](const Monomial& t) { return t.has_reciprocal(); });
    }

    double evaluate(const std::map<std::string, double>& point) const {
        double v = intercept;
        for (std::size_t i = 0; i < feature_terms.size(); ++i)
            v += weights[i] * feature_terms[i].evaluate(point);
        if (!std::isfinite(v))
            throw Error(ErrorKind::invariant, "scaling model evaluated to a non-finite value");
        return v;
    }

    // Counts are rounded half-up and clamped at zero; fractional predictions
    // are regression noise.
    std::uint64_t evaluate_count(const std::map<std::string, double>& point) const {
        double v = std::floor(evaluate(point) + 0.5);
        return v <= 0.0 ? 0 : static_cast<std::uint64_t>(v);
    }

    double evaluate_probability(const std::map<std::string, double>& point) const {
        return std::clamp(evaluate(point), 0.0, 1.0);
    }
};

// ---------------------------------------------------------------------------
// Program structure

struct Graphlet {
    std::vector<std::pair<int, InstructionClass>> vertices;
    std::vector<std::pair<int, int>> edges; // (parent, child) data dependencies
};

// Kahn topological order over vertex ids; nullopt when the graphlet has a
// cycle (including self-loops). Ready vertices are taken in ascending id.
inline std::optional<std::vector<int>> topological_order(const Graphlet& g) {
    std::map<int, std::vector<int>> children;
    std::map<int, int> indegree;
    for (const auto& [id, cls] : g.vertices) indegree.emplace(id, 0);
    for (const auto& [u, v] : g.edges) {
        if (!indegree.count(u) || !indegree.count(v)) return std::nullopt;
        children[u].push_back(v);
        ++indegree[v];
    }
    std::vector<int> ready;
    for (const auto& [id, deg] : indegree)
        if (deg == 0) ready.push_back(id);
    // std::map iteration already gave ascending ids
    std::vector<int> order;
    while (!ready.empty()) {
        std::pop_heap(ready.begin(), ready.end(), std::greater<>());
        int u = ready.back();
        ready.pop_back();
        order.push_back(u);
        for (int v : children[u]) {
            if (--indegree[v] == 0) {
                ready.push_back(v);
                std::push_heap(ready.begin(), ready.end(), std::greater<>());
            }
        }
    }
    if (order.size() != g.vertices.size()) return std::nullopt;
    return order;
}

// Execution count of a block: a literal observed count or a fitted model.
using CountSource = std::variant<std::uint64_t, ScalingModel>;

struct BasicBlockModel {
    int id = 0;
    Graphlet graphlet;
    CountSource count = std::uint64_t{0};
};

struct CfgEdge {
    int src = 0;
    int dst = 0;
    std::optional<double> prob;           // literal branching probability
    std::optional<ScalingModel> prob_model; // fitted alternative
};

struct ProgramModel {
    std::vector<BasicBlockModel> blocks; // ids dense, 0..m-1
    std::vector<CfgEdge> cfg_edges;
    std::vector<std::string> input_params;
};

inline std::vector<std::string> validate_program(const ProgramModel& model) {
    std::vector<std::string> out;
    auto fail = [&out](const std::string& path, const std::string& what) {
        out.push_back(path + ": " + what);
    };

    std::vector<bool> seen(model.blocks.size(), false);
    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
        const BasicBlockModel& bb = model.blocks[i];
        const std::string path = "blocks[" + std::to_string(i) + "]";
        if (bb.id < 0 || static_cast<std::size_t>(bb.id) >= model.blocks.size()) {
            fail(path + ".id", "block ids must be dense in 0..m-1");
        } else if (seen[bb.id]) {
            fail(path + ".id", "duplicate block id " + std::to_string(bb.id));
        } else {
            seen[bb.id] = true;
        }

        std::map<int, int> vcount;
        for (const auto& [vid, cls] : bb.graphlet.vertices) ++vcount[vid];
        for (const auto& [vid, n] : vcount)
            if (n > 1) fail(path + ".graphlet", "duplicate vertex id " + std::to_string(vid));
        bool endpoints_ok = true;
        for (const auto& [u, v] : bb.graphlet.edges)
            if (!vcount.count(u) || !vcount.count(v)) {
                fail(path + ".graphlet", "edge (" + std::to_string(u) + "," +
                                             std::to_string(v) + ") references unknown vertex");
                endpoints_ok = false;
            }
        if (endpoints_ok && !topological_order(bb.graphlet))
            fail(path + ".graphlet", "dependency graphlet has a cycle");
    }

    auto valid_id = [&](int id) {
        return id >= 0 && static_cast<std::size_t>(id) < model.blocks.size();
    };
    std::map<int, double> prob_sum;
    std::map<int, int> labeled_out, total_out;
    for (std::size_t i = 0; i < model.cfg_edges.size(); ++i) {
        const CfgEdge& e = model.cfg_edges[i];
        const std::string path = "cfg_edges[" + std::to_string(i) + "]";
        if (!valid_id(e.src)) fail(path + ".src", "unknown block id " + std::to_string(e.src));
        if (!valid_id(e.dst)) fail(path + ".dst", "unknown block id " + std::to_string(e.dst));
        ++total_out[e.src];
        if (e.prob) {
            if (*e.prob < 0.0 || *e.prob > 1.0)
                fail(path + ".prob", "branch probability must lie in [0,1]");
            prob_sum[e.src] += *e.prob;
            ++labeled_out[e.src];
        }
    }
    for (const auto& [src, n] : labeled_out) {
        if (n != total_out[src]) {
            fail("cfg_edges", "block " + std::to_string(src) +
                                  " mixes labeled and unlabeled outgoing probabilities");
            continue;
        }
        if (std::abs(prob_sum[src] - 1.0) > 1e-9) {
            std::ostringstream os;
            os << "outgoing branch probabilities of block " << src << " sum to "
               << prob_sum[src] << ", expected 1";
            fail("cfg_edges", os.str());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Memory traces

enum class RecordKind : std::uint8_t { block_entry, load, store };

struct TraceRecord {
    RecordKind kind = RecordKind::block_entry;
    std::uint64_t value = 0; // block id for block_entry, address otherwise

    static TraceRecord block(int bb_id) {
        return {RecordKind::block_entry, static_cast<std::uint64_t>(bb_id)};
    }
    static TraceRecord access(std::uint64_t addr, bool is_store) {
        return {is_store ? RecordKind::store : RecordKind::load, addr};
    }
    bool is_access() const { return kind != RecordKind::block_entry; }
};

struct MemoryTrace {
    std::vector<TraceRecord> records;

    std::size_t access_count() const {
        std::size_t n = 0;
        for (const TraceRecord& r : records) n += r.is_access();
        return n;
    }
};

inline std::vector<std::string> validate_trace(const MemoryTrace& trace) {
    std::vector<std::string> out;
    bool in_block = false;
    for (std::size_t i = 0; i < trace.records.size(); ++i) {
        if (trace.records[i].kind == RecordKind::block_entry)
            in_block = true;
        else if (!in_block)
            out.push_back("records[" + std::to_string(i) +
                          "]: access precedes any block entry");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reuse profiles

// Sentinel reuse distance for first-touch (compulsory) accesses. It sorts
// after every finite distance.
inline constexpr std::uint64_t kInfiniteDistance =
    std::numeric_limits<std::uint64_t>::max();

// Normalized histogram of reuse distances. The constructor path enforces the
// invariants: distances strictly increasing with the infinite bin last, and
// probabilities summing to 1 +/- 1e-9 whenever any access was recorded.
class ReuseProfile {
public:
    struct Bin {
        std::uint64_t distance = 0;
        double probability = 0.0;
        bool operator==(const Bin&) const = default;
    };

    ReuseProfile() = default;

    static ReuseProfile from_bins(std::vector<Bin> bins, std::uint64_t total_accesses) {
        validate_bins(bins, total_accesses);
        ReuseProfile p;
        p.bins_ = std::move(bins);
        p.total_accesses_ = total_accesses;
        return p;
    }

    static ReuseProfile from_counts(const std::map<std::uint64_t, std::uint64_t>& counts) {
        std::uint64_t total = 0;
        for (const auto& [d, c] : counts) total += c;
        std::vector<Bin> bins;
        bins.reserve(counts.size());
        for (const auto& [d, c] : counts)
            if (c > 0) bins.push_back({d, static_cast<double>(c) / static_cast<double>(total)});
        return from_bins(std::move(bins), total);
    }

    const std::vector<Bin>& bins() const { return bins_; }
    std::uint64_t total_accesses() const { return total_accesses_; }
    bool empty() const { return bins_.empty(); }

    double infinite_probability() const {
        if (!bins_.empty() && bins_.back().distance == kInfiniteDistance)
            return bins_.back().probability;
        return 0.0;
    }

    double probability_sum() const {
        double s = 0.0;
        for (const Bin& b : bins_) s += b.probability;
        return s;
    }

    bool operator==(const ReuseProfile&) const = default;

private:
    static void validate_bins(const std::vector<Bin>& bins, std::uint64_t total_accesses) {
        double sum = 0.0;
        for (std::size_t i = 0; i < bins.size(); ++i) {
            if (bins[i].probability < 0.0)
                throw Error(ErrorKind::invariant, "reuse profile probability is negative");
            if (i > 0 && !(bins[i - 1].distance < bins[i].distance))
                throw Error(ErrorKind::invariant,
                            "reuse profile distances must be strictly increasing");
            sum += bins[i].probability;
        }
        if (total_accesses > 0 && std::abs(sum - 1.0) > 1e-9)
            throw Error(ErrorKind::invariant, "reuse profile probabilities sum to " +
                                                 std::to_string(sum) + ", expected 1");
        if (total_accesses == 0 && !bins.empty())
            throw Error(ErrorKind::invariant, "reuse profile has bins but zero accesses");
    }

    std::vector<Bin> bins_;
    std::uint64_t total_accesses_ = 0;
};

// ---------------------------------------------------------------------------
// Prediction outputs

struct EffectiveMemory {
    double lambda_eff_s = 0.0;
    double beta_eff_s = 0.0;
    std::vector<double> hit_rates; // one per cache level, L1 first
};

struct BlockPrediction {
    int block_id = 0;
    double time_s = 0.0;
    std::uint64_t count = 0;
    double contribution_s = 0.0; // time_s * count
};

struct PredictionReport {
    std::vector<BlockPrediction> per_block;
    double total_runtime_s = 0.0;
    EffectiveMemory effective_memory;
    ReuseProfile aggregate_profile;
    std::map<InstructionClass, std::uint64_t> instruction_mix;
};

}  // namespace bbcast
