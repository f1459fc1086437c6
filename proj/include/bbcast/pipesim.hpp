#pragma once

// Discrete-event simulation of instruction pipelines over one basic block's
// data-dependency graphlet. A pipeline issues at most one instruction per
// throughput interval and retires it one latency after issue, so p
// back-to-back independent instructions on one pipeline finish after
// latency + (p-1) * throughput.
//
// Scheduling policy (deterministic): a vertex becomes eligible once every
// parent has retired; vertices eligible at the same instant are assigned in
// ascending vertex id; each is enqueued to the earliest-available pipeline of
// its class, ties to the lowest pipeline id. Events are processed in
// (time, vertex_id, kind) order.

#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <vector>

#include "bbcast/model.hpp"

namespace bbcast {

// Instantiated pipeline resources for one hardware config. Loads and stores
// are routed to a single shared memory pipeline parameterized by the
// effective latency/bandwidth of the cache hierarchy; classes without a spec
// fall back to "unknown".
class PipelineBank {
public:
    struct Group {
        InstructionClass name;
        int count = 1;
        double latency_s = 0.0;
        double throughput_s = 0.0;
    };

    static PipelineBank from_hardware(const HardwareConfig& hw,
                                      const std::optional<EffectiveMemory>& mem = {}) {
        PipelineBank bank;
        for (const auto& [name, spec] : hw.pipelines)
            bank.groups_[name] = {name, spec.count, spec.latency_s, spec.throughput_s};
        if (mem) {
            if (!(mem->lambda_eff_s > 0.0) || !(mem->beta_eff_s > 0.0))
                throw Error(ErrorKind::invariant,
                            "effective memory latency/bandwidth must be positive");
            bank.memory_ = Group{"memory", 1, mem->lambda_eff_s, mem->beta_eff_s};
        }
        return bank;
    }

    void set_group(const InstructionClass& name, int count, double latency_s,
                   double throughput_s) {
        groups_[name] = {name, count, latency_s, throughput_s};
    }

    const Group& resolve(const InstructionClass& c) const {
        if (memory_ && is_memory_class(c)) return *memory_;
        auto it = groups_.find(c);
        if (it != groups_.end()) return it->second;
        it = groups_.find(iclass::unknown);
        if (it != groups_.end()) return it->second;
        throw Error(ErrorKind::invariant,
                    "no pipeline for class \"" + c + "\" and no \"unknown\" fallback");
    }

    const std::map<InstructionClass, Group>& groups() const { return groups_; }
    const std::optional<Group>& memory_group() const { return memory_; }

private:
    std::map<InstructionClass, Group> groups_;
    std::optional<Group> memory_;
};

struct SimEvent {
    double time_s = 0.0;
    int vertex_id = 0;
    enum Kind : int { issue = 0, stage_advance = 1, retire = 2 } kind = issue;
    std::size_t pipeline = 0;

    // min-heap order: (time, vertex_id, kind)
    bool operator>(const SimEvent& o) const {
        if (time_s != o.time_s) return time_s > o.time_s;
        if (vertex_id != o.vertex_id) return vertex_id > o.vertex_id;
        return kind > o.kind;
    }
};

struct PipelineUse {
    InstructionClass group;
    int index = 0;
    std::uint64_t issues = 0;
    double busy_s = 0.0; // sum of issue slots (throughput per instruction)
};

struct SimResult {
    double time_s = 0.0;
    std::vector<PipelineUse> pipelines;
    std::map<InstructionClass, std::uint64_t> issued; // by original vertex class
};

inline SimResult simulate_graphlet(const Graphlet& g, const PipelineBank& bank) {
    if (!topological_order(g))
        throw Error(ErrorKind::invariant, "dependency graphlet has a cycle");

    SimResult result;
    if (g.vertices.empty()) return result;

    // per-group pipeline state, keyed by resolved group name
    struct GroupState {
        const PipelineBank::Group* spec = nullptr;
        std::vector<double> available;      // next admissible issue per pipeline
        std::vector<std::uint64_t> issues;
        std::size_t first_use_index = 0;    // offset into result.pipelines
    };
    std::map<InstructionClass, GroupState> states;

    std::map<int, InstructionClass> klass;
    std::map<int, std::vector<int>> children;
    std::map<int, int> pending;
    for (const auto& [id, cls] : g.vertices) {
        klass[id] = cls;
        pending.emplace(id, 0);
        const PipelineBank::Group& grp = bank.resolve(cls);
        auto [it, fresh] = states.try_emplace(grp.name);
        if (fresh) {
            it->second.spec = &grp;
            it->second.available.assign(static_cast<std::size_t>(grp.count), 0.0);
            it->second.issues.assign(static_cast<std::size_t>(grp.count), 0);
        }
    }
    for (const auto& [u, v] : g.edges) {
        children[u].push_back(v);
        ++pending[v];
    }
    for (auto& [u, ch] : children) std::sort(ch.begin(), ch.end());

    std::priority_queue<SimEvent, std::vector<SimEvent>, std::greater<SimEvent>> events;

    auto assign = [&](int v, double eligible_t) {
        GroupState& st = states.at(bank.resolve(klass.at(v)).name);
        std::size_t best = 0;
        for (std::size_t p = 1; p < st.available.size(); ++p)
            if (st.available[p] < st.available[best]) best = p;
        const double start = std::max(eligible_t, st.available[best]);
        const double beta = st.spec->throughput_s;
        const double lambda = st.spec->latency_s;
        st.available[best] = start + beta;
        ++st.issues[best];
        ++result.issued[klass.at(v)];
        events.push({start, v, SimEvent::issue, best});
        events.push({start + beta, v, SimEvent::stage_advance, best});
        events.push({start + lambda, v, SimEvent::retire, best});
    };

    // roots are eligible at t = 0, in ascending id (std::map order)
    std::vector<int> eligible;
    for (const auto& [id, deg] : pending)
        if (deg == 0) eligible.push_back(id);
    for (int v : eligible) assign(v, 0.0);

    while (!events.empty()) {
        const double now = events.top().time_s;
        eligible.clear();
        while (!events.empty() && events.top().time_s == now) {
            const SimEvent ev = events.top();
            events.pop();
            if (ev.kind != SimEvent::retire) continue;
            result.time_s = std::max(result.time_s, ev.time_s);
            for (int child : children[ev.vertex_id])
                if (--pending[child] == 0) eligible.push_back(child);
        }
        std::sort(eligible.begin(), eligible.end());
        for (int v : eligible) assign(v, now);
    }

    for (const auto& [name, st] : states)
        for (std::size_t p = 0; p < st.available.size(); ++p)
            result.pipelines.push_back(
                {name, static_cast<int>(p), st.issues[p],
                 static_cast<double>(st.issues[p]) * st.spec->throughput_s});
    return result;
}

// Per-block execution times: each graphlet is simulated exactly once,
// independent of how often the block executes, so the cost is linear in the
// static instruction count.
inline std::map<int, double> block_times(const ProgramModel& model,
                                         const PipelineBank& bank) {
    std::map<int, double> out;
    for (const BasicBlockModel& bb : model.blocks) {
        try {
            out[bb.id] = simulate_graphlet(bb.graphlet, bank).time_s;
        } catch (const Error& e) {
            throw Error(e.kind(), "block " + std::to_string(bb.id) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace bbcast
