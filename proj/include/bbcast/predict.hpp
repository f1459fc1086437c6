#pragma once

// End-to-end runtime prediction and one-axis sensitivity sweeps.
//
// predict() evaluates the per-block count models at the requested input
// point, forms the whole-program reuse profile (measured per-block profiles
// mixed by predicted counts, or the fitted bin models when extrapolating),
// derives the effective memory latency/bandwidth, simulates every graphlet
// once, and sums t_i * N_i.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bbcast/cache.hpp"
#include "bbcast/learn.hpp"
#include "bbcast/model.hpp"
#include "bbcast/pipesim.hpp"

namespace bbcast {

// Where whole-program reuse behavior comes from. Measured per-block profiles
// take precedence; the fitted bin models cover unseen input points.
struct ProfileSource {
    std::map<int, ReuseProfile> per_block;
    std::optional<BinModelSet> bins;

    bool available() const { return !per_block.empty() || bins.has_value(); }
};

namespace detail {

inline std::uint64_t block_count_at(const BasicBlockModel& bb,
                                    const std::map<std::string, double>& point) {
    if (const auto* literal = std::get_if<std::uint64_t>(&bb.count)) return *literal;
    return std::get<ScalingModel>(bb.count).evaluate_count(point);
}

inline bool model_has_memory_ops(const ProgramModel& model) {
    for (const BasicBlockModel& bb : model.blocks)
        for (const auto& [id, cls] : bb.graphlet.vertices)
            if (is_memory_class(cls)) return true;
    return false;
}

}  // namespace detail

inline PredictionReport predict(const ProgramModel& model, const ProfileSource& profiles,
                                const HardwareConfig& hw,
                                const std::map<std::string, double>& input_point) {
    {
        const auto violations = validate_hardware(hw);
        if (!violations.empty())
            throw Error(ErrorKind::invariant, "hardware config invalid: " + violations.front());
    }
    for (const std::string& p : model.input_params)
        if (!input_point.count(p))
            throw Error(ErrorKind::invariant, "input point is missing parameter " + p);

    PredictionReport report;

    // (1) execution counts
    std::map<int, std::uint64_t> counts;
    for (const BasicBlockModel& bb : model.blocks)
        counts[bb.id] = detail::block_count_at(bb, input_point);

    // (2) whole-program reuse profile
    if (!profiles.per_block.empty()) {
        std::vector<std::pair<ReuseProfile, double>> weighted;
        for (const auto& [id, profile] : profiles.per_block) {
            auto it = counts.find(id);
            if (it == counts.end())
                throw Error(ErrorKind::invariant,
                            "profile references unknown block " + std::to_string(id));
            if (!profile.empty())
                weighted.emplace_back(profile, static_cast<double>(it->second));
        }
        if (!weighted.empty()) report.aggregate_profile = aggregate_profile(weighted);
    } else if (profiles.bins) {
        report.aggregate_profile = profiles.bins->predict_profile(input_point);
    }

    // (3) effective memory; models without memory instructions skip it
    std::optional<EffectiveMemory> mem;
    if (!report.aggregate_profile.empty()) {
        mem = effective_memory(report.aggregate_profile, hw);
        report.effective_memory = *mem;
    } else if (detail::model_has_memory_ops(model)) {
        throw Error(ErrorKind::invariant,
                    "model contains loads/stores but no reuse profiles are available");
    }

    // (4) per-block pipeline simulation
    const PipelineBank bank = PipelineBank::from_hardware(hw, mem);
    const std::map<int, double> times = block_times(model, bank);

    // (5) total runtime and the per-block breakdown
    double total = 0.0;
    for (const BasicBlockModel& bb : model.blocks) {
        const std::uint64_t n = counts.at(bb.id);
        const double t = times.at(bb.id);
        const double contribution = t * static_cast<double>(n);
        report.per_block.push_back({bb.id, t, n, contribution});
        total += contribution;
        for (const auto& [vid, cls] : bb.graphlet.vertices)
            report.instruction_mix[cls] += n;
    }
    report.total_runtime_s = total;
    return report;
}

// ---------------------------------------------------------------------------
// Symbolic total runtime

// T as a polynomial over the input parameters, obtained by expanding
// sum_i t_i * N_i(|I|) and collecting per monomial.
struct RuntimePolynomial {
    std::map<Monomial, double> terms; // includes the constant under Monomial::one()

    double evaluate(const std::map<std::string, double>& point) const {
        double v = 0.0;
        for (const auto& [m, c] : terms) v += c * m.evaluate(point);
        return v;
    }

    std::string str() const {
        // highest total degree first, then the map's lexicographic order
        std::vector<const std::pair<const Monomial, double>*> order;
        for (const auto& t : terms) order.push_back(&t);
        std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) {
            return a->first.factors.size() > b->first.factors.size();
        });
        std::ostringstream os;
        bool first = true;
        for (const auto* t : order) {
            const double c = t->second;
            if (c == 0.0) continue;
            if (first) {
                if (c < 0) os << "-";
            } else {
                os << (c < 0 ? " - " : " + ");
            }
            first = false;
            os << std::abs(c);
            if (!t->first.is_constant()) os << "*" << t->first.str();
        }
        if (first) os << "0";
        return os.str();
    }
};

inline RuntimePolynomial runtime_polynomial(const ProgramModel& model,
                                            const std::map<int, double>& block_times_s) {
    RuntimePolynomial out;
    for (const BasicBlockModel& bb : model.blocks) {
        auto it = block_times_s.find(bb.id);
        if (it == block_times_s.end())
            throw Error(ErrorKind::invariant,
                        "no block time for block " + std::to_string(bb.id));
        const double t = it->second;
        if (const auto* literal = std::get_if<std::uint64_t>(&bb.count)) {
            out.terms[Monomial::one()] += t * static_cast<double>(*literal);
            continue;
        }
        const ScalingModel& m = std::get<ScalingModel>(bb.count);
        if (!m.is_polynomial())
            throw Error(ErrorKind::invariant,
                        "count model of block " + std::to_string(bb.id) +
                            " contains non-polynomial terms");
        out.terms[Monomial::one()] += t * m.intercept;
        for (std::size_t j = 0; j < m.feature_terms.size(); ++j)
            if (m.weights[j] != 0.0) out.terms[m.feature_terms[j]] += t * m.weights[j];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sensitivity sweeps

struct SweepAxis {
    enum class Kind { pipeline_count, cache_size, input_param };
    Kind kind = Kind::cache_size;
    InstructionClass pipeline_class; // for pipeline_count
    std::size_t cache_level = 0;     // for cache_size, 0 = L1
    std::string param;               // for input_param
};

struct SweepRow {
    double axis_value = 0.0;
    std::optional<std::string> error;
    double total_runtime_s = 0.0;
    std::vector<double> hit_rates;
    double lambda_eff_s = 0.0;
};

// One prediction per axis value with everything else held at the base
// configuration. Rows are computed in parallel but reported in input order;
// a value that yields an invalid configuration becomes a per-row error and
// the sweep continues.
inline std::vector<SweepRow> sweep(const ProgramModel& model, const ProfileSource& profiles,
                                   const HardwareConfig& base_hw, const SweepAxis& axis,
                                   const std::vector<double>& values,
                                   const std::map<std::string, double>& base_point) {
    if (values.empty())
        throw Error(ErrorKind::invariant, "sweep needs at least one axis value");
    if (axis.kind == SweepAxis::Kind::pipeline_count &&
        !base_hw.pipelines.count(axis.pipeline_class))
        throw Error(ErrorKind::usage,
                    "unknown pipeline class \"" + axis.pipeline_class + "\"");
    if (axis.kind == SweepAxis::Kind::cache_size &&
        axis.cache_level >= base_hw.cache_levels.size())
        throw Error(ErrorKind::usage, "hardware config has no cache level L" +
                                          std::to_string(axis.cache_level + 1));
    if (axis.kind == SweepAxis::Kind::input_param) {
        bool known = false;
        for (const std::string& p : model.input_params) known |= (p == axis.param);
        if (!known)
            throw Error(ErrorKind::usage, "unknown input parameter \"" + axis.param + "\"");
    }

    auto run_one = [&](double value) -> SweepRow {
        SweepRow row;
        row.axis_value = value;
        try {
            HardwareConfig hw = base_hw;
            std::map<std::string, double> point = base_point;
            switch (axis.kind) {
            case SweepAxis::Kind::pipeline_count:
                if (value < 1.0 || value != std::floor(value))
                    throw Error(ErrorKind::invariant,
                                "pipeline count must be a positive integer");
                hw.pipelines.at(axis.pipeline_class).count = static_cast<int>(value);
                break;
            case SweepAxis::Kind::cache_size:
                if (value < 1.0 || value != std::floor(value))
                    throw Error(ErrorKind::invariant,
                                "cache size must be a positive integer byte count");
                hw.cache_levels.at(axis.cache_level).size_bytes =
                    static_cast<std::uint64_t>(value);
                break;
            case SweepAxis::Kind::input_param:
                point[axis.param] = value;
                break;
            }
            const PredictionReport r = predict(model, profiles, hw, point);
            row.total_runtime_s = r.total_runtime_s;
            row.hit_rates = r.effective_memory.hit_rates;
            row.lambda_eff_s = r.effective_memory.lambda_eff_s;
        } catch (const Error& e) {
            row.error = e.what();
        }
        return row;
    };

    std::vector<std::future<SweepRow>> futures;
    futures.reserve(values.size());
    for (double v : values)
        futures.push_back(std::async(std::launch::async, run_one, v));
    std::vector<SweepRow> rows;
    rows.reserve(values.size());
    for (auto& f : futures) rows.push_back(f.get());
    return rows;
}

}  // namespace bbcast
