#pragma once

// Analytical memory model: stack-distance cache hit probabilities, profile
// aggregation across basic blocks, per-level hit rates and the effective
// latency/bandwidth of the cache hierarchy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "bbcast/model.hpp"

namespace bbcast {

namespace detail {

struct KahanSum {
    double sum = 0.0;
    double carry = 0.0;

    void add(double x) {
        double y = x - carry;
        double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
};

}  // namespace detail

// Probability that an access with reuse distance d hits an A-way cache of B
// blocks:  sum_{a=0}^{A-1} C(d,a) (A/B)^a ((B-A)/B)^(d-a).
// Terms are evaluated in log space via lgamma and Kahan-accumulated so that d
// in the millions stays stable; an infinite distance is always a miss.
inline double hit_given_distance(std::uint64_t d, std::uint32_t associativity,
                                 std::uint64_t blocks) {
    const std::uint64_t A = associativity;
    const std::uint64_t B = blocks;
    if (A < 1 || A > B)
        throw Error(ErrorKind::invariant,
                    "associativity must satisfy 1 <= A <= blocks");
    if (d == kInfiniteDistance) return 0.0;
    if (d < A) return 1.0; // complete binomial sum: fewer lines than ways
    if (A == B) return d < B ? 1.0 : 0.0; // exact LRU step

    const double log_way = std::log(static_cast<double>(A) / static_cast<double>(B));
    const double log_rest =
        std::log(static_cast<double>(B - A) / static_cast<double>(B));
    const double dd = static_cast<double>(d);
    const std::uint64_t amax = std::min<std::uint64_t>(A - 1, d);

    detail::KahanSum acc;
    for (std::uint64_t a = 0; a <= amax; ++a) {
        const double da = static_cast<double>(a);
        const double log_binom =
            std::lgamma(dd + 1.0) - std::lgamma(da + 1.0) - std::lgamma(dd - da + 1.0);
        acc.add(std::exp(log_binom + da * log_way + (dd - da) * log_rest));
    }
    return std::clamp(acc.sum, 0.0, 1.0);
}

inline double hit_given_distance(std::uint64_t d, const CacheLevel& level) {
    return hit_given_distance(d, level.associativity, level.blocks());
}

// Weighted mixture of per-block reuse profiles:
//   P(d) = (1 / sum w_i) * sum w_i P_i(d)
// over the union of bin distances, renormalized. Weights are the block
// execution counts (or access counts, when recomposing a whole-trace
// profile).
inline ReuseProfile aggregate_profile(
    const std::vector<std::pair<ReuseProfile, double>>& block_profiles) {
    double weight_total = 0.0;
    for (const auto& [profile, weight] : block_profiles) {
        if (weight < 0.0)
            throw Error(ErrorKind::invariant, "profile weights must be nonnegative");
        weight_total += weight;
    }
    if (!(weight_total > 0.0))
        throw Error(ErrorKind::invariant, "profile aggregation needs a positive weight");

    std::map<std::uint64_t, double> mixed;
    std::uint64_t total_accesses = 0;
    for (const auto& [profile, weight] : block_profiles) {
        total_accesses += profile.total_accesses();
        if (weight == 0.0) continue;
        for (const ReuseProfile::Bin& b : profile.bins())
            mixed[b.distance] += weight * b.probability;
    }
    double sum = 0.0;
    for (const auto& [d, p] : mixed) sum += p;
    if (!(sum > 0.0))
        throw Error(ErrorKind::invariant, "profile aggregation produced no mass");

    std::vector<ReuseProfile::Bin> bins;
    bins.reserve(mixed.size());
    for (const auto& [d, p] : mixed) bins.push_back({d, p / sum});
    return ReuseProfile::from_bins(std::move(bins),
                                   total_accesses > 0 ? total_accesses : 1);
}

// P(h) = sum_i P(d_i) P(h | d_i); the infinite bin contributes zero.
inline double level_hit_rate(const ReuseProfile& profile, const CacheLevel& level) {
    detail::KahanSum acc;
    for (const ReuseProfile::Bin& b : profile.bins())
        acc.add(b.probability * hit_given_distance(b.distance, level));
    return std::clamp(acc.sum, 0.0, 1.0);
}

// Effective memory latency and bandwidth of the whole hierarchy, folding the
// nested mixture from RAM back to L1:
//   lambda_eff = P1 l1 + (1-P1)[P2 l2 + (1-P2)[ ... + (1-Pn) lRAM ]]
// and identically for bandwidths.
inline EffectiveMemory effective_memory(const ReuseProfile& profile,
                                        const HardwareConfig& hw) {
    if (hw.cache_levels.empty())
        throw Error(ErrorKind::invariant, "hardware config has no cache levels");

    EffectiveMemory out;
    out.hit_rates.reserve(hw.cache_levels.size());
    for (const CacheLevel& level : hw.cache_levels)
        out.hit_rates.push_back(level_hit_rate(profile, level));

    double lam = hw.ram.latency_s;
    double beta = hw.ram.bandwidth_s;
    for (std::size_t i = hw.cache_levels.size(); i-- > 0;) {
        const double p = out.hit_rates[i];
        lam = p * hw.cache_levels[i].latency_s + (1.0 - p) * lam;
        beta = p * hw.cache_levels[i].bandwidth_s + (1.0 - p) * beta;
    }
    out.lambda_eff_s = lam;
    out.beta_eff_s = beta;
    return out;
}

}  // namespace bbcast
