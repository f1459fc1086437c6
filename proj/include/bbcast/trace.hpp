#pragma once

// Reuse-distance analysis over annotated memory traces: exact per-access
// distances, per-basic-block sampled profiles, and histogram binning.
//
// The distance of an access is the number of DISTINCT other addresses touched
// between it and the previous access to the same address; first touches are
// infinite. The backward search always spans the whole trace; block windows
// only select which accesses get measured.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <unordered_map>
#include <vector>

#include "bbcast/model.hpp"

namespace bbcast {

struct BlockWindow {
    int bb_id = 0;
    // Half-open range of trace record indices covering one dynamic execution
    // of the block (from its entry record up to the next entry record).
    std::size_t start_idx = 0;
    std::size_t end_idx = 0;
};

inline std::vector<BlockWindow> block_windows(const MemoryTrace& trace) {
    std::vector<BlockWindow> wins;
    for (std::size_t i = 0; i < trace.records.size(); ++i) {
        const TraceRecord& r = trace.records[i];
        if (r.kind != RecordKind::block_entry) {
            if (wins.empty())
                throw Error(ErrorKind::invariant,
                            "trace access at record " + std::to_string(i) +
                                " precedes any block entry");
            continue;
        }
        if (!wins.empty()) wins.back().end_idx = i;
        wins.push_back({static_cast<int>(r.value), i, trace.records.size()});
    }
    return wins;
}

namespace detail {

// Fenwick tree over trace positions; used to count distinct addresses inside
// a window by marking each address's most recent position.
class FenwickTree {
public:
    explicit FenwickTree(std::size_t n) : tree_(n + 1, 0) {}

    void add(std::size_t pos, int delta) {
        for (std::size_t i = pos + 1; i < tree_.size(); i += i & (~i + 1))
            tree_[i] += delta;
    }

    // sum of marks at positions [0, pos]
    int prefix(std::size_t pos) const {
        int s = 0;
        for (std::size_t i = pos + 1; i > 0; i -= i & (~i + 1)) s += tree_[i];
        return s;
    }

private:
    std::vector<int> tree_;
};

inline std::uint64_t line_address(std::uint64_t addr, std::uint32_t line_bytes) {
    if (line_bytes == 0) return addr;
    std::uint32_t shift = 0;
    while ((std::uint64_t{1} << shift) < line_bytes) ++shift;
    return addr >> shift;
}

// splitmix64: deterministic across platforms, cheap to split by seed.
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, bound) by rejection; bound > 0
    std::uint64_t next_below(std::uint64_t bound) {
        const std::uint64_t limit = ~std::uint64_t{0} - ~std::uint64_t{0} % bound;
        std::uint64_t v;
        do {
            v = next();
        } while (v >= limit);
        return v % bound;
    }
};

}  // namespace detail

struct DistanceSample {
    std::size_t record_idx = 0; // index of the access record in the trace
    std::uint64_t distance = kInfiniteDistance;
};

// Exact reuse distance of every access, in trace order. O(n log n): a
// last-position map plus a Fenwick tree in which exactly the most recent
// position of each address seen so far is marked. When line_bytes > 0,
// addresses are first mapped to cache-line granularity.
inline std::vector<DistanceSample> reuse_distance_exact(const MemoryTrace& trace,
                                                        std::uint32_t line_bytes = 0) {
    std::vector<DistanceSample> out;
    out.reserve(trace.access_count());
    detail::FenwickTree marks(trace.records.size());
    std::unordered_map<std::uint64_t, std::size_t> last_pos;
    last_pos.reserve(1024);

    for (std::size_t i = 0; i < trace.records.size(); ++i) {
        const TraceRecord& r = trace.records[i];
        if (!r.is_access()) continue;
        const std::uint64_t addr = detail::line_address(r.value, line_bytes);
        auto it = last_pos.find(addr);
        std::uint64_t distance = kInfiniteDistance;
        if (it != last_pos.end()) {
            const std::size_t prev = it->second;
            // distinct other addresses strictly between prev and i
            int between = (i > 0 ? marks.prefix(i - 1) : 0) - marks.prefix(prev);
            distance = static_cast<std::uint64_t>(between);
            marks.add(prev, -1);
            it->second = i;
        } else {
            last_pos.emplace(addr, i);
        }
        marks.add(i, +1);
        out.push_back({i, distance});
    }
    return out;
}

// Whole-program reuse profile: normalized histogram over every access.
inline ReuseProfile whole_program_profile(const MemoryTrace& trace,
                                          std::uint32_t line_bytes = 0) {
    if (trace.access_count() == 0)
        throw Error(ErrorKind::invariant, "trace contains no memory accesses");
    std::map<std::uint64_t, std::uint64_t> counts;
    for (const DistanceSample& s : reuse_distance_exact(trace, line_bytes))
        ++counts[s.distance];
    return ReuseProfile::from_counts(counts);
}

// Per-block sampled reuse profile. Selects ceil(sample_fraction * windows)
// dynamic executions of the block uniformly at random (seeded, reproducible)
// and histograms the exact reuse distances of the accesses inside them. The
// distances themselves are measured against the whole trace.
inline ReuseProfile block_reuse_profile(const MemoryTrace& trace, int bb_id,
                                        double sample_fraction, std::uint64_t seed,
                                        std::uint32_t line_bytes = 0) {
    if (!(sample_fraction > 0.0) || sample_fraction > 1.0)
        throw Error(ErrorKind::invariant, "sample_fraction must lie in (0, 1]");

    std::vector<BlockWindow> wins;
    for (const BlockWindow& w : block_windows(trace))
        if (w.bb_id == bb_id) wins.push_back(w);
    if (wins.empty())
        throw Error(ErrorKind::invariant,
                    "trace contains no window for block " + std::to_string(bb_id));

    const std::size_t want = static_cast<std::size_t>(
        std::ceil(sample_fraction * static_cast<double>(wins.size())));
    std::vector<std::size_t> pick(wins.size());
    for (std::size_t i = 0; i < pick.size(); ++i) pick[i] = i;
    if (want < wins.size()) {
        detail::SplitMix64 rng(seed);
        for (std::size_t i = 0; i < want; ++i) {
            std::size_t j = i + rng.next_below(pick.size() - i);
            std::swap(pick[i], pick[j]);
        }
        pick.resize(want);
        std::sort(pick.begin(), pick.end());
    }

    std::vector<bool> selected(trace.records.size(), false);
    for (std::size_t idx : pick)
        for (std::size_t r = wins[idx].start_idx; r < wins[idx].end_idx; ++r)
            selected[r] = true;

    std::map<std::uint64_t, std::uint64_t> counts;
    for (const DistanceSample& s : reuse_distance_exact(trace, line_bytes))
        if (selected[s.record_idx]) ++counts[s.distance];
    return ReuseProfile::from_counts(counts);
}

// Merges finite distances into at most max_bins-1 logarithmically spaced
// bins; the infinite bin is kept separate. Each merged bin's representative
// distance is the probability-weighted mean rounded to nearest; total
// probability is preserved. Profiles that already fit within max_bins bins
// are returned unchanged.
inline ReuseProfile bin_profile(const ReuseProfile& profile, std::size_t max_bins) {
    if (max_bins < 2)
        throw Error(ErrorKind::invariant, "max_bins must be >= 2");

    std::vector<ReuseProfile::Bin> finite;
    double inf_prob = 0.0;
    bool has_inf = false;
    for (const ReuseProfile::Bin& b : profile.bins()) {
        if (b.distance == kInfiniteDistance) {
            inf_prob = b.probability;
            has_inf = true;
        } else {
            finite.push_back(b);
        }
    }

    const std::size_t groups = max_bins - 1;
    if (finite.size() <= groups) return profile;
    std::vector<ReuseProfile::Bin> out;
    if (finite.size() <= groups) {
        out = finite;
    } else {
        const double lo = std::max<double>(1.0, static_cast<double>(finite.front().distance));
        const double hi = static_cast<double>(finite.back().distance);
        const double ratio = std::log(hi / lo);
        // group index of a finite distance under log spacing over [lo, hi]
        auto group_of = [&](std::uint64_t d) -> std::size_t {
            if (ratio <= 0.0 || static_cast<double>(d) <= lo) return 0;
            double t = std::log(static_cast<double>(d) / lo) / ratio;
            auto g = static_cast<std::size_t>(t * static_cast<double>(groups));
            return std::min(g, groups - 1);
        };
        std::size_t i = 0;
        while (i < finite.size()) {
            const std::size_t g = group_of(finite[i].distance);
            double mass = 0.0, mean_num = 0.0;
            while (i < finite.size() && group_of(finite[i].distance) == g) {
                mass += finite[i].probability;
                mean_num += finite[i].probability * static_cast<double>(finite[i].distance);
                ++i;
            }
            if (mass > 0.0) {
                auto rep = static_cast<std::uint64_t>(std::floor(mean_num / mass + 0.5));
                if (!out.empty() && out.back().distance >= rep) {
                    // weighted means of adjacent groups collided after rounding
                    double m = out.back().probability + mass;
                    double n = out.back().probability * static_cast<double>(out.back().distance) +
                               mean_num;
                    out.back().probability = m;
                    out.back().distance = static_cast<std::uint64_t>(std::floor(n / m + 0.5));
                } else {
                    out.push_back({rep, mass});
                }
            } else {
                // zero-probability bins are dropped
            }
        }
    }
    if (has_inf) out.push_back({kInfiniteDistance, inf_prob});
    return ReuseProfile::from_bins(std::move(out), profile.total_accesses());
}

// Fixed-count alignment for regression over inputs: the finite probability
// mass is split into exactly nbins equal-mass groups so that bin j means the
// same thing for every input size. A single heavy distance may span several
// groups. Not a ReuseProfile: adjacent groups can share a representative.
struct AlignedBins {
    std::vector<double> mean_distance; // nbins entries
    std::vector<double> probability;   // nbins entries, summing to 1 - inf
    double infinite_probability = 0.0;
    std::uint64_t total_accesses = 0;
};

inline AlignedBins quantile_bins(const ReuseProfile& profile, std::size_t nbins) {
    if (nbins < 1)
        throw Error(ErrorKind::invariant, "nbins must be >= 1");
    std::vector<ReuseProfile::Bin> finite;
    AlignedBins out;
    for (const ReuseProfile::Bin& b : profile.bins()) {
        if (b.distance == kInfiniteDistance)
            out.infinite_probability = b.probability;
        else
            finite.push_back(b);
    }
    out.mean_distance.assign(nbins, 0.0);
    out.probability.assign(nbins, 0.0);
    out.total_accesses = profile.total_accesses();
    double total = 0.0;
    for (const ReuseProfile::Bin& b : finite) total += b.probability;
    if (total <= 0.0) return out;

    const double per_bin = total / static_cast<double>(nbins);
    std::size_t src = 0;
    double src_left = finite.empty() ? 0.0 : finite[0].probability;
    for (std::size_t j = 0; j < nbins; ++j) {
        double need = per_bin, mass = 0.0, mean_num = 0.0;
        while (need > 1e-15 && src < finite.size()) {
            const double take = std::min(need, src_left);
            mass += take;
            mean_num += take * static_cast<double>(finite[src].distance);
            need -= take;
            src_left -= take;
            if (src_left <= 1e-15) {
                ++src;
                src_left = src < finite.size() ? finite[src].probability : 0.0;
            }
        }
        if (j + 1 == nbins) {
            // absorb any residue from float splitting
            while (src < finite.size()) {
                mass += src_left;
                mean_num += src_left * static_cast<double>(finite[src].distance);
                ++src;
                src_left = src < finite.size() ? finite[src].probability : 0.0;
            }
        }
        out.probability[j] = mass;
        out.mean_distance[j] = mass > 0.0 ? mean_num / mass : 0.0;
    }
    return out;
}

}  // namespace bbcast
