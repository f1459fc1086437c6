#pragma once

// Synthetic parametric workloads: program models, per-block graphlets,
// row-major memory traces and exact closed-form count functions for three
// kernels (triple-loop matmul, 5-point 2-D stencil, streaming saxpy). Every
// for loop is decomposed into the 5-block pattern init / cond / body / incr /
// end, and each dynamic block execution appears as one block-entry record in
// the trace, so fitted count models can be checked against exact truth.

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bbcast/model.hpp"

namespace bbcast {

enum class KernelKind { matmul, stencil2d, saxpy };

inline const char* kernel_name(KernelKind k) {
    switch (k) {
    case KernelKind::matmul: return "matmul";
    case KernelKind::stencil2d: return "stencil2d";
    case KernelKind::saxpy: return "saxpy";
    }
    return "?";
}

struct KernelSpec {
    KernelKind kind = KernelKind::matmul;
    std::vector<std::pair<std::string, std::uint64_t>> params; // ordered sizes
    std::uint32_t element_bytes = 8;
};

struct SynthResult {
    ProgramModel model;
    MemoryTrace trace;
    std::map<int, ScalingModel> ground_truth_counts;
};

// Traces above this many accesses would defeat the small-instance design.
inline constexpr std::uint64_t kMaxSynthAccesses = 10'000'000;

namespace detail {

// tiny exact polynomial algebra for the ground-truth count functions
using Poly = std::map<Monomial, double>;

inline Poly pconst(double c) { return {{Monomial::one(), c}}; }
inline Poly pvar(const std::string& name) { return {{Monomial{{name}}, 1.0}}; }

inline Poly padd(const Poly& a, const Poly& b) {
    Poly out = a;
    for (const auto& [m, c] : b) out[m] += c;
    return out;
}

inline Poly pmul(const Poly& a, const Poly& b) {
    Poly out;
    for (const auto& [ma, ca] : a)
        for (const auto& [mb, cb] : b) {
            Monomial m;
            m.factors = ma.factors;
            m.factors.insert(m.factors.end(), mb.factors.begin(), mb.factors.end());
            std::sort(m.factors.begin(), m.factors.end());
            out[m] += ca * cb;
        }
    return out;
}

inline ScalingModel to_model(const Poly& p) {
    ScalingModel m;
    for (const auto& [mono, coef] : p) {
        if (coef == 0.0) continue;
        if (mono.is_constant()) {
            m.intercept = coef;
        } else {
            m.feature_terms.push_back(mono);
            m.weights.push_back(coef);
        }
    }
    return m;
}

// graphlet shorthand
inline Graphlet chain(std::vector<InstructionClass> classes) {
    Graphlet g;
    for (std::size_t i = 0; i < classes.size(); ++i) {
        g.vertices.emplace_back(static_cast<int>(i), classes[i]);
        if (i > 0) g.edges.emplace_back(static_cast<int>(i - 1), static_cast<int>(i));
    }
    return g;
}

inline Graphlet loop_init() { return chain({iclass::iadd, iclass::br}); }
inline Graphlet loop_cond() { return chain({iclass::alu, iclass::br}); }
inline Graphlet loop_incr() { return chain({iclass::iadd, iclass::br}); }
inline Graphlet loop_end() { return chain({iclass::br}); }

struct ArrayLayout {
    std::uint64_t base = 0;
    std::uint64_t row = 0; // elements per row
    std::uint32_t elem = 8;

    std::uint64_t at(std::uint64_t i, std::uint64_t j = 0) const {
        return base + (i * row + j) * elem;
    }
};

// Disjoint regions 64 MiB apart keep arrays from aliasing in the reuse
// analysis and stay 1 MiB aligned.
inline ArrayLayout array_region(int index, std::uint64_t row, std::uint32_t elem) {
    return {static_cast<std::uint64_t>(index + 1) << 26, row, elem};
}

}  // namespace detail

inline SynthResult generate(const KernelSpec& spec) {
    auto size_of = [&spec](const std::string& name,
                           std::uint64_t fallback) -> std::uint64_t {
        for (const auto& [k, v] : spec.params)
            if (k == name) return v;
        return fallback;
    };
    for (const auto& [k, v] : spec.params)
        if (v < 1) throw Error(ErrorKind::invariant, "kernel size " + k + " must be >= 1");

    SynthResult out;
    MemoryTrace& trace = out.trace;
    auto enter = [&trace](int bb) { trace.records.push_back(TraceRecord::block(bb)); };
    auto load = [&trace](std::uint64_t addr) {
        trace.records.push_back(TraceRecord::access(addr, false));
    };
    auto store = [&trace](std::uint64_t addr) {
        trace.records.push_back(TraceRecord::access(addr, true));
    };
    auto guard = [](std::uint64_t accesses) {
        if (accesses > kMaxSynthAccesses)
            throw Error(ErrorKind::guardrail,
                        "kernel would generate " + std::to_string(accesses) +
                            " accesses, limit is " + std::to_string(kMaxSynthAccesses) +
                            "; choose smaller sizes");
    };

    using detail::Poly;
    const std::uint32_t elem = spec.element_bytes;

    switch (spec.kind) {
    case KernelKind::matmul: {
        // C[n x m] = A[n x l] * B[l x m]; C is zeroed first, mirroring the
        // usual two-phase source. With only "n" given, l and m are tied to n.
        const std::uint64_t n = size_of("n", 0);
        if (n == 0) throw Error(ErrorKind::invariant, "matmul requires size n");
        if (spec.params.size() != 1 && spec.params.size() != 3)
            throw Error(ErrorKind::invariant, "matmul takes either n or n,l,m");
        const std::uint64_t l = size_of("l", n);
        const std::uint64_t m = size_of("m", n);
        const bool tied = spec.params.size() == 1;
        guard(n * m + 4 * n * m * l);

        out.model.input_params = {"n"};
        if (!tied) out.model.input_params = {"n", "l", "m"};
        const Poly pn = detail::pvar("n");
        const Poly pl = tied ? pn : detail::pvar("l");
        const Poly pm = tied ? pn : detail::pvar("m");
        const Poly one = detail::pconst(1.0);
        const Poly pnm = detail::pmul(pn, pm);
        const Poly pnml = detail::pmul(pnm, pl);

        const Poly counts[22] = {
            one,                                  // 0  zero-phase i init
            detail::padd(pn, one),                // 1  zero-phase i cond
            pn,                                   // 2  zero-phase j init
            detail::pmul(pn, detail::padd(pm, one)), // 3  zero-phase j cond
            pnm,                                  // 4  zero-phase body (store C)
            pnm,                                  // 5  zero-phase j incr
            pn,                                   // 6  zero-phase j end
            pn,                                   // 7  zero-phase i incr
            one,                                  // 8  zero-phase i end
            one,                                  // 9  i init
            detail::padd(pn, one),                // 10 i cond
            pn,                                   // 11 j init
            detail::pmul(pn, detail::padd(pm, one)), // 12 j cond
            pnm,                                  // 13 k init
            detail::pmul(pnm, detail::padd(pl, one)), // 14 k cond
            pnml,                                 // 15 k body (the kernel)
            pnml,                                 // 16 k incr
            pnm,                                  // 17 k end
            pnm,                                  // 18 j incr
            pn,                                   // 19 j end
            pn,                                   // 20 i incr
            one,                                  // 21 i end
        };

        Graphlet zero_body = detail::chain({iclass::iadd, iclass::store, iclass::br});
        Graphlet kernel_body;
        kernel_body.vertices = {{0, iclass::load},  {1, iclass::load}, {2, iclass::load},
                                {3, iclass::fmul},  {4, iclass::fadd}, {5, iclass::store},
                                {6, iclass::iadd},  {7, iclass::br}};
        kernel_body.edges = {{0, 3}, {1, 3}, {2, 4}, {3, 4}, {4, 5}, {5, 7}, {6, 7}};

        for (int id = 0; id < 22; ++id) {
            BasicBlockModel bb;
            bb.id = id;
            switch (id) {
            case 0: case 9: case 2: case 11: case 13: bb.graphlet = detail::loop_init(); break;
            case 1: case 3: case 10: case 12: case 14: bb.graphlet = detail::loop_cond(); break;
            case 5: case 7: case 16: case 18: case 20: bb.graphlet = detail::loop_incr(); break;
            case 6: case 8: case 17: case 19: case 21: bb.graphlet = detail::loop_end(); break;
            case 4: bb.graphlet = zero_body; break;
            case 15: bb.graphlet = kernel_body; break;
            }
            bb.count = std::uint64_t{0}; // replaced below from ground truth
            out.model.blocks.push_back(std::move(bb));
        }

        const double dn = static_cast<double>(n);
        const double dl = static_cast<double>(l);
        const double dm = static_cast<double>(m);
        out.model.cfg_edges = {
            {0, 1, 1.0, {}},
            {1, 2, dn / (dn + 1.0), {}},   {1, 8, 1.0 / (dn + 1.0), {}},
            {2, 3, 1.0, {}},
            {3, 4, dm / (dm + 1.0), {}},   {3, 6, 1.0 / (dm + 1.0), {}},
            {4, 5, 1.0, {}},               {5, 3, 1.0, {}},
            {6, 7, 1.0, {}},               {7, 1, 1.0, {}},
            {8, 9, 1.0, {}},
            {9, 10, 1.0, {}},
            {10, 11, dn / (dn + 1.0), {}}, {10, 21, 1.0 / (dn + 1.0), {}},
            {11, 12, 1.0, {}},
            {12, 13, dm / (dm + 1.0), {}}, {12, 19, 1.0 / (dm + 1.0), {}},
            {13, 14, 1.0, {}},
            {14, 15, dl / (dl + 1.0), {}}, {14, 17, 1.0 / (dl + 1.0), {}},
            {15, 16, 1.0, {}},             {16, 14, 1.0, {}},
            {17, 18, 1.0, {}},             {18, 12, 1.0, {}},
            {19, 20, 1.0, {}},             {20, 10, 1.0, {}},
        };

        const auto A = detail::array_region(0, l, elem);
        const auto B = detail::array_region(1, m, elem);
        const auto C = detail::array_region(2, m, elem);

        enter(0);
        enter(1);
        for (std::uint64_t i = 0; i < n; ++i) {
            enter(2);
            enter(3);
            for (std::uint64_t j = 0; j < m; ++j) {
                enter(4);
                store(C.at(i, j));
                enter(5);
                enter(3);
            }
            enter(6);
            enter(7);
            enter(1);
        }
        enter(8);

        enter(9);
        enter(10);
        for (std::uint64_t i = 0; i < n; ++i) {
            enter(11);
            enter(12);
            for (std::uint64_t j = 0; j < m; ++j) {
                enter(13);
                enter(14);
                for (std::uint64_t k = 0; k < l; ++k) {
                    enter(15);
                    load(A.at(i, k));
                    load(B.at(k, j));
                    load(C.at(i, j));
                    store(C.at(i, j));
                    enter(16);
                    enter(14);
                }
                enter(17);
                enter(18);
                enter(12);
            }
            enter(19);
            enter(20);
            enter(10);
        }
        enter(21);

        for (int id = 0; id < 22; ++id)
            out.ground_truth_counts.emplace(id, detail::to_model(counts[id]));
        break;
    }

    case KernelKind::saxpy: {
        // y[i] = a * x[i] + y[i]
        const std::uint64_t n = size_of("n", 0);
        if (n == 0) throw Error(ErrorKind::invariant, "saxpy requires size n");
        guard(3 * n);

        out.model.input_params = {"n"};
        const Poly pn = detail::pvar("n");
        const Poly one = detail::pconst(1.0);
        const Poly counts[5] = {one, detail::padd(pn, one), pn, pn, one};

        Graphlet body;
        body.vertices = {{0, iclass::load}, {1, iclass::load}, {2, iclass::fmul},
                         {3, iclass::fadd}, {4, iclass::store}, {5, iclass::br}};
        body.edges = {{0, 2}, {1, 3}, {2, 3}, {3, 4}, {4, 5}};

        for (int id = 0; id < 5; ++id) {
            BasicBlockModel bb;
            bb.id = id;
            switch (id) {
            case 0: bb.graphlet = detail::loop_init(); break;
            case 1: bb.graphlet = detail::loop_cond(); break;
            case 2: bb.graphlet = body; break;
            case 3: bb.graphlet = detail::loop_incr(); break;
            case 4: bb.graphlet = detail::loop_end(); break;
            }
            out.model.blocks.push_back(std::move(bb));
        }
        const double dn = static_cast<double>(n);
        out.model.cfg_edges = {
            {0, 1, 1.0, {}},
            {1, 2, dn / (dn + 1.0), {}},
            {1, 4, 1.0 / (dn + 1.0), {}},
            {2, 3, 1.0, {}},
            {3, 1, 1.0, {}},
        };

        const auto X = detail::array_region(0, 1, elem);
        const auto Y = detail::array_region(1, 1, elem);
        enter(0);
        enter(1);
        for (std::uint64_t i = 0; i < n; ++i) {
            enter(2);
            load(X.at(i));
            load(Y.at(i));
            store(Y.at(i));
            enter(3);
            enter(1);
        }
        enter(4);

        for (int id = 0; id < 5; ++id)
            out.ground_truth_counts.emplace(id, detail::to_model(counts[id]));
        break;
    }

    case KernelKind::stencil2d: {
        // out[i][j] = c * (in[i][j] + in[i-1][j] + in[i+1][j] + in[i][j-1]
        //                  + in[i][j+1]) over the interior of an n x n grid
        const std::uint64_t n = size_of("n", 0);
        if (n < 2) throw Error(ErrorKind::invariant, "stencil2d requires size n >= 2");
        const std::uint64_t inner = n - 2;
        guard(6 * inner * inner);

        out.model.input_params = {"n"};
        const Poly pn = detail::pvar("n");
        const Poly one = detail::pconst(1.0);
        const Poly pinner = detail::padd(pn, detail::pconst(-2.0));      // n-2
        const Poly pcond = detail::padd(pn, detail::pconst(-1.0));       // n-1
        const Poly pbody = detail::pmul(pinner, pinner);                 // (n-2)^2
        const Poly pjcond = detail::pmul(pinner, pcond);                 // (n-2)(n-1)
        const Poly counts[9] = {one, pcond, pinner, pjcond, pbody, pbody,
                                pinner, pinner, one};

        Graphlet body;
        body.vertices = {{0, iclass::load}, {1, iclass::load}, {2, iclass::load},
                         {3, iclass::load}, {4, iclass::load}, {5, iclass::fadd},
                         {6, iclass::fadd}, {7, iclass::fadd}, {8, iclass::fadd},
                         {9, iclass::fmul}, {10, iclass::store}, {11, iclass::br}};
        body.edges = {{0, 5}, {1, 5}, {2, 6}, {5, 6}, {3, 7}, {6, 7},
                      {4, 8}, {7, 8}, {8, 9}, {9, 10}, {10, 11}};

        for (int id = 0; id < 9; ++id) {
            BasicBlockModel bb;
            bb.id = id;
            switch (id) {
            case 0: case 2: bb.graphlet = detail::loop_init(); break;
            case 1: case 3: bb.graphlet = detail::loop_cond(); break;
            case 4: bb.graphlet = body; break;
            case 5: case 7: bb.graphlet = detail::loop_incr(); break;
            case 6: case 8: bb.graphlet = detail::loop_end(); break;
            }
            out.model.blocks.push_back(std::move(bb));
        }
        const double di = static_cast<double>(inner);
        out.model.cfg_edges = {
            {0, 1, 1.0, {}},
            {1, 2, di / (di + 1.0), {}},
            {1, 8, 1.0 / (di + 1.0), {}},
            {2, 3, 1.0, {}},
            {3, 4, di / (di + 1.0), {}},
            {3, 6, 1.0 / (di + 1.0), {}},
            {4, 5, 1.0, {}},
            {5, 3, 1.0, {}},
            {6, 7, 1.0, {}},
            {7, 1, 1.0, {}},
        };

        const auto in = detail::array_region(0, n, elem);
        const auto grid_out = detail::array_region(1, n, elem);
        enter(0);
        enter(1);
        for (std::uint64_t i = 1; i + 1 < n; ++i) {
            enter(2);
            enter(3);
            for (std::uint64_t j = 1; j + 1 < n; ++j) {
                enter(4);
                load(in.at(i, j));
                load(in.at(i - 1, j));
                load(in.at(i + 1, j));
                load(in.at(i, j - 1));
                load(in.at(i, j + 1));
                store(grid_out.at(i, j));
                enter(5);
                enter(3);
            }
            enter(6);
            enter(7);
            enter(1);
        }
        enter(8);

        for (int id = 0; id < 9; ++id)
            out.ground_truth_counts.emplace(id, detail::to_model(counts[id]));
        break;
    }
    }

    // literal counts at the generated sizes come straight from the truth
    std::map<std::string, double> point;
    for (const auto& [k, v] : spec.params) point[k] = static_cast<double>(v);
    for (BasicBlockModel& bb : out.model.blocks)
        bb.count = out.ground_truth_counts.at(bb.id).evaluate_count(point);
    return out;
}

}  // namespace bbcast
