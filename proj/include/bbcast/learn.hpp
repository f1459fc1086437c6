#pragma once

// Input-scaling regression: L1-regularized multi-linear models mapping
// program input parameters to block execution counts, branch probabilities
// and binned reuse distances, learned from small-instance observations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bbcast/model.hpp"
#include "bbcast/trace.hpp"

namespace bbcast {

struct TrainingSet {
    std::vector<std::string> param_names;
    std::vector<std::vector<double>> points; // rows aligned with param_names
    std::vector<double> targets;
};

// All monomials over the parameters of total degree <= max_degree, intercept
// term first, ordered by degree then lexicographically by parameter position.
// The optional reciprocal extension appends one 1/param term per parameter.
inline std::vector<Monomial> build_features(const std::vector<std::string>& params,
                                            int max_degree, bool reciprocal = false) {
    if (max_degree < 1)
        throw Error(ErrorKind::invariant, "max_degree must be >= 1");
    std::vector<Monomial> out;
    std::vector<std::size_t> picks;
    auto emit = [&]() {
        Monomial m;
        for (std::size_t idx : picks) m.factors.push_back(params[idx]);
        std::sort(m.factors.begin(), m.factors.end()); // canonical spelling
        out.push_back(std::move(m));
    };
    // non-decreasing index sequences of each length enumerate every multiset
    auto rec = [&](auto&& self, std::size_t from, int remaining) -> void {
        if (remaining == 0) {
            emit();
            return;
        }
        for (std::size_t i = from; i < params.size(); ++i) {
            picks.push_back(i);
            self(self, i, remaining - 1);
            picks.pop_back();
        }
    };
    for (int degree = 0; degree <= max_degree; ++degree) rec(rec, 0, degree);
    if (reciprocal)
        for (const std::string& p : params)
            out.push_back(Monomial{{"1/" + p}});
    return out;
}

namespace detail {

inline double soft_threshold(double x, double gamma) {
    if (x > gamma) return x - gamma;
    if (x < -gamma) return x + gamma;
    return 0.0;
}

// Least-squares machinery for the KKT refinement: Householder QR of the
// active columns, then triangular solves of  (X'X) b = X'y - shift.
// Returns nullopt when the active columns are rank deficient.
inline std::optional<std::vector<double>> solve_shifted_normal_equations(
    const std::vector<const std::vector<double>*>& columns,
    const std::vector<double>& y, const std::vector<double>& shift) {
    const std::size_t n = y.size();
    const std::size_t m = columns.size();
    if (m == 0 || m > n) return std::nullopt;

    std::vector<std::vector<double>> a(m);
    for (std::size_t j = 0; j < m; ++j) a[j] = *columns[j];
    std::vector<double> qy = y;

    std::vector<double> rdiag(m, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
        double norm = 0.0;
        for (std::size_t i = k; i < n; ++i) norm += a[k][i] * a[k][i];
        norm = std::sqrt(norm);
        if (norm == 0.0) return std::nullopt;
        if (a[k][k] < 0.0) norm = -norm;
        for (std::size_t i = k; i < n; ++i) a[k][i] /= norm;
        a[k][k] += 1.0;
        for (std::size_t j = k + 1; j <= m; ++j) {
            std::vector<double>& col = j < m ? a[j] : qy;
            double dot = 0.0;
            for (std::size_t i = k; i < n; ++i) dot += a[k][i] * col[i];
            dot /= a[k][k];
            for (std::size_t i = k; i < n; ++i) col[i] -= dot * a[k][i];
        }
        rdiag[k] = -norm;
    }
    double rmax = 0.0;
    for (double d : rdiag) rmax = std::max(rmax, std::abs(d));
    for (double d : rdiag)
        if (std::abs(d) < 1e-12 * rmax) return std::nullopt;

    // R is stored above the diagonal of a (columns j hold R[0..j-1][j]),
    // diagonal in rdiag. Forward solve R' u = shift, then back solve
    // R b = qy - u.
    std::vector<double> u(m, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
        double s = shift[k];
        for (std::size_t i = 0; i < k; ++i) s -= a[k][i] * u[i];
        u[k] = s / rdiag[k];
    }
    std::vector<double> b(m, 0.0);
    for (std::size_t k = m; k-- > 0;) {
        double s = qy[k] - u[k];
        for (std::size_t j = k + 1; j < m; ++j) s -= a[j][k] * b[j];
        b[k] = s / rdiag[k];
    }
    return b;
}

}  // namespace detail

// Lasso fit by cyclic coordinate descent, minimizing
//   sum_i (target_i - model(point_i))^2 + l1_penalty * sum_j |alpha_j|.
// Features are standardized internally and coefficients reported in raw
// scale; the intercept is unpenalized. Convergence at 1e-10 on the raw
// coefficient change, at most 1e5 sweeps, deterministic sweep order.
inline ScalingModel fit(const TrainingSet& training, const std::vector<Monomial>& features,
                        double l1_penalty) {
    const std::size_t n = training.points.size();
    if (n < 2)
        throw Error(ErrorKind::invariant, "training set needs at least 2 points");
    if (training.targets.size() != n)
        throw Error(ErrorKind::invariant, "training targets do not match points");
    if (l1_penalty < 0.0)
        throw Error(ErrorKind::invariant, "l1_penalty must be nonnegative");
    for (double t : training.targets)
        if (!std::isfinite(t))
            throw Error(ErrorKind::invariant, "training target is not finite");

    // evaluate the design matrix
    const std::size_t nf = features.size();
    std::vector<std::vector<double>> cols(nf, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        if (training.points[i].size() != training.param_names.size())
            throw Error(ErrorKind::invariant, "training point arity mismatch");
        std::map<std::string, double> point;
        for (std::size_t k = 0; k < training.param_names.size(); ++k)
            point[training.param_names[k]] = training.points[i][k];
        for (std::size_t j = 0; j < nf; ++j) cols[j][i] = features[j].evaluate(point);
    }

    // standardize; constant columns fold into the intercept
    std::vector<double> mean(nf, 0.0), sigma(nf, 0.0);
    std::vector<bool> active(nf, false);
    for (std::size_t j = 0; j < nf; ++j) {
        double m = 0.0;
        for (double v : cols[j]) m += v;
        m /= static_cast<double>(n);
        double var = 0.0;
        for (double v : cols[j]) var += (v - m) * (v - m);
        var /= static_cast<double>(n);
        mean[j] = m;
        sigma[j] = std::sqrt(var);
        if (sigma[j] > 0.0) {
            active[j] = true;
            for (double& v : cols[j]) v = (v - m) / sigma[j];
        }
    }
    double target_mean = 0.0;
    for (double t : training.targets) target_mean += t;
    target_mean /= static_cast<double>(n);

    std::vector<double> residual(n);
    for (std::size_t i = 0; i < n; ++i) residual[i] = training.targets[i] - target_mean;

    // The penalty applies to standardized coefficients (the usual lasso
    // convention; a raw-scale 1-norm would let high-degree polynomial terms
    // with large column scales masquerade as cheap). Solved pathwise:
    // warm-started descent along a geometric penalty ladder down to the
    // requested penalty, so correlated features enter one at a time and
    // inactive ones stay at an exact zero instead of creeping along a flat
    // valley.
    const double z = static_cast<double>(n); // column norm^2 after standardization
    std::vector<double> beta(nf, 0.0);
    const int max_sweeps = 100000;
    const double tol = 1e-10;

    double lam_max = 0.0;
    for (std::size_t j = 0; j < nf; ++j) {
        if (!active[j]) continue;
        double rho = 0.0;
        for (std::size_t i = 0; i < n; ++i) rho += cols[j][i] * residual[i];
        lam_max = std::max(lam_max, 2.0 * std::abs(rho));
    }
    std::vector<double> ladder;
    if (lam_max > 0.0) {
        const double floor_lam = std::max(l1_penalty, lam_max * 1e-12);
        for (double lam = 0.5 * lam_max; lam > floor_lam; lam *= 0.2)
            ladder.push_back(lam);
    }
    ladder.push_back(l1_penalty);

    int sweeps_left = max_sweeps;
    for (std::size_t stage = 0; stage < ladder.size(); ++stage) {
        const double lam = ladder[stage];
        const bool last = stage + 1 == ladder.size();
        // intermediate stages only shepherd the active set; they get a short
        // budget so the full tolerance is spent at the requested penalty
        int stage_budget = last ? sweeps_left : std::min(sweeps_left, 500);
        while (stage_budget > 0 && sweeps_left > 0) {
            --stage_budget;
            --sweeps_left;
            double max_change = 0.0;
            for (std::size_t j = 0; j < nf; ++j) {
                if (!active[j]) continue;
                double rho = 0.0;
                const std::vector<double>& x = cols[j];
                for (std::size_t i = 0; i < n; ++i) rho += x[i] * residual[i];
                rho += z * beta[j];
                const double gamma = 0.5 * lam;
                const double next = detail::soft_threshold(rho, gamma) / z;
                const double delta = next - beta[j];
                if (delta != 0.0) {
                    for (std::size_t i = 0; i < n; ++i) residual[i] -= x[i] * delta;
                    beta[j] = next;
                }
                max_change = std::max(max_change, std::abs(delta));
            }
            if (max_change < tol) break;
        }
    }

    // KKT refinement: descent identifies the support, then the stationarity
    // system  x_j'(y - Xb) = gamma_j sign(b_j)  is solved exactly on it,
    // dropping entries whose solved sign disagrees. The refined point is
    // adopted only if it verifies as the optimum; otherwise the descent
    // iterate stands. This pins truly inactive features at an exact zero
    // instead of the slow creep cyclic descent leaves behind.
    {
        std::vector<std::size_t> support;
        for (std::size_t j = 0; j < nf; ++j)
            if (active[j] && beta[j] != 0.0) support.push_back(j);

        std::vector<double> target_centered(n);
        for (std::size_t i = 0; i < n; ++i)
            target_centered[i] = training.targets[i] - target_mean;

        auto gamma_of = [&](std::size_t) { return 0.5 * l1_penalty; };
        double corr_scale = 0.0;
        for (std::size_t j = 0; j < nf; ++j) {
            if (!active[j]) continue;
            double c = 0.0;
            for (std::size_t i = 0; i < n; ++i) c += cols[j][i] * target_centered[i];
            corr_scale = std::max(corr_scale, std::abs(c));
        }
        const double slack = 1e-7 * std::max(1.0, corr_scale);

        bool adopted = false;
        std::vector<double> refined;
        for (std::size_t round = 0; !support.empty() && round <= nf && !adopted; ++round) {
            std::vector<const std::vector<double>*> columns;
            std::vector<double> shift;
            for (std::size_t j : support) {
                columns.push_back(&cols[j]);
                shift.push_back(gamma_of(j) * (beta[j] > 0.0 ? 1.0 : -1.0));
            }
            const auto sol =
                detail::solve_shifted_normal_equations(columns, target_centered, shift);
            if (!sol) break;
            if (l1_penalty > 0.0) {
                std::vector<std::size_t> keep;
                for (std::size_t i = 0; i < support.size(); ++i)
                    if ((*sol)[i] * (beta[support[i]] > 0.0 ? 1.0 : -1.0) > 0.0)
                        keep.push_back(support[i]);
                if (keep.size() != support.size()) {
                    support = std::move(keep);
                    continue;
                }
            }
            // verify optimality of the candidate before adopting it
            std::vector<double> r = target_centered;
            for (std::size_t i = 0; i < support.size(); ++i)
                for (std::size_t row = 0; row < n; ++row)
                    r[row] -= cols[support[i]][row] * (*sol)[i];
            bool ok = true;
            for (std::size_t j = 0; j < nf && ok; ++j) {
                if (!active[j]) continue;
                double c = 0.0;
                for (std::size_t i = 0; i < n; ++i) c += cols[j][i] * r[i];
                const auto in_support =
                    std::find(support.begin(), support.end(), j) != support.end();
                if (!in_support) ok = std::abs(c) <= gamma_of(j) + slack;
            }
            if (ok) {
                refined.assign(nf, 0.0);
                for (std::size_t i = 0; i < support.size(); ++i)
                    refined[support[i]] = (*sol)[i];
                adopted = true;
            } else {
                break;
            }
        }
        if (adopted) beta = std::move(refined);
    }

    ScalingModel model;
    model.feature_terms = features;
    model.weights.assign(nf, 0.0);
    model.l1_penalty = l1_penalty;
    double intercept = target_mean;
    for (std::size_t j = 0; j < nf; ++j) {
        if (!active[j]) continue;
        model.weights[j] = beta[j] / sigma[j];
        intercept -= model.weights[j] * mean[j];
    }
    model.intercept = intercept;
    return model;
}

namespace detail {

inline bool all_equal(const std::vector<double>& v) {
    for (double x : v)
        if (x != v.front()) return false;
    return true;
}

}  // namespace detail

// One count model per basic block. Blocks whose observed counts never change
// across the input design become constants outright; the rest are fitted.
inline std::map<int, ScalingModel> fit_block_counts(
    const ProgramModel& model, const std::map<int, TrainingSet>& observations,
    int degree, double l1_penalty) {
    std::map<int, ScalingModel> out;
    for (const BasicBlockModel& bb : model.blocks) {
        auto it = observations.find(bb.id);
        if (it == observations.end())
            throw Error(ErrorKind::invariant,
                        "no count observations for block " + std::to_string(bb.id));
        const TrainingSet& ts = it->second;
        try {
            if (!ts.targets.empty() && detail::all_equal(ts.targets)) {
                out.emplace(bb.id, ScalingModel::constant(ts.targets.front()));
            } else {
                out.emplace(bb.id, fit(ts, build_features(ts.param_names, degree), l1_penalty));
            }
        } catch (const Error& e) {
            throw Error(e.kind(), "block " + std::to_string(bb.id) + ": " + e.what());
        }
    }
    return out;
}

// One probability model per CFG edge. Reciprocal features are included by
// default: loop exit probabilities behave like 1 - 1/n, which a plain
// polynomial can only chase with high degree.
inline std::map<std::pair<int, int>, ScalingModel> fit_branch_probs(
    const std::map<std::pair<int, int>, TrainingSet>& observations, int degree,
    double l1_penalty, bool reciprocal = true) {
    std::map<std::pair<int, int>, ScalingModel> out;
    for (const auto& [edge, ts] : observations) {
        try {
            if (!ts.targets.empty() && detail::all_equal(ts.targets)) {
                out.emplace(edge, ScalingModel::constant(ts.targets.front()));
            } else {
                out.emplace(edge,
                            fit(ts, build_features(ts.param_names, degree, reciprocal),
                                l1_penalty));
            }
        } catch (const Error& e) {
            throw Error(e.kind(), "edge " + std::to_string(edge.first) + "->" +
                                      std::to_string(edge.second) + ": " + e.what());
        }
    }
    return out;
}

// Evaluates fitted/literal branch probabilities at an input point, clamps
// them into [0,1] and renormalizes every outgoing-edge set to sum exactly 1.
inline std::map<std::pair<int, int>, double> predict_branch_probs(
    const ProgramModel& model, const std::map<std::string, double>& point) {
    std::map<std::pair<int, int>, double> raw;
    std::map<int, double> per_src;
    for (const CfgEdge& e : model.cfg_edges) {
        double p = 0.0;
        if (e.prob_model)
            p = e.prob_model->evaluate_probability(point);
        else if (e.prob)
            p = std::clamp(*e.prob, 0.0, 1.0);
        raw[{e.src, e.dst}] = p;
        per_src[e.src] += p;
    }
    std::map<int, int> out_degree;
    for (const CfgEdge& e : model.cfg_edges) ++out_degree[e.src];
    for (auto& [edge, p] : raw) {
        const double total = per_src[edge.first];
        if (total > 0.0)
            p /= total;
        else
            p = 1.0 / out_degree[edge.first]; // degenerate: spread uniformly
    }
    return raw;
}

// ---------------------------------------------------------------------------
// Binned reuse-distance extrapolation

// Per training input: the equal-mass bin probabilities to carry forward.
struct BinSnapshot {
    std::vector<double> point; // aligned with BinModelSet::param_names
    std::vector<double> probability;
    double infinite_probability = 0.0;
    std::uint64_t total_accesses = 0;
};

struct BinModelSet {
    std::size_t nbins = 0;
    std::vector<std::string> param_names;
    std::vector<ScalingModel> distance_models; // one per bin index
    std::vector<BinSnapshot> snapshots;

    // Predicted whole-program profile: bin mean distances from the fitted
    // models, probabilities carried from the nearest trained input point.
    ReuseProfile predict_profile(const std::map<std::string, double>& point) const {
        if (snapshots.empty() || distance_models.size() != nbins)
            throw Error(ErrorKind::invariant, "bin model set is empty");
        std::vector<double> at(param_names.size());
        for (std::size_t k = 0; k < param_names.size(); ++k) {
            auto it = point.find(param_names[k]);
            if (it == point.end())
                throw Error(ErrorKind::invariant,
                            "input point is missing parameter " + param_names[k]);
            at[k] = it->second;
        }
        const BinSnapshot* nearest = nullptr;
        double best = 0.0;
        for (const BinSnapshot& s : snapshots) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < at.size(); ++k)
                d2 += (s.point[k] - at[k]) * (s.point[k] - at[k]);
            if (!nearest || d2 < best) {
                nearest = &s;
                best = d2;
            }
        }

        std::map<std::uint64_t, double> mass;
        for (std::size_t j = 0; j < nbins; ++j) {
            const double p = nearest->probability[j];
            if (p <= 0.0) continue;
            double d = distance_models[j].evaluate(point);
            const std::uint64_t dist =
                d <= 0.0 ? 0 : static_cast<std::uint64_t>(std::floor(d + 0.5));
            mass[dist] += p;
        }
        if (nearest->infinite_probability > 0.0)
            mass[kInfiniteDistance] += nearest->infinite_probability;

        double sum = 0.0;
        for (const auto& [d, p] : mass) sum += p;
        std::vector<ReuseProfile::Bin> bins;
        bins.reserve(mass.size());
        for (const auto& [d, p] : mass) bins.push_back({d, p / sum});
        return ReuseProfile::from_bins(std::move(bins),
                                       nearest->total_accesses ? nearest->total_accesses : 1);
    }
};

// Fits one regression per bin index over aligned equal-mass bins, one
// observation row per input point. Bins whose mean distance never moves
// across the design pass through as constants.
inline BinModelSet fit_reuse_bins(
    const std::vector<std::string>& param_names,
    const std::vector<std::pair<std::vector<double>, AlignedBins>>& observations,
    int degree, double l1_penalty) {
    if (observations.size() < 2)
        throw Error(ErrorKind::invariant, "reuse-bin fitting needs at least 2 input points");
    const std::size_t nbins = observations.front().second.mean_distance.size();
    for (const auto& [point, bins] : observations)
        if (bins.mean_distance.size() != nbins || bins.probability.size() != nbins)
            throw Error(ErrorKind::invariant,
                        "reuse-bin observations disagree on bin count");

    BinModelSet out;
    out.nbins = nbins;
    out.param_names = param_names;
    const std::vector<Monomial> features = build_features(param_names, degree);
    for (std::size_t j = 0; j < nbins; ++j) {
        TrainingSet ts;
        ts.param_names = param_names;
        for (const auto& [point, bins] : observations) {
            ts.points.push_back(point);
            ts.targets.push_back(bins.mean_distance[j]);
        }
        double lo = ts.targets.front(), hi = ts.targets.front();
        for (double t : ts.targets) {
            lo = std::min(lo, t);
            hi = std::max(hi, t);
        }
        if (hi - lo <= 1e-9 * std::max(1.0, std::abs(hi)))
            out.distance_models.push_back(ScalingModel::constant(ts.targets.front()));
        else
            out.distance_models.push_back(fit(ts, features, l1_penalty));
    }
    for (const auto& [point, bins] : observations) {
        BinSnapshot snap;
        snap.point = point;
        snap.probability = bins.probability;
        snap.infinite_probability = bins.infinite_probability;
        snap.total_accesses = bins.total_accesses;
        out.snapshots.push_back(std::move(snap));
    }
    return out;
}

}  // namespace bbcast
