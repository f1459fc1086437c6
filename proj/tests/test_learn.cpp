#include <catch2/catch_amalgamated.hpp>

#include "bbcast/learn.hpp"
#include "bbcast/synth.hpp"
#include "bbcast/trace.hpp"
#include "helpers.hpp"

using namespace bbcast;

namespace {

TrainingSet grid1(const std::vector<double>& ns, double (*f)(double)) {
    TrainingSet ts;
    ts.param_names = {"n"};
    for (double n : ns) {
        ts.points.push_back({n});
        ts.targets.push_back(f(n));
    }
    return ts;
}

std::size_t nonzero_weights(const ScalingModel& m) {
    std::size_t n = 0;
    for (double w : m.weights) n += (w != 0.0);
    return n;
}

}  // namespace

TEST_CASE("feature enumeration for one parameter") {
    const auto feats = build_features({"n"}, 3);
    REQUIRE(feats.size() == 4);
    CHECK(feats[0].str() == "1");
    CHECK(feats[1].str() == "n");
    CHECK(feats[2].str() == "n*n");
    CHECK(feats[3].str() == "n*n*n");
}

TEST_CASE("feature enumeration for two parameters") {
    const auto feats = build_features({"n", "k"}, 2);
    REQUIRE(feats.size() == 6);
    CHECK(feats[0].str() == "1");
    CHECK(feats[1].str() == "n");
    CHECK(feats[2].str() == "k");
    CHECK(feats[3].str() == "n*n");
    CHECK(feats[4].str() == "k*n"); // factors are kept sorted inside a term
    CHECK(feats[5].str() == "k*k");
}

TEST_CASE("feature count follows stars and bars") {
    auto choose = [](std::uint64_t n, std::uint64_t k) {
        std::uint64_t r = 1;
        for (std::uint64_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
        return r;
    };
    std::vector<std::string> params = {"a", "b", "c", "d"};
    for (std::size_t p = 1; p <= 4; ++p)
        for (int d = 1; d <= 4; ++d) {
            std::vector<std::string> use(params.begin(), params.begin() + p);
            CHECK(build_features(use, d).size() == choose(p + d, d));
        }
}

TEST_CASE("reciprocal flag appends 1/param terms") {
    const auto feats = build_features({"n"}, 2, true);
    REQUIRE(feats.size() == 4);
    CHECK(feats.back().str() == "1/n");
    CHECK(feats.back().has_reciprocal());
}

TEST_CASE("recovers n^2 - 3n + 2 and extrapolates to n = 4096") {
    const TrainingSet ts =
        grid1({4, 6, 8, 10, 12}, [](double n) { return n * n - 3 * n + 2; });
    const ScalingModel m = fit(ts, build_features({"n"}, 3), 0.0);
    REQUIRE(m.feature_terms.size() == 4);
    CHECK(m.intercept == Catch::Approx(2.0).margin(1e-6));
    CHECK(m.weights[1] == Catch::Approx(-3.0).margin(1e-6));
    CHECK(m.weights[2] == Catch::Approx(1.0).margin(1e-6));
    CHECK(m.weights[3] == Catch::Approx(0.0).margin(1e-6));
    CHECK(m.evaluate_count({{"n", 4096.0}}) == 16764930ull);
}

TEST_CASE("constant target becomes pure intercept") {
    for (double penalty : {0.0, 1e-6, 1e-2}) {
        const TrainingSet ts = grid1({2, 4, 8, 16}, [](double) { return 7.0; });
        const ScalingModel m = fit(ts, build_features({"n"}, 3), penalty);
        CHECK(m.intercept == Catch::Approx(7.0).margin(1e-12));
        CHECK(nonzero_weights(m) == 0);
    }
}

TEST_CASE("k*n^2 over a 3x3 grid is recovered sparsely") {
    TrainingSet ts;
    ts.param_names = {"n", "k"};
    for (double n : {2.0, 4.0, 8.0})
        for (double k : {2.0, 4.0, 8.0}) {
            ts.points.push_back({n, k});
            ts.targets.push_back(k * n * n);
        }
    const auto feats = build_features({"n", "k"}, 3);
    const ScalingModel m = fit(ts, feats, 1e-6);
    std::size_t target_idx = feats.size();
    for (std::size_t j = 0; j < feats.size(); ++j)
        if (feats[j].str() == "k*n*n") target_idx = j;
    REQUIRE(target_idx < feats.size());
    CHECK(m.weights[target_idx] == Catch::Approx(1.0).margin(1e-3));
    CHECK(nonzero_weights(m) == 1);
    CHECK(std::abs(m.intercept) < 1e-3);
}

TEST_CASE("non-finite targets are a data error") {
    TrainingSet ts = grid1({1, 2, 3}, [](double n) { return n; });
    ts.targets[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(fit(ts, build_features({"n"}, 2), 0.0), Error);
}

TEST_CASE("fewer points than features is allowed") {
    const TrainingSet ts = grid1({3, 5}, [](double n) { return 2 * n; });
    const ScalingModel m = fit(ts, build_features({"n"}, 3), 1e-8);
    CHECK(m.evaluate({{"n", 3.0}}) == Catch::Approx(6.0).margin(1e-4));
    CHECK(m.evaluate({{"n", 5.0}}) == Catch::Approx(10.0).margin(1e-4));
}

TEST_CASE("noise-free sparse polynomials are recovered exactly") {
    testing::Rng rng(1234);
    const std::vector<std::string> all_params = {"a", "b", "c"};
    for (int iter = 0; iter < 25; ++iter) {
        const std::size_t nparams = 1 + rng.below(3);
        std::vector<std::string> params(all_params.begin(),
                                        all_params.begin() + nparams);
        const auto feats = build_features(params, 3);
        std::vector<double> truth(feats.size(), 0.0);
        const int active = 1 + static_cast<int>(rng.below(3));
        for (int i = 0; i < active; ++i)
            truth[rng.below(feats.size())] =
                static_cast<double>(1 + rng.below(9)) * (rng.below(2) ? 1.0 : -1.0);

        TrainingSet ts;
        ts.param_names = params;
        std::vector<double> axis = {1, 2, 3, 4, 5};
        std::vector<std::size_t> idx(nparams, 0);
        while (true) {
            std::vector<double> point;
            for (std::size_t p = 0; p < nparams; ++p) point.push_back(axis[idx[p]]);
            std::map<std::string, double> named;
            for (std::size_t p = 0; p < nparams; ++p) named[params[p]] = point[p];
            double y = 0.0;
            for (std::size_t j = 0; j < feats.size(); ++j)
                y += truth[j] * feats[j].evaluate(named);
            ts.points.push_back(point);
            ts.targets.push_back(y);
            std::size_t p = 0;
            while (p < nparams && ++idx[p] == axis.size()) idx[p++] = 0;
            if (p == nparams) break;
        }

        const ScalingModel m = fit(ts, feats, 1e-8);
        CHECK(std::abs(m.intercept - truth[0]) < 1e-6);
        for (std::size_t j = 1; j < feats.size(); ++j)
            REQUIRE(std::abs(m.weights[j] - truth[j]) < 1e-6);
    }
}

TEST_CASE("nonzero count is monotone along a penalty ladder") {
    TrainingSet ts;
    ts.param_names = {"n", "k"};
    for (double n : {2.0, 3.0, 5.0, 8.0})
        for (double k : {2.0, 4.0, 7.0}) {
            ts.points.push_back({n, k});
            ts.targets.push_back(3 * n * n + 0.5 * n * k + 11);
        }
    const auto feats = build_features({"n", "k"}, 3);
    std::size_t prev = feats.size();
    for (double penalty : {1e-8, 1e-4, 1e-2, 1.0, 100.0, 1e4, 1e6}) {
        const std::size_t nz = nonzero_weights(fit(ts, feats, penalty));
        CHECK(nz <= prev);
        prev = nz;
    }
}

TEST_CASE("fit is bit-reproducible") {
    TrainingSet ts;
    ts.param_names = {"n", "k"};
    testing::Rng rng(9);
    for (int i = 0; i < 12; ++i) {
        const double n = 1.0 + static_cast<double>(rng.below(16));
        const double k = 1.0 + static_cast<double>(rng.below(8));
        ts.points.push_back({n, k});
        ts.targets.push_back(n * k + 0.3 * n + rng.unit());
    }
    const auto feats = build_features({"n", "k"}, 3);
    const ScalingModel a = fit(ts, feats, 1e-5);
    const ScalingModel b = fit(ts, feats, 1e-5);
    CHECK(a.intercept == b.intercept);
    for (std::size_t j = 0; j < a.weights.size(); ++j) REQUIRE(a.weights[j] == b.weights[j]);
}

TEST_CASE("block count fitting: constants short-circuit, others fit") {
    ProgramModel model;
    for (int id = 0; id < 2; ++id) {
        BasicBlockModel bb;
        bb.id = id;
        bb.graphlet.vertices = {{0, iclass::br}};
        model.blocks.push_back(bb);
    }
    model.input_params = {"n"};
    std::map<int, TrainingSet> obs;
    obs[0] = grid1({4, 6, 8, 10}, [](double) { return 1.0; });         // entry block
    obs[1] = grid1({4, 6, 8, 10}, [](double n) { return n * n * n; }); // loop body
    const auto models = fit_block_counts(model, obs, 3, 1e-8);
    CHECK(models.at(0).is_constant());
    CHECK(models.at(0).intercept == 1.0);
    CHECK_FALSE(models.at(1).is_constant());
    CHECK(models.at(1).evaluate_count({{"n", 20.0}}) == 8000);
}

TEST_CASE("block count fitting requires observations for every block") {
    ProgramModel model;
    BasicBlockModel bb;
    bb.id = 0;
    bb.graphlet.vertices = {{0, iclass::br}};
    model.blocks.push_back(bb);
    CHECK_THROWS_AS(fit_block_counts(model, {}, 3, 0.0), Error);
}

TEST_CASE("the nine kernel count forms fit and extrapolate exactly") {
    // quadratics in n plus k-scaled terms, the shapes a 9-block jacobi-style
    // kernel produces; fit on a small grid, evaluate at n=4096, k=10
    struct Row {
        const char* name;
        double (*f)(double, double);
    };
    const Row rows[] = {
        {"n^2", [](double n, double) { return n * n; }},
        {"n^2-n-1", [](double n, double) { return n * n - n - 1; }},
        {"n^2-2n+1", [](double n, double) { return n * n - 2 * n + 1; }},
        {"n^2-3n+2", [](double n, double) { return n * n - 3 * n + 2; }},
        {"n^2/2", [](double n, double) { return n * n / 2; }},
        {"k*n^2", [](double n, double k) { return k * n * n; }},
        {"k*n^2-n^2", [](double n, double k) { return k * n * n - n * n; }},
        {"k*n^2 (again)", [](double n, double k) { return k * n * n; }},
        {"k*n", [](double n, double k) { return k * n; }},
    };
    const auto feats = build_features({"n", "k"}, 3);
    for (const Row& row : rows) {
        TrainingSet ts;
        ts.param_names = {"n", "k"};
        for (double n : {4.0, 6.0, 8.0, 10.0, 12.0})
            for (double k : {2.0, 3.0, 5.0, 7.0}) { // 4 levels keep k^3 nondegenerate
                ts.points.push_back({n, k});
                ts.targets.push_back(row.f(n, k));
            }
        const ScalingModel m = fit(ts, feats, 1e-10);
        const double want = row.f(4096.0, 10.0);
        INFO(row.name);
        CHECK(m.evaluate({{"n", 4096.0}, {"k", 10.0}}) ==
              Catch::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("loop back-edge probability extrapolates via reciprocal features") {
    TrainingSet ts;
    ts.param_names = {"n"};
    for (double n : {4.0, 8.0, 16.0}) {
        ts.points.push_back({n});
        ts.targets.push_back((n - 1.0) / n);
    }
    const auto models =
        fit_branch_probs({{{1, 2}, ts}}, 2, 1e-10, /*reciprocal=*/true);
    const ScalingModel& m = models.at({1, 2});
    const double p = m.evaluate_probability({{"n", 4096.0}});
    CHECK(p == Catch::Approx(4095.0 / 4096.0).margin(1e-3));
}

TEST_CASE("always-taken edges become the constant 1") {
    TrainingSet ts;
    ts.param_names = {"n"};
    for (double n : {2.0, 4.0, 8.0}) {
        ts.points.push_back({n});
        ts.targets.push_back(1.0);
    }
    const auto models = fit_branch_probs({{{0, 1}, ts}}, 3, 1e-6);
    CHECK(models.at({0, 1}).is_constant());
    CHECK(models.at({0, 1}).intercept == 1.0);
}

TEST_CASE("predicted outgoing probabilities renormalize to exactly one") {
    ProgramModel model;
    for (int id = 0; id < 3; ++id) {
        BasicBlockModel bb;
        bb.id = id;
        bb.graphlet.vertices = {{0, iclass::br}};
        model.blocks.push_back(bb);
    }
    model.input_params = {"n"};
    ScalingModel noisy; // deliberately overshoots 1 so clamping matters
    noisy.feature_terms = {Monomial{{"n"}}};
    noisy.weights = {0.01};
    noisy.intercept = 0.95;
    model.cfg_edges = {{0, 1, {}, noisy}, {0, 2, 0.2, {}}};
    const auto probs = predict_branch_probs(model, {{"n", 100.0}});
    const double sum = probs.at({0, 1}) + probs.at({0, 2});
    CHECK(sum == Catch::Approx(1.0).margin(1e-15));
    CHECK(probs.at({0, 1}) == Catch::Approx(1.0 / 1.2));
}

TEST_CASE("reuse bin fitting: constants pass through, growth is learned") {
    std::vector<std::pair<std::vector<double>, AlignedBins>> obs;
    for (double n : {4.0, 6.0, 8.0, 10.0}) {
        AlignedBins bins;
        bins.mean_distance = {2.0, n * n / 2.0, n * n};
        bins.probability = {0.3, 0.3, 0.3};
        bins.infinite_probability = 0.1;
        bins.total_accesses = static_cast<std::uint64_t>(n * n);
        obs.emplace_back(std::vector<double>{n}, bins);
    }
    const BinModelSet set = fit_reuse_bins({"n"}, obs, 3, 1e-8);
    REQUIRE(set.nbins == 3);
    CHECK(set.distance_models[0].is_constant());
    CHECK(set.distance_models[0].intercept == 2.0);
    CHECK(set.distance_models[1].evaluate({{"n", 32.0}}) ==
          Catch::Approx(512.0).epsilon(1e-6));
    CHECK(set.distance_models[2].evaluate({{"n", 32.0}}) ==
          Catch::Approx(1024.0).epsilon(1e-6));

    const ReuseProfile predicted = set.predict_profile({{"n", 32.0}});
    CHECK(predicted.probability_sum() == Catch::Approx(1.0).margin(1e-9));
    CHECK(predicted.infinite_probability() == Catch::Approx(0.1));
}

TEST_CASE("a quadratically growing matmul bin extrapolates within 2 percent") {
    // raw-address profiles keep the structural distance clusters separated at
    // small sizes; the modal cluster grows as n^2 + 3n
    std::vector<std::pair<std::vector<double>, AlignedBins>> obs;
    for (std::uint64_t n : {4ull, 6ull, 8ull, 10ull})
        obs.emplace_back(
            std::vector<double>{static_cast<double>(n)},
            quantile_bins(whole_program_profile(
                              generate({KernelKind::matmul, {{"n", n}}, 8}).trace, 0),
                          40));
    const BinModelSet set = fit_reuse_bins({"n"}, obs, 3, 1e-8);
    const AlignedBins truth = quantile_bins(
        whole_program_profile(generate({KernelKind::matmul, {{"n", 40}}, 8}).trace, 0),
        40);

    bool found_quadratic_bin = false;
    for (std::size_t j = 0; j < 40; ++j) {
        const double at4 = obs[0].second.mean_distance[j];
        const double at40 = set.distance_models[j].evaluate({{"n", 40.0}});
        if (at4 <= 0.0 || at40 / at4 < 50.0) continue; // not n^2-like growth
        const double measured = truth.mean_distance[j];
        if (measured > 0.0 && std::abs(at40 - measured) / measured <= 0.02)
            found_quadratic_bin = true;
    }
    CHECK(found_quadratic_bin);
}

TEST_CASE("misaligned bin counts are a data error") {
    AlignedBins a;
    a.mean_distance = {1.0, 2.0};
    a.probability = {0.5, 0.5};
    AlignedBins b;
    b.mean_distance = {1.0};
    b.probability = {1.0};
    CHECK_THROWS_AS(fit_reuse_bins({"n"}, {{{2.0}, a}, {{4.0}, b}}, 2, 0.0), Error);
}
