// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Fixtures are synthetic (seeded); oracles live in test_util.hpp and
// recompute everything through independent routes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "pillar/dataio.hpp"
#include "pillar/fisher.hpp"
#include "pillar/kernels.hpp"
#include "pillar/lp.hpp"
#include "pillar/mkl.hpp"
#include "pillar/pipeline.hpp"
#include "pillar/svm.hpp"
#include "test_util.hpp"

using namespace pillar;

namespace {

struct CriterionFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void expect(bool ok, const std::string& message) {
    if (!ok) throw CriterionFailure(message);
}

std::string fmt(double v) {
    std::ostringstream out;
    out.precision(12);
    out << v;
    return out.str();
}

// ---------------------------------------------------------------- fixtures

SyntheticDataset two_pillar_fixture() {
    SyntheticSpec spec;
    spec.n_samples = 400;
    spec.n_classes = 4;
    spec.seed = 7;
    spec.pillars.push_back({16, {0, 1}, 0.3});
    spec.pillars.push_back({16, {2, 3}, 0.3});
    return generate_synthetic_pillars(spec);
}

SyntheticDataset four_pillar_fixture() {
    SyntheticSpec spec;
    spec.n_samples = 400;
    spec.n_classes = 4;
    spec.seed = 9;
    spec.pillars.push_back({16, {0, 1}, 0.3});
    spec.pillars.push_back({16, {0, 1}, 0.45});
    spec.pillars.push_back({16, {2, 3}, 0.3});
    spec.pillars.push_back({16, {2, 3}, 0.45});
    return generate_synthetic_pillars(spec);
}

struct SplitKernels {
    std::vector<KernelMatrix> train;
    std::vector<Matrix64> test;
    LabelVector train_labels;
    std::vector<int> test_truth;
};

SplitKernels build_kernels(const SyntheticDataset& data, std::size_t split_index) {
    const SplitDefinition& split = data.splits[split_index];
    SplitKernels out;
    out.train_labels.n_classes = data.labels.n_classes;
    for (std::size_t i : split.train_indices) out.train_labels.labels.push_back(data.labels.labels[i]);
    for (std::size_t i : split.test_indices) out.test_truth.push_back(data.labels.labels[i]);
    for (std::size_t p = 0; p < data.pillars.size(); ++p) {
        const FeatureMatrix& pillar = data.pillars[p];
        FeatureMatrix train(split.train_indices.size(), pillar.n_dims);
        FeatureMatrix test(split.test_indices.size(), pillar.n_dims);
        for (std::size_t i = 0; i < split.train_indices.size(); ++i) {
            for (std::size_t d = 0; d < pillar.n_dims; ++d) {
                train.at(i, d) = pillar.at(split.train_indices[i], d);
            }
        }
        for (std::size_t i = 0; i < split.test_indices.size(); ++i) {
            for (std::size_t d = 0; d < pillar.n_dims; ++d) {
                test.at(i, d) = pillar.at(split.test_indices[i], d);
            }
        }
        const KernelParams params = KernelParams::rbf(gamma_heuristic(train, GammaMode::scale));
        KernelMatrix k = kernel_gram_self(train, params, 4);
        k.provenance.source_id = "p" + std::to_string(p);
        out.train.push_back(std::move(k));
        out.test.push_back(kernel_gram(test, train, params, 4));
    }
    return out;
}

FusionPlan fixture_plan(const testutil::TempDir& dir, const SyntheticDataset& data) {
    FusionPlan plan;
    for (std::size_t p = 0; p < data.pillars.size(); ++p) {
        const std::string name = "p" + std::to_string(p);
        write_feature_matrix(data.pillars[p], dir.file(name + ".plrf"));
        PlanPillar pillar;
        pillar.id = name;
        pillar.features = dir.file(name + ".plrf");
        pillar.normalization = KernelNormalization::unit_mean_diag;
        plan.pillars.push_back(std::move(pillar));
    }
    plan.mode = FusionMode::flat;
    plan.norm = MklNorm::l2;
    plan.seed = 7;
    return plan;
}

// --------------------------------------------------------------- criteria

void svm_oracle_equivalence() {
    for (std::uint64_t instance = 0; instance < 50; ++instance) {
        const std::size_t n = 8 + instance % 23;  // up to 30
        const FeatureMatrix x = testutil::random_features(n, 4, 10000 + instance);
        const KernelMatrix k = kernel_gram_self(x, KernelParams::rbf(0.5));
        const std::vector<signed char> y = testutil::random_signs(n, 20000 + instance);
        const double C = 100.0;

        const BinarySvmModel model = smo_train(k, y, C, 1e-8);
        expect(model.converged, "instance " + std::to_string(instance) + ": SMO did not converge");
        const double dual = dual_objective(model.alpha, y, k);
        const double oracle = testutil::qp_dual_oracle(k, y, C);
        const double denom = std::max(1.0, std::abs(oracle));
        expect(std::abs(dual - oracle) <= 1e-4 * denom,
               "instance " + std::to_string(instance) + ": dual " + fmt(dual) + " vs oracle " +
                   fmt(oracle));
        const double gap = duality_gap(model, k, y, C);
        expect(gap <= 1e-6 * std::max(1.0, std::abs(dual)),
               "instance " + std::to_string(instance) + ": duality gap " + fmt(gap));
        expect(gap >= -1e-10, "instance " + std::to_string(instance) + ": negative duality gap");
    }
}

void svm_analytic_two_point() {
    KernelMatrix k(2);
    k.at(0, 0) = 1.0;
    k.at(1, 1) = 1.0;
    k.at(0, 1) = -1.0;
    k.at(1, 0) = -1.0;
    const std::vector<signed char> y = {+1, -1};
    const BinarySvmModel model = smo_train(k, y, 100.0);
    expect(std::abs(model.alpha[0] - 0.5) <= 1e-10, "alpha[0] = " + fmt(model.alpha[0]));
    expect(std::abs(model.alpha[1] - 0.5) <= 1e-10, "alpha[1] = " + fmt(model.alpha[1]));
    expect(std::abs(model.b) <= 1e-10, "b = " + fmt(model.b));
}

void lp_oracle_equivalence() {
    for (std::uint64_t instance = 0; instance < 100; ++instance) {
        const LpProblem p = testutil::random_bounded_lp(30000 + instance);
        const LpSolution s = solve_lp(p);
        expect(s.status == LpStatus::optimal,
               "instance " + std::to_string(instance) + ": not optimal");
        expect(s.iterations < 10000, "instance " + std::to_string(instance) + ": pivot blow-up");
        const testutil::LpOracleResult oracle = testutil::lp_vertex_oracle(p);
        expect(oracle.feasible, "instance " + std::to_string(instance) + ": oracle infeasible");
        const double denom = std::max(1.0, std::abs(oracle.objective));
        expect(std::abs(s.objective_value - oracle.objective) <= 1e-9 * denom,
               "instance " + std::to_string(instance) + ": " + fmt(s.objective_value) + " vs oracle " +
                   fmt(oracle.objective));
    }
}

void silp_behavior() {
    const SyntheticDataset data = four_pillar_fixture();
    for (std::size_t split = 0; split < 3; ++split) {
        const SplitKernels ks = build_kernels(data, split);
        const MklModel model = silp_l1(ks.train, ks.train_labels, 100.0, 1e-3, 300);
        const std::string tag = "split " + std::to_string(split + 1);
        expect(model.converged, tag + ": silp hit the cut cap");
        expect(model.trace.size() <= 300, tag + ": more than 300 cuts");
        expect(model.trace.back().convergence_gap <= 1e-3,
               tag + ": final gap " + fmt(model.trace.back().convergence_gap));
        for (std::size_t t = 1; t < model.trace.size(); ++t) {
            expect(model.trace[t].theta >= model.trace[t - 1].theta,
                   tag + ": theta trace decreased at iteration " + std::to_string(t + 1));
        }
        for (const auto& entry : model.trace) {
            expect(entry.convergence_gap >= 0.0, tag + ": negative convergence gap");
        }
        double beta_sum = 0.0;
        for (double b : model.beta) {
            expect(b >= 0.0, tag + ": negative beta");
            beta_sum += b;
        }
        expect(std::abs(beta_sum - 1.0) <= 1e-8, tag + ": sum beta = " + fmt(beta_sum));
    }
}

void l2_constraint() {
    const SyntheticDataset data = two_pillar_fixture();
    for (std::size_t split = 0; split < 3; ++split) {
        const SplitKernels ks = build_kernels(data, split);
        const MklModel model = l2_mkl(ks.train, ks.train_labels, 100.0);
        double norm_sq = 0.0;
        for (double b : model.beta) norm_sq += b * b;
        expect(std::abs(norm_sq - 1.0) <= 1e-8,
               "split " + std::to_string(split + 1) + ": sum beta^2 = " + fmt(norm_sq));
    }
    // identical-kernel pair
    const SplitKernels ks = build_kernels(data, 0);
    const std::vector<KernelMatrix> pair = {ks.train[0], ks.train[0]};
    const MklModel model = l2_mkl(pair, ks.train_labels, 100.0);
    expect(std::abs(model.beta[0] - 0.70711) <= 1e-4, "beta[0] = " + fmt(model.beta[0]));
    expect(std::abs(model.beta[1] - 0.70711) <= 1e-4, "beta[1] = " + fmt(model.beta[1]));
}

void fusion_lift() {
    testutil::TempDir dir("acceptance_lift");
    const SyntheticDataset data = two_pillar_fixture();
    const FusionPlan plan = fixture_plan(dir, data);
    const ProtocolOptions options{.n_threads = 4, .score_dir = {}};
    const Report report = run_protocol(plan, data.labels, data.splits, options);

    for (const auto& split : report.per_split) {
        const std::string tag = "split " + std::to_string(split.split_id);
        double best_pillar = 0.0;
        for (double acc : split.per_pillar_accuracy) best_pillar = std::max(best_pillar, acc);
        expect(split.fused_accuracy >= best_pillar + 0.05,
               tag + ": fused " + fmt(split.fused_accuracy) + " vs best pillar " + fmt(best_pillar) +
                   " (needs +5 points)");
        double best_group = 0.0;
        for (double acc : split.per_group_accuracy) best_group = std::max(best_group, acc);
        expect(split.fused_accuracy >= best_group - 0.02,
               tag + ": fused " + fmt(split.fused_accuracy) + " vs best group " + fmt(best_group));
    }

    // grid-search beta oracle on split 1
    const SplitKernels ks = build_kernels(data, 0);
    std::vector<KernelMatrix> normalized = ks.train;  // rbf: already unit diagonal
    const double grid_best = testutil::simplex_grid_best_accuracy(normalized, ks.train_labels, ks.test,
                                                                  ks.test_truth, 100.0);
    expect(report.per_split[0].fused_accuracy >= grid_best - 0.02,
           "split 1: fused " + fmt(report.per_split[0].fused_accuracy) + " vs grid oracle " +
               fmt(grid_best));
}

// Running MKL over identical copies of one kernel must reproduce the
// single-kernel model: with the simplex constraint the fused kernel is K for
// any beta split, so l1 decision values agree; l2 rescales the kernel, which
// can move decision values but not the label ordering.
void identical_kernel_invariance() {
    const SyntheticDataset data = two_pillar_fixture();
    const SplitKernels ks = build_kernels(data, 0);
    const std::vector<KernelMatrix> pair = {ks.train[0], ks.train[0]};
    const std::vector<Matrix64> pair_blocks = {ks.test[0], ks.test[0]};

    const MulticlassSvmModel plain = train_one_vs_rest(ks.train[0], ks.train_labels, 100.0);
    const Prediction single = predict_multiclass(plain, ks.test[0]);

    // l1: decision values within 1e-6
    {
        const MklModel model = silp_l1(pair, ks.train_labels, 100.0);
        double beta_sum = 0.0;
        for (double b : model.beta) beta_sum += b;
        expect(std::abs(beta_sum - 1.0) <= 1e-8, "l1: beta left the simplex");
        const Prediction fused = mkl_predict(model, pair_blocks);
        expect(fused.labels == single.labels, "l1: duplicated kernel changed predicted labels");
        for (std::size_t i = 0; i < fused.scores.values.size(); ++i) {
            expect(std::abs(fused.scores.values[i] - single.scores.values[i]) <= 1e-6,
                   "l1: decision value drifted by " +
                       fmt(std::abs(fused.scores.values[i] - single.scores.values[i])));
        }
    }
    // l2: same argmax
    {
        const MklModel model = l2_mkl(pair, ks.train_labels, 100.0);
        const Prediction fused = mkl_predict(model, pair_blocks);
        expect(fused.labels == single.labels, "l2: duplicated kernel changed predicted labels");
    }
}

void fisher_encoding() {
    // FV length = 2KD across shapes
    for (const auto& [k_count, dim] : {std::pair<std::size_t, std::size_t>{1, 2},
                                       {2, 3},
                                       {3, 5},
                                       {4, 7}}) {
        const FeatureMatrix x = testutil::random_features(40 + 10 * k_count, dim, 40000 + k_count, 1.0);
        const GmmModel g = gmm_em(x, k_count, 3);
        const FisherVector fv = fisher_encode(g, x, FvNormalization::raw);
        expect(fv.values.size() == 2 * k_count * dim,
               "FV length " + std::to_string(fv.values.size()) + " for K=" + std::to_string(k_count) +
                   ", D=" + std::to_string(dim));
    }

    // finite-difference gradient match on K=2, D=3, T=50
    {
        const FeatureMatrix x = testutil::random_features(50, 3, 41000, 1.5);
        const GmmModel g = gmm_em(x, 2, 9);
        const FisherVector fv = fisher_encode(g, x, FvNormalization::raw);
        auto loglik = [&](const GmmModel& model) { return gmm_log_likelihood(model, x); };
        const double step = 1e-5;
        for (std::size_t k = 0; k < 2; ++k) {
            for (std::size_t d = 0; d < 3; ++d) {
                GmmModel up = g, down = g;
                up.means[k * 3 + d] += step;
                down.means[k * 3 + d] -= step;
                const double grad_mu = (loglik(up) - loglik(down)) / (2.0 * step);
                const double sigma = std::sqrt(g.var_at(k, d));
                const double expected = grad_mu * sigma / std::sqrt(g.weights[k]);
                const double got = fv.values[k * 3 + d];
                expect(std::abs(got - expected) <= 1e-4 * std::max(1.0, std::abs(expected)),
                       "mean gradient (" + std::to_string(k) + "," + std::to_string(d) + "): " +
                           fmt(got) + " vs fd " + fmt(expected));

                GmmModel sup = g, sdown = g;
                sup.variances[k * 3 + d] = (sigma + step) * (sigma + step);
                sdown.variances[k * 3 + d] = (sigma - step) * (sigma - step);
                const double grad_sigma = (loglik(sup) - loglik(sdown)) / (2.0 * step);
                const double expected_var = grad_sigma * sigma / std::sqrt(2.0 * g.weights[k]);
                const double got_var = fv.values[6 + k * 3 + d];
                expect(std::abs(got_var - expected_var) <= 1e-4 * std::max(1.0, std::abs(expected_var)),
                       "variance gradient (" + std::to_string(k) + "," + std::to_string(d) + "): " +
                           fmt(got_var) + " vs fd " + fmt(expected_var));
            }
        }
    }

    // EM monotonicity across 20 seeds
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const FeatureMatrix x = testutil::random_features(60, 3, 42000 + seed, 1.2);
        std::vector<double> trace;
        gmm_em(x, 3, seed, 1e-9, 80, &trace);
        for (std::size_t i = 1; i < trace.size(); ++i) {
            expect(trace[i] >= trace[i - 1] - 1e-10,
                   "seed " + std::to_string(seed) + ": log-likelihood dropped at iteration " +
                       std::to_string(i));
        }
    }
}

void protocol_determinism() {
    testutil::TempDir dir("acceptance_determinism");
    const SyntheticDataset data = two_pillar_fixture();
    const FusionPlan plan = fixture_plan(dir, data);

    const Report a = run_protocol(plan, data.labels, data.splits, {.n_threads = 1, .score_dir = {}});
    const Report b = run_protocol(plan, data.labels, data.splits, {.n_threads = 4, .score_dir = {}});
    emit_report(a, dir.file("a"));
    emit_report(b, dir.file("b"));

    auto read_bytes = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream out;
        out << in.rdbuf();
        return out.str();
    };
    expect(read_bytes(dir.file("a.report.json")) == read_bytes(dir.file("b.report.json")),
           "report JSON differs between runs");
    expect(read_bytes(dir.file("a.accuracy.csv")) == read_bytes(dir.file("b.accuracy.csv")),
           "accuracy CSV differs between runs");

    // Average CSV row equals the arithmetic mean of the split rows
    std::istringstream csv(read_bytes(dir.file("a.accuracy.csv")));
    std::string line;
    std::vector<std::vector<double>> rows;
    bool header = true;
    while (std::getline(csv, line)) {
        if (header) {
            header = false;
            continue;
        }
        std::istringstream cells(line);
        std::string cell;
        std::getline(cells, cell, ',');  // row label
        std::vector<double> values;
        while (std::getline(cells, cell, ',')) values.push_back(std::stod(cell));
        rows.push_back(std::move(values));
    }
    expect(rows.size() == 4, "expected 3 split rows plus Average");
    for (std::size_t c = 0; c < rows[0].size(); ++c) {
        const double mean = (rows[0][c] + rows[1][c] + rows[2][c]) / 3.0;
        expect(std::abs(rows[3][c] - mean) <= 1e-12,
               "Average column " + std::to_string(c) + ": " + fmt(rows[3][c]) + " vs mean " + fmt(mean));
    }
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void()>>> criteria = {
        {"svm-oracle-equivalence", svm_oracle_equivalence},
        {"svm-analytic-two-point", svm_analytic_two_point},
        {"lp-oracle-equivalence", lp_oracle_equivalence},
        {"silp-behavior", silp_behavior},
        {"l2-constraint", l2_constraint},
        {"fusion-lift", fusion_lift},
        {"identical-kernel-invariance", identical_kernel_invariance},
        {"fisher-encoding", fisher_encoding},
        {"protocol-determinism", protocol_determinism},
    };

    int failures = 0;
    for (const auto& [name, fn] : criteria) {
        const auto start = std::chrono::steady_clock::now();
        try {
            fn();
            const double seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            std::printf("[PASS] %-28s (%.2fs)\n", name.c_str(), seconds);
        } catch (const std::exception& e) {
            const double seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            std::printf("[FAIL] %-28s (%.2fs) %s\n", name.c_str(), seconds, e.what());
            ++failures;
        }
        std::fflush(stdout);
    }
    if (failures > 0) {
        std::printf("%d criterion(s) failed\n", failures);
        return 1;
    }
    std::printf("all %zu criteria passed\n", criteria.size());
    return 0;
}
