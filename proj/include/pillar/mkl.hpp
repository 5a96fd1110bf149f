#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pillar/kernels.hpp"
#include "pillar/svm.hpp"

namespace pillar {

enum class MklNorm { l1, l2 };

// One solver iteration. theta is the best certified value of the fused
// negated dual so far (for the cutting-plane solver this is the running SILP
// lower bound, so it never decreases); convergence_gap is the termination
// quantity of the respective solver and is nonnegative.
struct MklTraceEntry {
    std::size_t iteration = 0;
    double theta = 0.0;
    double convergence_gap = 0.0;
};

struct MklModel {
    std::vector<double> beta;        // nonnegative sub-kernel weights
    MklNorm norm_mode = MklNorm::l2; // l1: sum beta = 1; l2: sum beta^2 = 1
    MulticlassSvmModel fused_svm;    // trained on the final combined kernel
    std::vector<MklTraceEntry> trace;
    std::vector<std::string> kernel_ids;
    bool converged = true;
};

struct MklOptions {
    double svm_tol = 1e-3;
    std::size_t svm_max_iter = 10'000'000;
    int n_threads = 1;
};

// S_k(alpha) = 1/2 sum_ij alpha_i alpha_j y_i y_j K_k[i][j] - sum_i alpha_i,
// the negated binary dual objective under sub-kernel k.
double sk_objective(std::span<const double> alpha, std::span<const signed char> y,
                    const KernelMatrix& k);

// Cutting-plane MKL over the simplex: alternates a one-vs-rest SVM solve on
// the fused kernel with a restricted LP master (maximize theta subject to
// beta . s_t >= theta per cut, beta in the simplex). Cuts are summed over the
// one-vs-rest subproblems so all classes share one beta. Terminates when
// |1 - beta . s_latest / theta| <= eps or max_cuts is reached.
MklModel silp_l1(std::span<const KernelMatrix> ks, const LabelVector& labels, double C = 100.0,
                 double eps = 1e-3, std::size_t max_cuts = 300, const MklOptions& options = {});

// L2-ball MKL: alternates the SVM solve with the closed-form weight update
// beta_k = q_k^(1/3) / (sum_l q_l^(2/3))^(1/2) where q_k = beta_k^2 *
// sum_classes alpha' Y K_k Y alpha is the squared block norm ||w_k||^2. The
// constraint sum beta^2 <= 1 is active at the optimum whenever any q_k > 0.
MklModel l2_mkl(std::span<const KernelMatrix> ks, const LabelVector& labels, double C = 100.0,
                double tol = 1e-5, std::size_t max_iter = 100, const MklOptions& options = {});

// Fuses the per-kernel test/train blocks with the learnt beta and delegates
// to predict_multiclass.
Prediction mkl_predict(const MklModel& m, std::span<const Matrix64> ks_test_train);

// PLMK model file: magic "PLMK", version u32=1 LE, norm mode u32, beta count
// u64 + beta array f64 LE, kernel ids (u64 length + bytes each), trace
// entries, then the embedded fused SVM as a PLSV blob.
void save_mkl(const MklModel& m, const std::filesystem::path& path);
MklModel load_mkl(const std::filesystem::path& path);

// CSV with one line per solver iteration: iteration,theta,gap.
void write_trace_csv(const MklModel& m, const std::filesystem::path& path);

}  // namespace pillar
