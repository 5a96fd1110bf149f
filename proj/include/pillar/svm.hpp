#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pillar/dataio.hpp"
#include "pillar/kernels.hpp"
#include "pillar/matrix.hpp"

namespace pillar {

// Dual solution of the binary soft-margin C-SVM. The primal weight vector and
// slacks are implicit: w = sum_i alpha_i y_i phi(x_i), zeta_i = max(0, 1 - y_i f(x_i)).
struct BinarySvmModel {
    std::vector<double> alpha;              // length n_train, 0 <= alpha_i <= C
    std::vector<signed char> y;             // +1 / -1
    double b = 0.0;
    double C = 0.0;
    std::vector<std::size_t> support_indices;   // rows with alpha_i > 0
    std::vector<std::size_t> train_index_map;   // training rows -> source dataset rows
    bool converged = true;                      // false when max_iter was reached
    int class_id = -1;                          // one-vs-rest positive class, -1 for plain binary
    std::size_t iterations = 0;
};

struct MulticlassSvmModel {
    std::vector<BinarySvmModel> per_class;  // index = class id
    int n_classes = 0;
};

struct Prediction {
    std::vector<int> labels;
    Matrix64 scores;  // rows = test samples, cols = classes
};

// SMO over a precomputed kernel, maximal-violating-pair working set
// selection. Terminates when the KKT violation m(alpha) - M(alpha) drops to
// tol; if max_iter pair updates are reached first, the best iterate is
// returned with converged = false.
BinarySvmModel smo_train(const KernelMatrix& k, std::span<const signed char> y, double C,
                         double tol = 1e-3, std::size_t max_iter = 10'000'000);

// f(x) = sum_i alpha_i y_i k(x_i, x) + b per row of k_test_train (columns
// aligned with the model's training rows).
std::vector<double> decision_values(const BinarySvmModel& m, const Matrix64& k_test_train);

// Primal objective (with implicit w, zeta) minus dual objective; nonnegative
// for feasible models, ~0 at the optimum.
double duality_gap(const BinarySvmModel& m, const KernelMatrix& k, std::span<const signed char> y,
                   double C);

// Dual objective D(alpha) = sum alpha - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij.
double dual_objective(std::span<const double> alpha, std::span<const signed char> y,
                      const KernelMatrix& k);

// One binary class-vs-rest model per class id. labels must cover rows of k
// (training rows) and carry the global class count; a class with no positive
// rows raises EmptyClass.
MulticlassSvmModel train_one_vs_rest(const KernelMatrix& k, const LabelVector& labels, double C,
                                     double tol = 1e-3, std::size_t max_iter = 10'000'000,
                                     int n_threads = 1);

// argmax of per-class decision values; ties break toward the lowest class id.
Prediction predict_multiclass(const MulticlassSvmModel& m, const Matrix64& k_test_train);

// PLSV model file: magic "PLSV", version u32=1 LE, u32 model count, then per
// model a key=value text header followed by alpha (f64), y (i8) and the
// train index map (u64), all little-endian.
void save_svm(const MulticlassSvmModel& m, const std::filesystem::path& path);
MulticlassSvmModel load_svm(const std::filesystem::path& path);

}  // namespace pillar
