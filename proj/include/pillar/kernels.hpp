#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pillar/dataio.hpp"
#include "pillar/matrix.hpp"

namespace pillar {

enum class KernelKind { rbf, linear };

struct KernelParams {
    KernelKind kind = KernelKind::rbf;
    double gamma = 1.0;  // rbf only, must be > 0

    static KernelParams rbf(double gamma);
    static KernelParams linear();
};

enum class KernelNormalization { none, unit_mean_diag };

// Where a kernel came from; persisted as a key=value sidecar next to PLRK
// files and echoed into MKL models.
struct KernelProvenance {
    std::string source_id;
    KernelKind kind = KernelKind::rbf;
    double gamma = 0.0;
    KernelNormalization normalization = KernelNormalization::none;
    std::vector<double> combine_weights;   // set by combine_kernels
    std::vector<std::string> parents;      // source ids of combined kernels
};

// Symmetric n x n Gram matrix, real64. Construction fills one triangle and
// mirrors it, so symmetry is exact. RBF self-grams have an exactly unit
// diagonal.
struct KernelMatrix {
    std::size_t n = 0;
    std::vector<double> values;
    KernelProvenance provenance;

    KernelMatrix() = default;
    explicit KernelMatrix(std::size_t size) : n(size), values(size * size, 0.0) {}

    double& at(std::size_t i, std::size_t j) { return values[i * n + j]; }
    double at(std::size_t i, std::size_t j) const { return values[i * n + j]; }
    const double* row(std::size_t i) const { return values.data() + i * n; }
};

// Self Gram matrix of x. rbf entries are exp(-gamma * ||x_i - x_j||^2) with
// the squared distance accumulated in real64, so the diagonal is exactly 1
// and off-diagonal entries stay in (0, 1].
KernelMatrix kernel_gram_self(const FeatureMatrix& x, const KernelParams& params, int n_threads = 1);

// Rectangular |x| x |z| kernel block. When x and z are the same object this
// matches kernel_gram_self entrywise.
Matrix64 kernel_gram(const FeatureMatrix& x, const FeatureMatrix& z, const KernelParams& params,
                     int n_threads = 1);

enum class GammaMode { scale, median };

// scale: 1 / (n_dims * pooled variance of all entries).
// median: 1 / (2 m^2) with m the median pairwise distance, subsampled to at
// most 2000 rows under a fixed internal seed.
double gamma_heuristic(const FeatureMatrix& x, GammaMode mode);

// unit_mean_diag divides every entry by mean(diag(K)); none is the identity.
KernelMatrix normalize_kernel(const KernelMatrix& k, KernelNormalization mode);

struct PsdCheck {
    bool pass = false;
    double min_eigenvalue = 0.0;  // populated on fail
};

// PSD test via Cholesky with a diagonal jitter ladder (1e-12, 1e-10, then
// tol, relative to max(1, max diagonal)). Equivalent to requiring the
// smallest eigenvalue >= -tol * max(1, max diagonal); the eigenvalue is
// computed only to report a failure.
PsdCheck check_psd(const KernelMatrix& k, double tol = 1e-8);

// Entrywise sum of beta[k] * ks[k]. Weights must be nonnegative; provenance
// records the weights and parent ids.
KernelMatrix combine_kernels(std::span<const KernelMatrix> ks, std::span<const double> beta);
Matrix64 combine_kernel_blocks(std::span<const Matrix64> blocks, std::span<const double> beta);

// PLRK kernel cache: magic "PLRK", version u32=1 LE, n u64 LE, payload
// real64 LE full n x n row-major. Provenance travels in "<path>.prov".
// Loading re-validates symmetry, finiteness and the PSD invariant.
void save_kernel(const KernelMatrix& k, const std::filesystem::path& path);
KernelMatrix load_kernel(const std::filesystem::path& path);

std::string kernel_kind_name(KernelKind kind);
std::string normalization_name(KernelNormalization mode);

}  // namespace pillar
