#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pillar/dataio.hpp"
#include "pillar/matrix.hpp"

namespace pillar {

// Diagonal-covariance Gaussian mixture. weights sum to 1; every variance is
// floored at 1e-6 times the per-dim data variance observed at fit time.
struct GmmModel {
    std::size_t n_components = 0;  // K
    std::size_t dim = 0;           // D
    std::vector<double> weights;   // K
    std::vector<double> means;     // K x D row-major
    std::vector<double> variances; // K x D row-major

    double mean_at(std::size_t k, std::size_t d) const { return means[k * dim + d]; }
    double var_at(std::size_t k, std::size_t d) const { return variances[k * dim + d]; }
};

enum class FvNormalization { raw, improved };

// Score-space encoding of a descriptor set: mean and variance gradient
// blocks, 2*K*D values. improved applies signed square root then global L2
// normalization (a zero raw vector stays zero).
struct FisherVector {
    std::vector<double> values;
    FvNormalization normalization = FvNormalization::raw;
};

// EM fit with k-means++ seeding and 10 Lloyd iterations, all driven by the
// seed. Average log-likelihood is non-decreasing across EM iterations;
// terminates when the improvement drops to tol or at max_iter. The per
// iteration average log-likelihood is appended to *loglik_trace when given.
GmmModel gmm_em(const FeatureMatrix& descriptors, std::size_t k, std::uint64_t seed,
                double tol = 1e-6, std::size_t max_iter = 200,
                std::vector<double>* loglik_trace = nullptr);

// Posterior responsibilities, one row per descriptor; rows sum to 1.
Matrix64 gmm_responsibilities(const GmmModel& g, const FeatureMatrix& descriptors);

// Average log-likelihood of the descriptor set under the mixture.
double gmm_log_likelihood(const GmmModel& g, const FeatureMatrix& descriptors);

FisherVector fisher_encode(const GmmModel& g, const FeatureMatrix& descriptors,
                           FvNormalization normalization);

// One Fisher vector row per descriptor set; values downcast to real32 at the
// pillar boundary.
FeatureMatrix encode_corpus(const GmmModel& g, std::span<const FeatureMatrix> per_sample_descriptors,
                            FvNormalization normalization, int n_threads = 1);

// PLGM mixture file: magic "PLGM", version u32=1 LE, K u64, D u64, then
// weights, means, variances as f64 LE.
void save_gmm(const GmmModel& g, const std::filesystem::path& path);
GmmModel load_gmm(const std::filesystem::path& path);

}  // namespace pillar
