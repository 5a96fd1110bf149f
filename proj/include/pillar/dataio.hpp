#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pillar/errors.hpp"

namespace pillar {

// Per-sample feature vectors of one pillar, row-major real32. Features stay
// in real32 (matching typical deep-feature exports); kernel matrices are
// real64 (see kernels.hpp).
struct FeatureMatrix {
    std::size_t n_samples = 0;
    std::size_t n_dims = 0;
    std::vector<float> values;

    FeatureMatrix() = default;
    FeatureMatrix(std::size_t n, std::size_t d) : n_samples(n), n_dims(d), values(n * d, 0.0f) {}

    float& at(std::size_t i, std::size_t j) { return values[i * n_dims + j]; }
    float at(std::size_t i, std::size_t j) const { return values[i * n_dims + j]; }
    const float* row(std::size_t i) const { return values.data() + i * n_dims; }
    float* row(std::size_t i) { return values.data() + i * n_dims; }
};

// Integer class ids in [0, n_classes).
struct LabelVector {
    std::vector<int> labels;
    int n_classes = 0;
};

// One train/test partition. Train and test index sets are disjoint and all
// indices lie below the dataset size; enforced at load time.
struct SplitDefinition {
    int split_id = 0;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
};

struct PillarSpec {
    std::size_t n_dims = 0;
    std::vector<int> informative_classes;  // classes this pillar separates
    double noise_sigma = 0.0;
};

struct SyntheticSpec {
    std::size_t n_samples = 0;
    int n_classes = 0;
    std::vector<PillarSpec> pillars;
    std::uint64_t seed = 0;
};

struct SyntheticDataset {
    std::vector<FeatureMatrix> pillars;
    LabelVector labels;
    std::vector<SplitDefinition> splits;
};

// PLRF binary feature file.
// bytes 0-3 magic "PLRF"; 4-7 version u32=1 LE; 8-15 n_samples u64 LE;
// 16-23 n_dims u64 LE; payload real32 LE row-major.
FeatureMatrix load_feature_matrix(const std::filesystem::path& path);
void write_feature_matrix(const FeatureMatrix& m, const std::filesystem::path& path);

// Plain-text labels, one non-negative integer per line. n_classes = max + 1.
LabelVector load_labels(const std::filesystem::path& path);
void write_labels(const LabelVector& labels, const std::filesystem::path& path);

// Plain-text split, lines "<index>,<train|test>". Index bounds are checked
// against n_samples; split_id is assigned by the caller.
SplitDefinition load_split(const std::filesystem::path& path, std::size_t n_samples, int split_id);
void write_split(const SplitDefinition& split, const std::filesystem::path& path);

// Seeded synthetic multi-pillar dataset. Pillar p separates only its
// informative classes: samples of those classes get a class-specific mean
// shift on a subset of dims, everything else is pure Gaussian noise. Emits
// three stratified ~70/30 splits. Pure function of the spec.
SyntheticDataset generate_synthetic_pillars(const SyntheticSpec& spec);

// Optional preprocessing (off by default in every pipeline path): scales each
// row to unit Euclidean norm. Zero rows are left unchanged.
void l2_normalize_rows(FeatureMatrix& m);

}  // namespace pillar
