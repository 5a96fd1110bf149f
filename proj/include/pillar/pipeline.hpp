#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pillar/dataio.hpp"
#include "pillar/kernels.hpp"
#include "pillar/mkl.hpp"

namespace pillar {

struct GammaSpec {
    enum class Mode { scale, median, fixed };
    Mode mode = Mode::scale;
    double value = 0.0;  // fixed mode only
};

struct PlanPillar {
    std::string id;
    std::filesystem::path features;
    KernelKind kind = KernelKind::rbf;
    GammaSpec gamma;
    KernelNormalization normalization = KernelNormalization::unit_mean_diag;
    std::string group;  // defaults to the pillar id
};

enum class FusionMode { flat, staged };

// Parsed plan file. Stage-1 groups always run (they are the per-network MKL
// columns of the report); fusion.mode decides whether the global stage
// re-fuses all atomic kernels (flat) or the frozen beta-weighted group
// kernels (staged).
struct FusionPlan {
    std::vector<PlanPillar> pillars;
    FusionMode mode = FusionMode::staged;
    MklNorm norm = MklNorm::l2;
    double C = 100.0;
    double mkl_eps = 1e-3;        // silp termination
    double mkl_tol = 1e-5;        // l2 termination
    std::size_t mkl_max_cuts = 300;
    std::size_t mkl_max_iter = 100;
    double svm_tol = 1e-3;
    bool l2_normalize_features = false;
    std::uint64_t seed = 0;
    std::filesystem::path labels_path;
    std::vector<std::filesystem::path> split_paths;
};

// key=value plan file; '#' starts a comment, relative paths resolve against
// the plan file's directory. Unknown keys are rejected.
FusionPlan parse_plan(const std::filesystem::path& path);
void write_plan(const FusionPlan& plan, const std::filesystem::path& path);

struct SplitResult {
    int split_id = 0;
    std::vector<double> per_pillar_accuracy;  // aligned with Report::pillar_ids
    std::vector<double> per_group_accuracy;   // aligned with Report::group_ids
    double fused_accuracy = 0.0;
    std::vector<std::vector<std::size_t>> confusion;  // [truth][predicted], fused predictions
    bool converged = true;
};

struct Report {
    FusionPlan config;
    std::vector<std::string> pillar_ids;
    std::vector<std::string> group_ids;
    std::vector<SplitResult> per_split;
    std::vector<double> average_per_pillar;
    std::vector<double> average_per_group;
    double average_fused = 0.0;
    bool all_converged = true;
};

struct ProtocolOptions {
    int n_threads = 1;
    // when set, per-split score matrices are written here as
    // scores.split<k>.<stage>.csv for external re-checks
    std::optional<std::filesystem::path> score_dir;
};

// The three-split protocol: per split, per-pillar SVM accuracies, per-group
// MKL accuracies, global fusion accuracy and the fused confusion matrix;
// averages are arithmetic means over splits.
Report run_protocol(const FusionPlan& plan, const LabelVector& labels,
                    std::span<const SplitDefinition> splits, const ProtocolOptions& options = {});

// fraction of exact matches
double accuracy(std::span<const int> predicted, std::span<const int> truth);

// entry [t][p] = count of samples with truth t predicted p
std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const int> predicted,
                                                       std::span<const int> truth, int n_classes);

// Writes <stem>.report.json and <stem>.accuracy.csv. The CSV mirrors the
// report table layout: one pillar/group/fused column set, one row per split
// plus an Average row over the printed split values.
void emit_report(const Report& report, const std::filesystem::path& stem);
Report load_report(const std::filesystem::path& json_path);

// Rendering helpers shared by emit_report and the CLI table printer.
std::string render_accuracy_csv(const Report& report);
std::string report_to_json_text(const Report& report);

}  // namespace pillar
