#include "pillar/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace pillar {

namespace {

using ordered_json = nlohmann::ordered_json;

FeatureMatrix select_rows(const FeatureMatrix& m, std::span<const std::size_t> rows) {
    FeatureMatrix out(rows.size(), m.n_dims);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const float* src = m.row(rows[i]);
        std::copy(src, src + m.n_dims, out.row(i));
    }
    return out;
}

LabelVector select_labels(const LabelVector& labels, std::span<const std::size_t> rows) {
    LabelVector out;
    out.n_classes = labels.n_classes;
    out.labels.reserve(rows.size());
    for (std::size_t i : rows) out.labels.push_back(labels.labels[i]);
    return out;
}

double resolve_gamma(const FeatureMatrix& train, const PlanPillar& pillar) {
    switch (pillar.gamma.mode) {
        case GammaSpec::Mode::fixed: return pillar.gamma.value;
        case GammaSpec::Mode::median: return gamma_heuristic(train, GammaMode::median);
        case GammaSpec::Mode::scale: default: return gamma_heuristic(train, GammaMode::scale);
    }
}

struct PillarKernels {
    KernelMatrix train;   // train x train, normalized
    Matrix64 test_train;  // test x train, same scaling
};

// Kernels are built from the split's train rows only; the unit_mean_diag
// factor comes from the train Gram diagonal and is applied to both blocks, so
// no test information enters training.
PillarKernels build_split_kernels(const FeatureMatrix& features, const PlanPillar& pillar,
                                  const SplitDefinition& split, int n_threads) {
    const FeatureMatrix train = select_rows(features, split.train_indices);
    const FeatureMatrix test = select_rows(features, split.test_indices);
    KernelParams params = pillar.kind == KernelKind::rbf
                              ? KernelParams::rbf(resolve_gamma(train, pillar))
                              : KernelParams::linear();
    PillarKernels out;
    out.train = kernel_gram_self(train, params, n_threads);
    out.test_train = kernel_gram(test, train, params, n_threads);
    out.train.provenance.source_id = pillar.id;
    if (pillar.normalization == KernelNormalization::unit_mean_diag) {
        double mean_diag = 0.0;
        for (std::size_t i = 0; i < out.train.n; ++i) mean_diag += out.train.at(i, i);
        mean_diag /= double(out.train.n);
        require(mean_diag > 0.0, errc::degenerate_diagonal,
                "pillar " + pillar.id + ": mean kernel diagonal is not positive");
        const double inv = 1.0 / mean_diag;
        for (double& v : out.train.values) v *= inv;
        for (double& v : out.test_train.values) v *= inv;
        out.train.provenance.normalization = KernelNormalization::unit_mean_diag;
    }
    return out;
}

MklModel run_mkl(std::span<const KernelMatrix> ks, const LabelVector& labels, const FusionPlan& plan,
                 int n_threads) {
    MklOptions options;
    options.svm_tol = plan.svm_tol;
    options.n_threads = n_threads;
    if (plan.norm == MklNorm::l1) {
        return silp_l1(ks, labels, plan.C, plan.mkl_eps, plan.mkl_max_cuts, options);
    }
    return l2_mkl(ks, labels, plan.C, plan.mkl_tol, plan.mkl_max_iter, options);
}

std::string sanitize(const std::string& name) {
    std::string out = name;
    for (char& c : out) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
    }
    return out;
}

void write_scores_csv(const std::filesystem::path& dir, int split_id, const std::string& stage,
                      const Matrix64& scores, std::span<const int> truth) {
    const std::filesystem::path path =
        dir / ("scores.split" + std::to_string(split_id) + "." + sanitize(stage) + ".csv");
    std::ofstream out(path, std::ios::trunc);
    if (!out) raise(errc::io_failure, path.string() + ": cannot open for writing");
    out << "truth";
    for (std::size_t c = 0; c < scores.cols; ++c) out << ",score_" << c;
    out << '\n';
    out.precision(17);
    for (std::size_t r = 0; r < scores.rows; ++r) {
        out << truth[r];
        for (std::size_t c = 0; c < scores.cols; ++c) out << ',' << scores.at(r, c);
        out << '\n';
    }
}

}  // namespace

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
    require(predicted.size() == truth.size(), errc::length_mismatch,
            "accuracy: " + std::to_string(predicted.size()) + " predictions vs " +
                std::to_string(truth.size()) + " truths");
    require(!predicted.empty(), errc::empty_input, "accuracy: empty inputs");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i] == truth[i]) ++hits;
    }
    return double(hits) / double(predicted.size());
}

std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const int> predicted,
                                                       std::span<const int> truth, int n_classes) {
    require(predicted.size() == truth.size(), errc::length_mismatch,
            "confusion_matrix: prediction/truth length mismatch");
    require(n_classes >= 1, errc::empty_input, "confusion_matrix: n_classes must be >= 1");
    std::vector<std::vector<std::size_t>> counts(static_cast<std::size_t>(n_classes),
                                                 std::vector<std::size_t>(static_cast<std::size_t>(n_classes), 0));
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        require(truth[i] >= 0 && truth[i] < n_classes, errc::label_out_of_range,
                "confusion_matrix: truth label " + std::to_string(truth[i]));
        require(predicted[i] >= 0 && predicted[i] < n_classes, errc::label_out_of_range,
                "confusion_matrix: predicted label " + std::to_string(predicted[i]));
        ++counts[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
    }
    return counts;
}

Report run_protocol(const FusionPlan& plan, const LabelVector& labels,
                    std::span<const SplitDefinition> splits, const ProtocolOptions& options) {
    require(!plan.pillars.empty(), errc::invalid_spec, "run_protocol: plan has no pillars");
    require(!splits.empty(), errc::invalid_spec, "run_protocol: no splits");

    Report report;
    report.config = plan;
    for (const auto& pillar : plan.pillars) report.pillar_ids.push_back(pillar.id);

    // group ids in order of first appearance; ungrouped pillars form
    // singleton groups named after themselves
    std::vector<std::vector<std::size_t>> group_members;
    for (std::size_t p = 0; p < plan.pillars.size(); ++p) {
        const std::string group =
            plan.pillars[p].group.empty() ? plan.pillars[p].id : plan.pillars[p].group;
        auto it = std::find(report.group_ids.begin(), report.group_ids.end(), group);
        if (it == report.group_ids.end()) {
            report.group_ids.push_back(group);
            group_members.push_back({p});
        } else {
            group_members[static_cast<std::size_t>(it - report.group_ids.begin())].push_back(p);
        }
    }

    // load features once, shared across splits
    std::vector<FeatureMatrix> features;
    for (const auto& pillar : plan.pillars) {
        FeatureMatrix m = load_feature_matrix(pillar.features);
        require(m.n_samples == labels.labels.size(), errc::shape_mismatch,
                "pillar " + pillar.id + ": " + std::to_string(m.n_samples) + " samples but " +
                    std::to_string(labels.labels.size()) + " labels");
        if (plan.l2_normalize_features) l2_normalize_rows(m);
        features.push_back(std::move(m));
    }

    for (const auto& split : splits) {
        SplitResult result;
        result.split_id = split.split_id;
        const LabelVector train_labels = select_labels(labels, split.train_indices);
        std::vector<int> test_truth;
        for (std::size_t i : split.test_indices) test_truth.push_back(labels.labels[i]);

        // per-pillar kernels and SVM columns
        std::vector<PillarKernels> kernels;
        for (std::size_t p = 0; p < plan.pillars.size(); ++p) {
            try {
                kernels.push_back(
                    build_split_kernels(features[p], plan.pillars[p], split, options.n_threads));
            } catch (const Error& e) {
                raise(e.code(), "split " + std::to_string(split.split_id) + ", pillar " +
                                    plan.pillars[p].id + ": " + e.what());
            }
            MulticlassSvmModel svm;
            try {
                svm = train_one_vs_rest(kernels[p].train, train_labels, plan.C, plan.svm_tol,
                                        10'000'000, options.n_threads);
            } catch (const Error& e) {
                raise(e.code(), "split " + std::to_string(split.split_id) + ", pillar " +
                                    plan.pillars[p].id + ": " + e.what());
            }
            const Prediction prediction = predict_multiclass(svm, kernels[p].test_train);
            result.per_pillar_accuracy.push_back(accuracy(prediction.labels, test_truth));
            result.converged = result.converged &&
                               std::all_of(svm.per_class.begin(), svm.per_class.end(),
                                           [](const BinarySvmModel& m) { return m.converged; });
            if (options.score_dir) {
                write_scores_csv(*options.score_dir, split.split_id, "pillar_" + plan.pillars[p].id,
                                 prediction.scores, test_truth);
            }
        }

        // stage 1: one MKL per group
        std::vector<KernelMatrix> group_train;
        std::vector<Matrix64> group_test;
        for (std::size_t g = 0; g < group_members.size(); ++g) {
            std::vector<KernelMatrix> ks;
            std::vector<Matrix64> blocks;
            for (std::size_t p : group_members[g]) {
                ks.push_back(kernels[p].train);
                blocks.push_back(kernels[p].test_train);
            }
            MklModel mkl;
            try {
                mkl = run_mkl(ks, train_labels, plan, options.n_threads);
            } catch (const Error& e) {
                raise(e.code(), "split " + std::to_string(split.split_id) + ", stage-1 group " +
                                    report.group_ids[g] + ": " + e.what());
            }
            const Prediction prediction = mkl_predict(mkl, blocks);
            result.per_group_accuracy.push_back(accuracy(prediction.labels, test_truth));
            result.converged = result.converged && mkl.converged;
            if (options.score_dir) {
                write_scores_csv(*options.score_dir, split.split_id, "group_" + report.group_ids[g],
                                 prediction.scores, test_truth);
            }
            // frozen beta-weighted fused kernel, the staged stage-2 input
            group_train.push_back(combine_kernels(ks, mkl.beta));
            group_train.back().provenance.source_id = report.group_ids[g];
            group_test.push_back(combine_kernel_blocks(blocks, mkl.beta));
        }

        // stage 2: global fusion
        std::vector<KernelMatrix> fusion_train;
        std::vector<Matrix64> fusion_test;
        if (plan.mode == FusionMode::flat) {
            for (std::size_t p = 0; p < kernels.size(); ++p) {
                fusion_train.push_back(kernels[p].train);
                fusion_test.push_back(kernels[p].test_train);
            }
        } else {
            fusion_train = std::move(group_train);
            fusion_test = std::move(group_test);
        }
        MklModel fused;
        try {
            fused = run_mkl(fusion_train, train_labels, plan, options.n_threads);
        } catch (const Error& e) {
            raise(e.code(), "split " + std::to_string(split.split_id) + ", global fusion: " + e.what());
        }
        const Prediction prediction = mkl_predict(fused, fusion_test);
        result.fused_accuracy = accuracy(prediction.labels, test_truth);
        result.confusion = confusion_matrix(prediction.labels, test_truth, labels.n_classes);
        result.converged = result.converged && fused.converged;
        if (options.score_dir) {
            write_scores_csv(*options.score_dir, split.split_id, "fused", prediction.scores, test_truth);
        }

        report.per_split.push_back(std::move(result));
    }

    // arithmetic means over splits
    const double inv = 1.0 / double(report.per_split.size());
    report.average_per_pillar.assign(report.pillar_ids.size(), 0.0);
    report.average_per_group.assign(report.group_ids.size(), 0.0);
    for (const auto& split : report.per_split) {
        for (std::size_t p = 0; p < report.pillar_ids.size(); ++p) {
            report.average_per_pillar[p] += split.per_pillar_accuracy[p];
        }
        for (std::size_t g = 0; g < report.group_ids.size(); ++g) {
            report.average_per_group[g] += split.per_group_accuracy[g];
        }
        report.average_fused += split.fused_accuracy;
        report.all_converged = report.all_converged && split.converged;
    }
    for (double& v : report.average_per_pillar) v *= inv;
    for (double& v : report.average_per_group) v *= inv;
    report.average_fused *= inv;
    return report;
}

// ---------------------------------------------------------------- plan file

namespace {

const char* fusion_mode_name(FusionMode mode) { return mode == FusionMode::flat ? "flat" : "staged"; }
const char* norm_name(MklNorm norm) { return norm == MklNorm::l1 ? "l1" : "l2"; }

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t");
    return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& value, const std::string& key) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        raise(errc::parse_error, "plan key " + key + ": bad number '" + value + "'");
    }
}

std::uint64_t parse_u64(const std::string& value, const std::string& key) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        raise(errc::parse_error, "plan key " + key + ": bad unsigned integer '" + value + "'");
    }
    return v;
}

bool parse_toggle(const std::string& value, const std::string& key) {
    if (value == "on" || value == "true" || value == "1") return true;
    if (value == "off" || value == "false" || value == "0") return false;
    raise(errc::parse_error, "plan key " + key + ": expected on/off, got '" + value + "'");
}

GammaSpec parse_gamma(const std::string& value, const std::string& key) {
    GammaSpec g;
    if (value == "scale") {
        g.mode = GammaSpec::Mode::scale;
    } else if (value == "median") {
        g.mode = GammaSpec::Mode::median;
    } else {
        g.mode = GammaSpec::Mode::fixed;
        g.value = parse_double(value, key);
        require(g.value > 0.0, errc::parse_error, "plan key " + key + ": gamma must be positive");
    }
    return g;
}

std::string gamma_to_string(const GammaSpec& g) {
    switch (g.mode) {
        case GammaSpec::Mode::scale: return "scale";
        case GammaSpec::Mode::median: return "median";
        default: {
            std::ostringstream out;
            out.precision(17);
            out << g.value;
            return out.str();
        }
    }
}

}  // namespace

FusionPlan parse_plan(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) raise(errc::io_failure, path.string() + ": cannot open for reading");
    const std::filesystem::path base = path.parent_path();
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path candidate(p);
        return candidate.is_absolute() ? candidate : base / candidate;
    };

    FusionPlan plan;
    std::vector<std::pair<int, std::filesystem::path>> split_files;
    std::map<std::string, std::size_t> pillar_index;
    auto pillar_of = [&](const std::string& id) -> PlanPillar& {
        auto it = pillar_index.find(id);
        if (it == pillar_index.end()) {
            pillar_index.emplace(id, plan.pillars.size());
            plan.pillars.push_back(PlanPillar{});
            plan.pillars.back().id = id;
            return plan.pillars.back();
        }
        return plan.pillars[it->second];
    };

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = path.string() + ": line " + std::to_string(line_no);
        if (eq == std::string::npos) raise(errc::parse_error, where + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));

        if (key == "labels") {
            plan.labels_path = resolve(value);
        } else if (key.rfind("split.", 0) == 0) {
            const int id = static_cast<int>(parse_u64(key.substr(6), key));
            split_files.emplace_back(id, resolve(value));
        } else if (key == "fusion.mode") {
            if (value == "flat") plan.mode = FusionMode::flat;
            else if (value == "staged") plan.mode = FusionMode::staged;
            else raise(errc::parse_error, where + ": fusion.mode must be flat or staged");
        } else if (key == "fusion.norm") {
            if (value == "l1") plan.norm = MklNorm::l1;
            else if (value == "l2") plan.norm = MklNorm::l2;
            else raise(errc::parse_error, where + ": fusion.norm must be l1 or l2");
        } else if (key == "svm.C") {
            plan.C = parse_double(value, key);
            require(plan.C > 0.0, errc::parse_error, where + ": svm.C must be positive");
        } else if (key == "svm.tol") {
            plan.svm_tol = parse_double(value, key);
        } else if (key == "mkl.eps") {
            plan.mkl_eps = parse_double(value, key);
        } else if (key == "mkl.tol") {
            plan.mkl_tol = parse_double(value, key);
        } else if (key == "mkl.max_cuts") {
            plan.mkl_max_cuts = parse_u64(value, key);
        } else if (key == "mkl.max_iter") {
            plan.mkl_max_iter = parse_u64(value, key);
        } else if (key == "features.l2_normalize") {
            plan.l2_normalize_features = parse_toggle(value, key);
        } else if (key == "seed") {
            plan.seed = parse_u64(value, key);
        } else if (key.rfind("pillar.", 0) == 0) {
            const auto rest = key.substr(7);
            const auto dot = rest.find('.');
            if (dot == std::string::npos) raise(errc::parse_error, where + ": expected pillar.<id>.<field>");
            const std::string id = rest.substr(0, dot);
            const std::string field = rest.substr(dot + 1);
            PlanPillar& pillar = pillar_of(id);
            if (field == "features") {
                pillar.features = resolve(value);
            } else if (field == "kernel") {
                if (value == "rbf") pillar.kind = KernelKind::rbf;
                else if (value == "linear") pillar.kind = KernelKind::linear;
                else raise(errc::parse_error, where + ": kernel must be rbf or linear");
            } else if (field == "gamma") {
                pillar.gamma = parse_gamma(value, key);
            } else if (field == "normalization") {
                if (value == "none") pillar.normalization = KernelNormalization::none;
                else if (value == "unit_mean_diag") pillar.normalization = KernelNormalization::unit_mean_diag;
                else raise(errc::parse_error, where + ": normalization must be none or unit_mean_diag");
            } else if (field == "group") {
                pillar.group = value;
            } else {
                raise(errc::parse_error, where + ": unknown pillar field '" + field + "'");
            }
        } else {
            raise(errc::parse_error, where + ": unknown key '" + key + "'");
        }
    }

    std::sort(split_files.begin(), split_files.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [id, file] : split_files) plan.split_paths.push_back(std::move(file));
    for (const auto& pillar : plan.pillars) {
        require(!pillar.features.empty(), errc::parse_error,
                path.string() + ": pillar " + pillar.id + " has no features path");
    }
    return plan;
}

void write_plan(const FusionPlan& plan, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) raise(errc::io_failure, path.string() + ": cannot open for writing");
    out.precision(17);
    out << "labels = " << plan.labels_path.string() << "\n";
    for (std::size_t s = 0; s < plan.split_paths.size(); ++s) {
        out << "split." << (s + 1) << " = " << plan.split_paths[s].string() << "\n";
    }
    out << "fusion.mode = " << fusion_mode_name(plan.mode) << "\n";
    out << "fusion.norm = " << norm_name(plan.norm) << "\n";
    out << "svm.C = " << plan.C << "\n";
    out << "svm.tol = " << plan.svm_tol << "\n";
    out << "mkl.eps = " << plan.mkl_eps << "\n";
    out << "mkl.tol = " << plan.mkl_tol << "\n";
    out << "mkl.max_cuts = " << plan.mkl_max_cuts << "\n";
    out << "mkl.max_iter = " << plan.mkl_max_iter << "\n";
    out << "features.l2_normalize = " << (plan.l2_normalize_features ? "on" : "off") << "\n";
    out << "seed = " << plan.seed << "\n";
    for (const auto& pillar : plan.pillars) {
        out << "pillar." << pillar.id << ".features = " << pillar.features.string() << "\n";
        out << "pillar." << pillar.id << ".kernel = " << kernel_kind_name(pillar.kind) << "\n";
        out << "pillar." << pillar.id << ".gamma = " << gamma_to_string(pillar.gamma) << "\n";
        out << "pillar." << pillar.id << ".normalization = " << normalization_name(pillar.normalization)
            << "\n";
        if (!pillar.group.empty()) out << "pillar." << pillar.id << ".group = " << pillar.group << "\n";
    }
    out.close();
    if (!out) raise(errc::io_failure, path.string() + ": write failed");
}

// ------------------------------------------------------------------ reports

namespace {

ordered_json plan_to_json(const FusionPlan& plan) {
    ordered_json config;
    config["fusion.mode"] = fusion_mode_name(plan.mode);
    config["fusion.norm"] = norm_name(plan.norm);
    config["svm.C"] = plan.C;
    config["svm.tol"] = plan.svm_tol;
    config["mkl.eps"] = plan.mkl_eps;
    config["mkl.tol"] = plan.mkl_tol;
    config["mkl.max_cuts"] = plan.mkl_max_cuts;
    config["mkl.max_iter"] = plan.mkl_max_iter;
    config["features.l2_normalize"] = plan.l2_normalize_features;
    config["seed"] = plan.seed;
    config["labels"] = plan.labels_path.string();
    ordered_json split_paths = ordered_json::array();
    for (const auto& p : plan.split_paths) split_paths.push_back(p.string());
    config["splits"] = std::move(split_paths);
    ordered_json pillars = ordered_json::array();
    for (const auto& pillar : plan.pillars) {
        ordered_json p;
        p["id"] = pillar.id;
        p["features"] = pillar.features.string();
        p["kernel"] = kernel_kind_name(pillar.kind);
        p["gamma"] = gamma_to_string(pillar.gamma);
        p["normalization"] = normalization_name(pillar.normalization);
        p["group"] = pillar.group;
        pillars.push_back(std::move(p));
    }
    config["pillars"] = std::move(pillars);
    return config;
}

FusionPlan plan_from_json(const ordered_json& config) {
    FusionPlan plan;
    plan.mode = config.at("fusion.mode") == "flat" ? FusionMode::flat : FusionMode::staged;
    plan.norm = config.at("fusion.norm") == "l1" ? MklNorm::l1 : MklNorm::l2;
    plan.C = config.at("svm.C").get<double>();
    plan.svm_tol = config.at("svm.tol").get<double>();
    plan.mkl_eps = config.at("mkl.eps").get<double>();
    plan.mkl_tol = config.at("mkl.tol").get<double>();
    plan.mkl_max_cuts = config.at("mkl.max_cuts").get<std::size_t>();
    plan.mkl_max_iter = config.at("mkl.max_iter").get<std::size_t>();
    plan.l2_normalize_features = config.at("features.l2_normalize").get<bool>();
    plan.seed = config.at("seed").get<std::uint64_t>();
    plan.labels_path = config.at("labels").get<std::string>();
    for (const auto& p : config.at("splits")) plan.split_paths.emplace_back(p.get<std::string>());
    for (const auto& p : config.at("pillars")) {
        PlanPillar pillar;
        pillar.id = p.at("id").get<std::string>();
        pillar.features = p.at("features").get<std::string>();
        pillar.kind = p.at("kernel") == "linear" ? KernelKind::linear : KernelKind::rbf;
        const std::string gamma = p.at("gamma").get<std::string>();
        pillar.gamma = parse_gamma(gamma, "pillar." + pillar.id + ".gamma");
        pillar.normalization = p.at("normalization") == "none" ? KernelNormalization::none
                                                               : KernelNormalization::unit_mean_diag;
        pillar.group = p.at("group").get<std::string>();
        plan.pillars.push_back(std::move(pillar));
    }
    return plan;
}

// split rows print as percent with one decimal (table style); the Average row
// is the exact mean of those printed values, so it may carry more digits
std::string percent_1dp(double fraction) {
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%.1f", fraction * 100.0);
    return buffer;
}

std::string number_to_string(double value) {
    std::ostringstream out;
    out.precision(15);
    out << value;
    return out.str();
}

double round_1dp_percent(double fraction) {
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%.1f", fraction * 100.0);
    return std::strtod(buffer, nullptr);
}

}  // namespace

std::string render_accuracy_csv(const Report& report) {
    std::ostringstream out;
    out << "split";
    for (const auto& id : report.pillar_ids) out << ',' << id;
    for (const auto& id : report.group_ids) out << ',' << id << " (mkl)";
    out << ",fused (mkl)\n";

    const std::size_t n_cols = report.pillar_ids.size() + report.group_ids.size() + 1;
    std::vector<double> column_sums(n_cols, 0.0);
    for (const auto& split : report.per_split) {
        out << "split-" << split.split_id;
        std::size_t col = 0;
        for (double v : split.per_pillar_accuracy) {
            out << ',' << percent_1dp(v);
            column_sums[col++] += round_1dp_percent(v);
        }
        for (double v : split.per_group_accuracy) {
            out << ',' << percent_1dp(v);
            column_sums[col++] += round_1dp_percent(v);
        }
        out << ',' << percent_1dp(split.fused_accuracy);
        column_sums[col] += round_1dp_percent(split.fused_accuracy);
        out << '\n';
    }
    out << "Average";
    const double inv = 1.0 / double(report.per_split.size());
    for (double sum : column_sums) out << ',' << number_to_string(sum * inv);
    out << '\n';
    return out.str();
}

std::string report_to_json_text(const Report& report) {
    ordered_json j;
    j["config"] = plan_to_json(report.config);
    j["pillar_ids"] = report.pillar_ids;
    j["group_ids"] = report.group_ids;
    ordered_json splits = ordered_json::array();
    for (const auto& split : report.per_split) {
        ordered_json s;
        s["split_id"] = split.split_id;
        s["per_pillar_accuracy"] = split.per_pillar_accuracy;
        s["per_group_accuracy"] = split.per_group_accuracy;
        s["fused_accuracy"] = split.fused_accuracy;
        s["confusion"] = split.confusion;
        s["converged"] = split.converged;
        splits.push_back(std::move(s));
    }
    j["splits"] = std::move(splits);
    ordered_json average;
    average["per_pillar_accuracy"] = report.average_per_pillar;
    average["per_group_accuracy"] = report.average_per_group;
    average["fused_accuracy"] = report.average_fused;
    j["average"] = std::move(average);
    j["all_converged"] = report.all_converged;
    return j.dump(2) + "\n";
}

void emit_report(const Report& report, const std::filesystem::path& stem) {
    {
        const std::filesystem::path path = stem.string() + ".report.json";
        std::ofstream out(path, std::ios::trunc | std::ios::binary);
        if (!out) raise(errc::io_failure, path.string() + ": cannot open for writing");
        out << report_to_json_text(report);
        out.close();
        if (!out) raise(errc::io_failure, path.string() + ": write failed");
    }
    {
        const std::filesystem::path path = stem.string() + ".accuracy.csv";
        std::ofstream out(path, std::ios::trunc | std::ios::binary);
        if (!out) raise(errc::io_failure, path.string() + ": cannot open for writing");
        out << render_accuracy_csv(report);
        out.close();
        if (!out) raise(errc::io_failure, path.string() + ": write failed");
    }
}

Report load_report(const std::filesystem::path& json_path) {
    std::ifstream in(json_path);
    if (!in) raise(errc::io_failure, json_path.string() + ": cannot open for reading");
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        raise(errc::parse_error, json_path.string() + ": " + e.what());
    }
    Report report;
    report.config = plan_from_json(j.at("config"));
    report.pillar_ids = j.at("pillar_ids").get<std::vector<std::string>>();
    report.group_ids = j.at("group_ids").get<std::vector<std::string>>();
    for (const auto& s : j.at("splits")) {
        SplitResult split;
        split.split_id = s.at("split_id").get<int>();
        split.per_pillar_accuracy = s.at("per_pillar_accuracy").get<std::vector<double>>();
        split.per_group_accuracy = s.at("per_group_accuracy").get<std::vector<double>>();
        split.fused_accuracy = s.at("fused_accuracy").get<double>();
        split.confusion = s.at("confusion").get<std::vector<std::vector<std::size_t>>>();
        split.converged = s.at("converged").get<bool>();
        report.per_split.push_back(std::move(split));
    }
    report.average_per_pillar = j.at("average").at("per_pillar_accuracy").get<std::vector<double>>();
    report.average_per_group = j.at("average").at("per_group_accuracy").get<std::vector<double>>();
    report.average_fused = j.at("average").at("fused_accuracy").get<double>();
    report.all_converged = j.at("all_converged").get<bool>();
    return report;
}

}  // namespace pillar
