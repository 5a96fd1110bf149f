// pillarfuse: command-line front end for the multi-kernel fusion engine.
// Subcommands cover fixture generation, kernel construction, SVM and MKL
// training, the three-split evaluation protocol, Fisher-vector encoding and
// artifact inspection. Exit codes: 0 success, 1 user/data error, 2 internal
// error (including solver non-convergence under --strict).

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "pillar/dataio.hpp"
#include "pillar/fisher.hpp"
#include "pillar/kernels.hpp"
#include "pillar/mkl.hpp"
#include "pillar/pipeline.hpp"
#include "pillar/svm.hpp"

namespace fs = std::filesystem;
using namespace pillar;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUserError = 1;
constexpr int kExitInternalError = 2;

int default_threads() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

GammaSpec gamma_from_flag(const std::string& value) {
    GammaSpec g;
    if (value == "scale") {
        g.mode = GammaSpec::Mode::scale;
    } else if (value == "median") {
        g.mode = GammaSpec::Mode::median;
    } else {
        g.mode = GammaSpec::Mode::fixed;
        g.value = std::stod(value);
        if (!(g.value > 0.0)) raise(errc::invalid_spec, "--gamma: explicit gamma must be positive");
    }
    return g;
}

KernelNormalization normalization_from_flag(const std::string& value) {
    if (value == "none") return KernelNormalization::none;
    if (value == "unit_mean_diag") return KernelNormalization::unit_mean_diag;
    raise(errc::invalid_spec, "--normalize must be none or unit_mean_diag, got '" + value + "'");
}

// loaded kernel restricted to the split: train x train plus test x train
struct SplitKernel {
    KernelMatrix train;
    Matrix64 test_train;
};

SplitKernel slice_kernel(const KernelMatrix& k, const SplitDefinition& split) {
    SplitKernel out;
    out.train = KernelMatrix(split.train_indices.size());
    out.train.provenance = k.provenance;
    for (std::size_t i = 0; i < split.train_indices.size(); ++i) {
        for (std::size_t j = 0; j < split.train_indices.size(); ++j) {
            out.train.at(i, j) = k.at(split.train_indices[i], split.train_indices[j]);
        }
    }
    out.test_train = Matrix64(split.test_indices.size(), split.train_indices.size());
    for (std::size_t i = 0; i < split.test_indices.size(); ++i) {
        for (std::size_t j = 0; j < split.train_indices.size(); ++j) {
            out.test_train.at(i, j) = k.at(split.test_indices[i], split.train_indices[j]);
        }
    }
    return out;
}

// ----------------------------------------------------------------- synth

int cmd_synth(const fs::path& out_dir, std::size_t samples, int classes, int pillars, int views,
              std::size_t dims, double sigma, std::uint64_t seed, const std::string& fusion_norm) {
    if (views < 1 || pillars % views != 0) {
        std::cerr << "--views must divide --pillars\n";
        return kExitUserError;
    }
    const int groups = pillars / views;

    SyntheticSpec spec;
    spec.n_samples = samples;
    spec.n_classes = classes;
    spec.seed = seed;
    for (int p = 0; p < pillars; ++p) {
        const int group = p / views;
        const int view = p % views;
        PillarSpec pillar;
        pillar.n_dims = dims;
        pillar.noise_sigma = sigma * (1.0 + 0.5 * view);  // later views are noisier
        const int lo = group * classes / groups;
        const int hi = (group + 1) * classes / groups;
        for (int c = lo; c < hi; ++c) pillar.informative_classes.push_back(c);
        spec.pillars.push_back(std::move(pillar));
    }

    const SyntheticDataset data = generate_synthetic_pillars(spec);
    fs::create_directories(out_dir);
    FusionPlan plan;
    plan.seed = seed;
    plan.norm = fusion_norm == "l1" ? MklNorm::l1 : MklNorm::l2;
    plan.mode = views > 1 ? FusionMode::staged : FusionMode::flat;
    for (int p = 0; p < pillars; ++p) {
        const std::string name = "p" + std::to_string(p);
        const fs::path file = out_dir / (name + ".plrf");
        write_feature_matrix(data.pillars[static_cast<std::size_t>(p)], file);
        PlanPillar entry;
        entry.id = name;
        entry.features = file.filename();
        entry.kind = KernelKind::rbf;
        entry.gamma.mode = GammaSpec::Mode::scale;
        entry.normalization = KernelNormalization::unit_mean_diag;
        entry.group = "net" + std::to_string(p / views);
        plan.pillars.push_back(std::move(entry));
    }
    write_labels(data.labels, out_dir / "labels.txt");
    plan.labels_path = "labels.txt";
    for (const auto& split : data.splits) {
        const std::string name = "split" + std::to_string(split.split_id) + ".txt";
        write_split(split, out_dir / name);
        plan.split_paths.emplace_back(name);
    }
    write_plan(plan, out_dir / "plan.txt");
    std::cout << "wrote " << pillars << " pillars, labels, 3 splits and plan.txt under " << out_dir.string()
              << "\n";
    return kExitOk;
}

// ------------------------------------------------------------ make-kernels

int cmd_make_kernels(const fs::path& features_path, const std::string& kind, const std::string& gamma,
                     const std::string& normalize, const std::string& id, const fs::path& out,
                     int threads) {
    const FeatureMatrix features = load_feature_matrix(features_path);
    KernelParams params;
    if (kind == "rbf") {
        const GammaSpec g = gamma_from_flag(gamma);
        double value = g.value;
        if (g.mode == GammaSpec::Mode::scale) value = gamma_heuristic(features, GammaMode::scale);
        if (g.mode == GammaSpec::Mode::median) value = gamma_heuristic(features, GammaMode::median);
        params = KernelParams::rbf(value);
    } else if (kind == "linear") {
        params = KernelParams::linear();
    } else {
        std::cerr << "--kind must be rbf or linear\n";
        return kExitUserError;
    }
    KernelMatrix k = kernel_gram_self(features, params, threads);
    k.provenance.source_id = id.empty() ? features_path.stem().string() : id;
    k = normalize_kernel(k, normalization_from_flag(normalize));
    save_kernel(k, out);
    std::cout << "wrote " << k.n << "x" << k.n << " " << kernel_kind_name(params.kind) << " kernel to "
              << out.string() << "\n";
    return kExitOk;
}

// --------------------------------------------------------------- train-svm

int cmd_train_svm(const fs::path& kernel_path, const fs::path& labels_path, const fs::path& split_path,
                  double C, double tol, std::size_t max_iter, const fs::path& out, bool strict,
                  int threads) {
    const KernelMatrix kernel = load_kernel(kernel_path);
    const LabelVector labels = load_labels(labels_path);
    require(labels.labels.size() == kernel.n, errc::shape_mismatch,
            "labels/kernel size mismatch: " + std::to_string(labels.labels.size()) + " vs " +
                std::to_string(kernel.n));
    const SplitDefinition split = load_split(split_path, kernel.n, 1);
    const SplitKernel sliced = slice_kernel(kernel, split);

    LabelVector train_labels;
    train_labels.n_classes = labels.n_classes;
    for (std::size_t i : split.train_indices) train_labels.labels.push_back(labels.labels[i]);

    MulticlassSvmModel model =
        train_one_vs_rest(sliced.train, train_labels, C, tol, max_iter, threads);
    for (auto& binary : model.per_class) {
        for (std::size_t t = 0; t < binary.train_index_map.size(); ++t) {
            binary.train_index_map[t] = split.train_indices[t];
        }
    }
    if (!out.empty()) save_svm(model, out);

    std::vector<int> test_truth;
    for (std::size_t i : split.test_indices) test_truth.push_back(labels.labels[i]);
    const Prediction train_pred = predict_multiclass(model, [&] {
        Matrix64 block(split.train_indices.size(), split.train_indices.size());
        block.values = sliced.train.values;
        return block;
    }());
    const Prediction test_pred = predict_multiclass(model, sliced.test_train);
    std::printf("train accuracy: %.4f\n", accuracy(train_pred.labels, train_labels.labels));
    std::printf("test accuracy:  %.4f\n", accuracy(test_pred.labels, test_truth));

    const bool converged = std::all_of(model.per_class.begin(), model.per_class.end(),
                                       [](const BinarySvmModel& m) { return m.converged; });
    if (!converged) {
        std::cerr << "warning: SMO hit the iteration cap on at least one class\n";
        if (strict) return kExitInternalError;
    }
    return kExitOk;
}

// --------------------------------------------------------------- train-mkl

int cmd_train_mkl(const std::vector<fs::path>& kernel_paths, const fs::path& labels_path,
                  const fs::path& split_path, const std::string& norm, double C, double eps, double tol,
                  std::size_t max_cuts, std::size_t max_iter, const fs::path& out,
                  const fs::path& trace_path, bool strict, int threads) {
    require(!kernel_paths.empty(), errc::invalid_spec, "--kernels: need at least one kernel file");
    std::vector<KernelMatrix> kernels;
    for (const auto& path : kernel_paths) kernels.push_back(load_kernel(path));
    const LabelVector labels = load_labels(labels_path);
    require(labels.labels.size() == kernels[0].n, errc::shape_mismatch,
            "labels/kernel size mismatch");
    const SplitDefinition split = load_split(split_path, kernels[0].n, 1);

    LabelVector train_labels;
    train_labels.n_classes = labels.n_classes;
    for (std::size_t i : split.train_indices) train_labels.labels.push_back(labels.labels[i]);

    std::vector<KernelMatrix> train_kernels;
    std::vector<Matrix64> test_blocks;
    for (const auto& k : kernels) {
        SplitKernel sliced = slice_kernel(k, split);
        train_kernels.push_back(std::move(sliced.train));
        test_blocks.push_back(std::move(sliced.test_train));
    }

    MklOptions options;
    options.n_threads = threads;
    const MklModel model = norm == "l1"
                               ? silp_l1(train_kernels, train_labels, C, eps, max_cuts, options)
                               : l2_mkl(train_kernels, train_labels, C, tol, max_iter, options);
    if (!out.empty()) save_mkl(model, out);
    if (!trace_path.empty()) write_trace_csv(model, trace_path);

    std::cout << "beta:";
    for (double b : model.beta) std::printf(" %.6f", b);
    std::cout << "\n";
    std::vector<int> test_truth;
    for (std::size_t i : split.test_indices) test_truth.push_back(labels.labels[i]);
    const Prediction prediction = mkl_predict(model, test_blocks);
    std::printf("test accuracy: %.4f\n", accuracy(prediction.labels, test_truth));
    if (!model.converged) {
        std::cerr << "warning: MKL stopped before reaching its tolerance\n";
        if (strict) return kExitInternalError;
    }
    return kExitOk;
}

// ------------------------------------------------------------ run-protocol

int cmd_run_protocol(const fs::path& plan_path, const fs::path& out_stem, bool scores, bool strict,
                     int threads, const CLI::App* cmd) {
    FusionPlan plan = parse_plan(plan_path);

    // dotted-flag overrides win over plan-file keys
    auto overridden = [&](const std::string& flag) { return cmd->count(flag) > 0; };
    if (overridden("--fusion.mode")) {
        const std::string v = cmd->get_option("--fusion.mode")->as<std::string>();
        plan.mode = v == "flat" ? FusionMode::flat : FusionMode::staged;
    }
    if (overridden("--fusion.norm")) {
        const std::string v = cmd->get_option("--fusion.norm")->as<std::string>();
        plan.norm = v == "l1" ? MklNorm::l1 : MklNorm::l2;
    }
    if (overridden("--svm.C")) plan.C = cmd->get_option("--svm.C")->as<double>();
    if (overridden("--svm.tol")) plan.svm_tol = cmd->get_option("--svm.tol")->as<double>();
    if (overridden("--mkl.eps")) plan.mkl_eps = cmd->get_option("--mkl.eps")->as<double>();
    if (overridden("--mkl.tol")) plan.mkl_tol = cmd->get_option("--mkl.tol")->as<double>();
    if (overridden("--mkl.max_cuts")) plan.mkl_max_cuts = cmd->get_option("--mkl.max_cuts")->as<std::size_t>();
    if (overridden("--mkl.max_iter")) plan.mkl_max_iter = cmd->get_option("--mkl.max_iter")->as<std::size_t>();
    if (overridden("--seed")) plan.seed = cmd->get_option("--seed")->as<std::uint64_t>();
    if (overridden("--features.l2_normalize")) {
        plan.l2_normalize_features = cmd->get_option("--features.l2_normalize")->as<bool>();
    }

    require(!plan.labels_path.empty(), errc::invalid_spec, plan_path.string() + ": plan has no labels key");
    require(!plan.split_paths.empty(), errc::invalid_spec, plan_path.string() + ": plan has no split keys");
    for (const auto& pillar : plan.pillars) {
        require(fs::exists(pillar.features), errc::io_failure,
                "pillar " + pillar.id + ": missing feature file " + pillar.features.string());
    }
    const LabelVector labels = load_labels(plan.labels_path);
    std::vector<SplitDefinition> splits;
    for (std::size_t s = 0; s < plan.split_paths.size(); ++s) {
        splits.push_back(load_split(plan.split_paths[s], labels.labels.size(), static_cast<int>(s + 1)));
    }

    ProtocolOptions options;
    options.n_threads = threads;
    if (scores) {
        const fs::path dir = out_stem.parent_path().empty() ? fs::path(".") : out_stem.parent_path();
        fs::create_directories(dir);
        options.score_dir = dir;
    } else if (!out_stem.parent_path().empty()) {
        fs::create_directories(out_stem.parent_path());
    }

    const Report report = run_protocol(plan, labels, splits, options);
    emit_report(report, out_stem);
    std::cout << render_accuracy_csv(report);
    if (!report.all_converged) {
        std::cerr << "warning: at least one solver stopped before reaching its tolerance\n";
        if (strict) return kExitInternalError;
    }
    return kExitOk;
}

// ----------------------------------------------------------- encode-fisher

int cmd_encode_fisher(const fs::path& manifest_path, std::size_t components, std::uint64_t seed,
                      const fs::path& out, const fs::path& gmm_out, const std::string& normalization,
                      int threads) {
    std::ifstream manifest(manifest_path);
    if (!manifest) raise(errc::io_failure, manifest_path.string() + ": cannot open for reading");
    const fs::path base = manifest_path.parent_path();
    std::vector<FeatureMatrix> descriptor_sets;
    std::string line;
    while (std::getline(manifest, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const fs::path p(line);
        descriptor_sets.push_back(load_feature_matrix(p.is_absolute() ? p : base / p));
    }
    require(!descriptor_sets.empty(), errc::empty_descriptor_set,
            manifest_path.string() + ": manifest lists no descriptor files");
    const std::size_t dim = descriptor_sets[0].n_dims;
    std::size_t total = 0;
    for (const auto& set : descriptor_sets) {
        require(set.n_dims == dim, errc::dimension_mismatch,
                manifest_path.string() + ": descriptor dims differ across files");
        total += set.n_samples;
    }

    // pool descriptors across samples for the mixture fit
    FeatureMatrix pooled(total, dim);
    std::size_t at = 0;
    for (const auto& set : descriptor_sets) {
        std::copy(set.values.begin(), set.values.end(), pooled.values.begin() + at * dim);
        at += set.n_samples;
    }
    const GmmModel gmm = gmm_em(pooled, components, seed);
    const FvNormalization mode =
        normalization == "raw" ? FvNormalization::raw : FvNormalization::improved;
    const FeatureMatrix encoded = encode_corpus(gmm, descriptor_sets, mode, threads);
    write_feature_matrix(encoded, out);
    if (!gmm_out.empty()) save_gmm(gmm, gmm_out);
    std::cout << "encoded " << encoded.n_samples << " samples into " << encoded.n_dims
              << "-dim Fisher vectors (K=" << components << ", D=" << dim << ")\n";
    return kExitOk;
}

// ----------------------------------------------------------------- inspect

int cmd_inspect(const fs::path& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) raise(errc::io_failure, path.string() + ": cannot open for reading");
    char magic[4] = {};
    probe.read(magic, 4);
    if (probe.gcount() != 4) raise(errc::truncated_payload, path.string() + ": shorter than a magic header");
    probe.close();
    const std::string tag(magic, 4);

    if (tag == "PLRF") {
        const FeatureMatrix m = load_feature_matrix(path);
        std::printf("PLRF feature matrix: %zu samples x %zu dims, all values finite\n", m.n_samples,
                    m.n_dims);
    } else if (tag == "PLRK") {
        const KernelMatrix k = load_kernel(path);
        const PsdCheck psd = check_psd(k);
        std::printf("PLRK kernel: n=%zu, source='%s', kind=%s, normalization=%s\n", k.n,
                    k.provenance.source_id.c_str(), kernel_kind_name(k.provenance.kind).c_str(),
                    normalization_name(k.provenance.normalization).c_str());
        std::printf("symmetry: exact, finite: yes, psd: %s\n", psd.pass ? "pass" : "FAIL");
    } else if (tag == "PLSV") {
        const MulticlassSvmModel m = load_svm(path);
        std::printf("PLSV svm model: %zu class-vs-rest models, n_classes=%d\n", m.per_class.size(),
                    m.n_classes);
        for (const auto& binary : m.per_class) {
            double eq = 0.0;
            for (std::size_t t = 0; t < binary.alpha.size(); ++t) {
                eq += binary.alpha[t] * double(binary.y[t]);
            }
            std::printf(
                "  class %d: n=%zu, support=%zu, b=%.6g, C=%g, converged=%d, |sum alpha_i y_i|=%.3g\n",
                binary.class_id, binary.alpha.size(), binary.support_indices.size(), binary.b, binary.C,
                binary.converged ? 1 : 0, std::abs(eq));
        }
    } else if (tag == "PLMK") {
        const MklModel m = load_mkl(path);
        std::printf("PLMK mkl model: %zu kernels, norm=%s, converged=%d\n", m.beta.size(),
                    m.norm_mode == MklNorm::l1 ? "l1" : "l2", m.converged ? 1 : 0);
        double l1 = 0.0, l2 = 0.0;
        for (double b : m.beta) {
            l1 += b;
            l2 += b * b;
        }
        std::printf("  sum beta=%.12f, sum beta^2=%.12f\n", l1, l2);
        for (std::size_t k = 0; k < m.beta.size(); ++k) {
            std::printf("  beta[%s] = %.6f\n", m.kernel_ids[k].c_str(), m.beta[k]);
        }
    } else if (tag == "PLGM") {
        const GmmModel g = load_gmm(path);
        double total = 0.0;
        for (double w : g.weights) total += w;
        std::printf("PLGM mixture: K=%zu, D=%zu, sum weights=%.12f, all variances positive\n",
                    g.n_components, g.dim, total);
    } else {
        raise(errc::bad_magic, path.string() + ": unrecognized magic '" + tag + "'");
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pillarfuse: multi-kernel fusion engine for multi-stream classifiers"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a seeded synthetic multi-pillar fixture");
    fs::path synth_out = "fixture";
    std::size_t synth_samples = 400;
    int synth_classes = 4, synth_pillars = 2, synth_views = 1;
    std::size_t synth_dims = 16;
    double synth_sigma = 0.3;
    std::uint64_t synth_seed = 7;
    std::string synth_norm = "l2";
    synth->add_option("--out", synth_out, "output directory");
    synth->add_option("--samples", synth_samples, "sample count")->check(CLI::PositiveNumber);
    synth->add_option("--classes", synth_classes, "class count")->check(CLI::Range(2, 1 << 20));
    synth->add_option("--pillars", synth_pillars, "pillar count")->check(CLI::PositiveNumber);
    synth->add_option("--views", synth_views, "views per network group (must divide --pillars)")
        ->check(CLI::PositiveNumber);
    synth->add_option("--dims", synth_dims, "dims per pillar")->check(CLI::PositiveNumber);
    synth->add_option("--sigma", synth_sigma, "base noise sigma")->check(CLI::NonNegativeNumber);
    synth->add_option("--seed", synth_seed, "rng seed");
    synth->add_option("--norm", synth_norm, "fusion norm written to the plan (l1|l2)")
        ->check(CLI::IsMember({"l1", "l2"}));

    // make-kernels
    auto* makek = app.add_subcommand("make-kernels", "compute and cache a Gram matrix");
    fs::path mk_features, mk_out = "kernel.plrk";
    std::string mk_kind = "rbf", mk_gamma = "scale", mk_norm = "unit_mean_diag", mk_id;
    int mk_threads = default_threads();
    makek->add_option("--features", mk_features, "PLRF feature file")->required();
    makek->add_option("--kind", mk_kind, "rbf|linear");
    makek->add_option("--gamma", mk_gamma, "scale|median|<positive value>");
    makek->add_option("--normalize", mk_norm, "none|unit_mean_diag");
    makek->add_option("--id", mk_id, "provenance source id (default: feature file stem)");
    makek->add_option("--out", mk_out, "output PLRK path");
    makek->add_option("--threads", mk_threads, "worker cap");

    // train-svm
    auto* tsvm = app.add_subcommand("train-svm", "train a one-vs-rest SVM on a cached kernel");
    fs::path ts_kernel, ts_labels, ts_split, ts_out;
    double ts_C = 100.0, ts_tol = 1e-3;
    std::size_t ts_max_iter = 10'000'000;
    bool ts_strict = false;
    int ts_threads = default_threads();
    tsvm->add_option("--kernel", ts_kernel, "PLRK kernel over all samples")->required();
    tsvm->add_option("--labels", ts_labels, "label file")->required();
    tsvm->add_option("--split", ts_split, "split file")->required();
    tsvm->add_option("--C", ts_C, "penalty parameter")->check(CLI::PositiveNumber);
    tsvm->add_option("--tol", ts_tol, "KKT tolerance")->check(CLI::PositiveNumber);
    tsvm->add_option("--max-iter", ts_max_iter, "SMO pair-update cap");
    tsvm->add_option("--out", ts_out, "output PLSV path");
    tsvm->add_flag("--strict", ts_strict, "exit 2 if the solver does not converge");
    tsvm->add_option("--threads", ts_threads, "worker cap");

    // train-mkl
    auto* tmkl = app.add_subcommand("train-mkl", "learn sub-kernel weights and a fused SVM");
    std::vector<fs::path> tm_kernels;
    fs::path tm_labels, tm_split, tm_out, tm_trace;
    std::string tm_norm = "l2";
    double tm_C = 100.0, tm_eps = 1e-3, tm_tol = 1e-5;
    std::size_t tm_max_cuts = 300, tm_max_iter = 100;
    bool tm_strict = false;
    int tm_threads = default_threads();
    tmkl->add_option("--kernels", tm_kernels, "PLRK kernel files")->required()->delimiter(',');
    tmkl->add_option("--labels", tm_labels, "label file")->required();
    tmkl->add_option("--split", tm_split, "split file")->required();
    tmkl->add_option("--norm", tm_norm, "l1|l2")->check(CLI::IsMember({"l1", "l2"}));
    tmkl->add_option("--C", tm_C, "penalty parameter")->check(CLI::PositiveNumber);
    tmkl->add_option("--eps", tm_eps, "silp termination gap")->check(CLI::PositiveNumber);
    tmkl->add_option("--tol", tm_tol, "l2 beta tolerance")->check(CLI::PositiveNumber);
    tmkl->add_option("--max-cuts", tm_max_cuts, "silp cut cap");
    tmkl->add_option("--max-iter", tm_max_iter, "l2 iteration cap");
    tmkl->add_option("--out", tm_out, "output PLMK path");
    tmkl->add_option("--trace", tm_trace, "solver trace CSV path");
    tmkl->add_flag("--strict", tm_strict, "exit 2 if the solver does not converge");
    tmkl->add_option("--threads", tm_threads, "worker cap");

    // run-protocol
    auto* proto = app.add_subcommand("run-protocol", "run the three-split evaluation protocol");
    fs::path rp_plan, rp_out = "run";
    bool rp_scores = false, rp_strict = false;
    int rp_threads = default_threads();
    std::string rp_mode, rp_norm;
    double rp_C = 0, rp_svm_tol = 0, rp_eps = 0, rp_tol = 0;
    std::size_t rp_max_cuts = 0, rp_max_iter = 0;
    std::uint64_t rp_seed = 0;
    bool rp_l2norm = false;
    proto->add_option("--plan", rp_plan, "plan file")->required();
    proto->add_option("--out", rp_out, "output stem for <stem>.report.json and <stem>.accuracy.csv");
    proto->add_flag("--scores", rp_scores, "emit per-stage score matrices next to the reports");
    proto->add_flag("--strict", rp_strict, "exit 2 if any solver does not converge");
    proto->add_option("--threads", rp_threads, "worker cap");
    proto->add_option("--fusion.mode", rp_mode, "override: flat|staged")->check(CLI::IsMember({"flat", "staged"}));
    proto->add_option("--fusion.norm", rp_norm, "override: l1|l2")->check(CLI::IsMember({"l1", "l2"}));
    proto->add_option("--svm.C", rp_C, "override: penalty parameter")->check(CLI::PositiveNumber);
    proto->add_option("--svm.tol", rp_svm_tol, "override: KKT tolerance")->check(CLI::PositiveNumber);
    proto->add_option("--mkl.eps", rp_eps, "override: silp gap")->check(CLI::PositiveNumber);
    proto->add_option("--mkl.tol", rp_tol, "override: l2 tolerance")->check(CLI::PositiveNumber);
    proto->add_option("--mkl.max_cuts", rp_max_cuts, "override: silp cut cap");
    proto->add_option("--mkl.max_iter", rp_max_iter, "override: l2 iteration cap");
    proto->add_option("--seed", rp_seed, "override: seed echoed into the report");
    proto->add_option("--features.l2_normalize", rp_l2norm, "override: l2-normalize feature rows");

    // encode-fisher
    auto* fisher = app.add_subcommand("encode-fisher", "fit a GMM and Fisher-encode descriptor sets");
    fs::path ef_manifest, ef_out = "fisher.plrf", ef_gmm;
    std::size_t ef_k = 64;
    std::uint64_t ef_seed = 7;
    std::string ef_norm = "improved";
    int ef_threads = default_threads();
    fisher->add_option("--manifest", ef_manifest, "text file listing PLRF descriptor files")->required();
    fisher->add_option("--components", ef_k, "mixture size K")->check(CLI::PositiveNumber);
    fisher->add_option("--seed", ef_seed, "rng seed");
    fisher->add_option("--out", ef_out, "output PLRF Fisher-vector matrix");
    fisher->add_option("--gmm-out", ef_gmm, "output PLGM mixture file");
    fisher->add_option("--normalization", ef_norm, "raw|improved")->check(CLI::IsMember({"raw", "improved"}));
    fisher->add_option("--threads", ef_threads, "worker cap");

    // inspect
    auto* inspect = app.add_subcommand("inspect", "print header and invariant checks for any artifact file");
    fs::path in_file;
    inspect->add_option("file", in_file, "PLRF/PLRK/PLSV/PLMK/PLGM file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUserError;
    }

    try {
        if (synth->parsed()) {
            return cmd_synth(synth_out, synth_samples, synth_classes, synth_pillars, synth_views,
                             synth_dims, synth_sigma, synth_seed, synth_norm);
        }
        if (makek->parsed()) {
            return cmd_make_kernels(mk_features, mk_kind, mk_gamma, mk_norm, mk_id, mk_out, mk_threads);
        }
        if (tsvm->parsed()) {
            return cmd_train_svm(ts_kernel, ts_labels, ts_split, ts_C, ts_tol, ts_max_iter, ts_out,
                                 ts_strict, ts_threads);
        }
        if (tmkl->parsed()) {
            return cmd_train_mkl(tm_kernels, tm_labels, tm_split, tm_norm, tm_C, tm_eps, tm_tol,
                                 tm_max_cuts, tm_max_iter, tm_out, tm_trace, tm_strict, tm_threads);
        }
        if (proto->parsed()) {
            return cmd_run_protocol(rp_plan, rp_out, rp_scores, rp_strict, rp_threads, proto);
        }
        if (fisher->parsed()) {
            return cmd_encode_fisher(ef_manifest, ef_k, ef_seed, ef_out, ef_gmm, ef_norm, ef_threads);
        }
        if (inspect->parsed()) {
            return cmd_inspect(in_file);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUserError;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternalError;
    }
    return kExitUserError;
}
