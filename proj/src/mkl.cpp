#include "pillar/mkl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "pillar/lp.hpp"
#include "binio.hpp"

namespace pillar {

namespace {

void check_kernels(std::span<const KernelMatrix> ks, const LabelVector& labels) {
    require(!ks.empty(), errc::kernel_mismatch, "mkl: no sub-kernels");
    const std::size_t n = ks[0].n;
    for (std::size_t k = 1; k < ks.size(); ++k) {
        require(ks[k].n == n, errc::kernel_mismatch,
                "mkl: kernel " + std::to_string(k) + " is " + std::to_string(ks[k].n) + "x" +
                    std::to_string(ks[k].n) + ", expected " + std::to_string(n));
    }
    require(labels.labels.size() == n, errc::kernel_mismatch,
            "mkl: " + std::to_string(labels.labels.size()) + " labels for " + std::to_string(n) +
                " kernel rows");
}

std::vector<std::string> kernel_ids(std::span<const KernelMatrix> ks) {
    std::vector<std::string> ids;
    ids.reserve(ks.size());
    for (std::size_t k = 0; k < ks.size(); ++k) {
        const std::string& source = ks[k].provenance.source_id;
        ids.push_back(source.empty() ? "kernel" + std::to_string(k) : source);
    }
    return ids;
}

// sum over one-vs-rest subproblems of the quadratic form alpha' Y K Y alpha
double block_quadratic(const MulticlassSvmModel& svm, const KernelMatrix& k) {
    double total = 0.0;
    for (const auto& binary : svm.per_class) {
        double acc = 0.0;
        for (std::size_t i : binary.support_indices) {
            const double* row = k.row(i);
            double inner = 0.0;
            for (std::size_t j : binary.support_indices) {
                inner += binary.alpha[j] * double(binary.y[j]) * row[j];
            }
            acc += binary.alpha[i] * double(binary.y[i]) * inner;
        }
        total += acc;
    }
    return total;
}

bool all_converged(const MulticlassSvmModel& svm) {
    return std::all_of(svm.per_class.begin(), svm.per_class.end(),
                       [](const BinarySvmModel& m) { return m.converged; });
}

// Restricted master: maximize theta s.t. beta . s_t >= theta for every cut,
// beta on the simplex. Variables are [beta_0..beta_{K-1}, theta].
LpSolution solve_master(std::size_t n_kernels, const std::vector<std::vector<double>>& cuts) {
    LpProblem lp;
    lp.objective.assign(n_kernels + 1, 0.0);
    lp.objective[n_kernels] = 1.0;
    for (const auto& cut : cuts) {
        LpConstraint c;
        c.row.assign(n_kernels + 1, 0.0);
        for (std::size_t k = 0; k < n_kernels; ++k) c.row[k] = -cut[k];
        c.row[n_kernels] = 1.0;  // theta - beta . s <= 0
        c.rhs = 0.0;
        lp.ineq.push_back(std::move(c));
    }
    LpConstraint simplex;
    simplex.row.assign(n_kernels + 1, 0.0);
    for (std::size_t k = 0; k < n_kernels; ++k) simplex.row[k] = 1.0;
    simplex.rhs = 1.0;
    lp.eq.push_back(std::move(simplex));
    lp.bounds.assign(n_kernels + 1, LpBound::nonnegative());
    lp.bounds[n_kernels] = LpBound::free();
    LpSolution solution = solve_lp(lp);
    require(solution.status == LpStatus::optimal, errc::malformed_problem,
            "SILP master LP did not solve to optimality");
    return solution;
}

}  // namespace

double sk_objective(std::span<const double> alpha, std::span<const signed char> y,
                    const KernelMatrix& k) {
    require(alpha.size() == k.n && y.size() == k.n, errc::shape_mismatch,
            "sk_objective: alpha/y/kernel sizes differ");
    double linear = 0.0;
    double quad = 0.0;
    for (std::size_t i = 0; i < k.n; ++i) {
        linear += alpha[i];
        if (alpha[i] == 0.0) continue;
        const double* row = k.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < k.n; ++j) {
            if (alpha[j] == 0.0) continue;
            acc += alpha[j] * double(y[j]) * row[j];
        }
        quad += alpha[i] * double(y[i]) * acc;
    }
    return 0.5 * quad - linear;
}

MklModel silp_l1(std::span<const KernelMatrix> ks, const LabelVector& labels, double C, double eps,
                 std::size_t max_cuts, const MklOptions& options) {
    check_kernels(ks, labels);
    const std::size_t n_kernels = ks.size();

    MklModel model;
    model.norm_mode = MklNorm::l1;
    model.kernel_ids = kernel_ids(ks);
    model.beta.assign(n_kernels, 1.0 / double(n_kernels));

    std::vector<std::vector<double>> cuts;
    double best_lower = -std::numeric_limits<double>::infinity();
    bool svm_ok = true;

    for (std::size_t t = 1; t <= max_cuts; ++t) {
        const KernelMatrix fused = combine_kernels(ks, model.beta);
        const MulticlassSvmModel svm =
            train_one_vs_rest(fused, labels, C, options.svm_tol, options.svm_max_iter, options.n_threads);
        svm_ok = svm_ok && all_converged(svm);

        // one cut, summed over the one-vs-rest subproblems
        std::vector<double> cut(n_kernels, 0.0);
        for (std::size_t k = 0; k < n_kernels; ++k) {
            for (const auto& binary : svm.per_class) {
                cut[k] += sk_objective(binary.alpha, binary.y, ks[k]);
            }
        }
        double cut_value = 0.0;  // beta . s at the beta that produced the cut
        for (std::size_t k = 0; k < n_kernels; ++k) cut_value += model.beta[k] * cut[k];
        best_lower = std::max(best_lower, cut_value);
        cuts.push_back(std::move(cut));

        const LpSolution master = solve_master(n_kernels, cuts);
        const double theta = master.v[n_kernels];

        // theta upper-bounds the SILP optimum, cut_value lower-bounds it, so
        // a small gap certifies the beta that generated the cut. Only adopt
        // the new master vertex when the loop continues.
        const double gap =
            std::abs(theta) > 1e-12 ? std::abs(1.0 - cut_value / theta) : std::abs(theta - cut_value);
        model.trace.push_back({t, best_lower, gap});
        if (gap <= eps) {
            model.converged = true;
            break;
        }
        for (std::size_t k = 0; k < n_kernels; ++k) {
            model.beta[k] = std::max(0.0, master.v[k]);
        }
        model.converged = false;
    }

    // final fused model on the master's last beta
    const KernelMatrix fused = combine_kernels(ks, model.beta);
    model.fused_svm =
        train_one_vs_rest(fused, labels, C, options.svm_tol, options.svm_max_iter, options.n_threads);
    model.converged = model.converged && svm_ok && all_converged(model.fused_svm);
    return model;
}

MklModel l2_mkl(std::span<const KernelMatrix> ks, const LabelVector& labels, double C, double tol,
                std::size_t max_iter, const MklOptions& options) {
    check_kernels(ks, labels);
    const std::size_t n_kernels = ks.size();

    MklModel model;
    model.norm_mode = MklNorm::l2;
    model.kernel_ids = kernel_ids(ks);
    model.beta.assign(n_kernels, 1.0 / std::sqrt(double(n_kernels)));

    if (n_kernels == 1) {
        // one coordinate on the unit ball: beta is exactly 1
        const KernelMatrix fused = combine_kernels(ks, model.beta);
        model.fused_svm = train_one_vs_rest(fused, labels, C, options.svm_tol, options.svm_max_iter,
                                            options.n_threads);
        require(block_quadratic(model.fused_svm, ks[0]) > 0.0, errc::all_kernels_inactive,
                "l2_mkl: the sub-kernel block norm is zero");
        double theta = 0.0;
        for (const auto& binary : model.fused_svm.per_class) {
            theta += sk_objective(binary.alpha, binary.y, fused);
        }
        model.trace.push_back({1, theta, 0.0});
        model.converged = all_converged(model.fused_svm);
        return model;
    }

    bool svm_ok = true;
    for (std::size_t t = 1; t <= max_iter; ++t) {
        const KernelMatrix fused = combine_kernels(ks, model.beta);
        const MulticlassSvmModel svm =
            train_one_vs_rest(fused, labels, C, options.svm_tol, options.svm_max_iter, options.n_threads);
        svm_ok = svm_ok && all_converged(svm);

        // squared block norms ||w_k||^2 = beta_k^2 * alpha' Y K_k Y alpha
        std::vector<double> q(n_kernels, 0.0);
        double q_total = 0.0;
        for (std::size_t k = 0; k < n_kernels; ++k) {
            q[k] = model.beta[k] * model.beta[k] * block_quadratic(svm, ks[k]);
            q_total += q[k];
        }
        require(q_total > 0.0, errc::all_kernels_inactive,
                "l2_mkl: every sub-kernel block norm is zero");

        // closed-form minimizer over the nonnegative L2 ball; inactive
        // kernels keep weight zero and drop out of the normalization
        double denom = 0.0;
        for (std::size_t k = 0; k < n_kernels; ++k) denom += std::cbrt(q[k] * q[k]);
        denom = std::sqrt(denom);
        double delta = 0.0;
        for (std::size_t k = 0; k < n_kernels; ++k) {
            const double updated = q[k] > 0.0 ? std::cbrt(q[k]) / denom : 0.0;
            delta = std::max(delta, std::abs(updated - model.beta[k]));
            model.beta[k] = updated;
        }

        // fused negated dual at the pre-update beta
        double theta = 0.0;
        for (const auto& binary : svm.per_class) {
            theta += sk_objective(binary.alpha, binary.y, fused);
        }
        model.trace.push_back({t, theta, delta});
        if (delta <= tol) {
            model.converged = true;
            break;
        }
        model.converged = false;
    }

    const KernelMatrix fused = combine_kernels(ks, model.beta);
    model.fused_svm =
        train_one_vs_rest(fused, labels, C, options.svm_tol, options.svm_max_iter, options.n_threads);
    model.converged = model.converged && svm_ok && all_converged(model.fused_svm);
    return model;
}

Prediction mkl_predict(const MklModel& m, std::span<const Matrix64> ks_test_train) {
    require(ks_test_train.size() == m.beta.size(), errc::shape_mismatch,
            "mkl_predict: " + std::to_string(ks_test_train.size()) + " kernel blocks for " +
                std::to_string(m.beta.size()) + " weights");
    const Matrix64 fused = combine_kernel_blocks(ks_test_train, m.beta);
    return predict_multiclass(m.fused_svm, fused);
}

namespace {

constexpr char kMklMagic[4] = {'P', 'L', 'M', 'K'};
constexpr std::uint32_t kMklVersion = 1;

}  // namespace

void save_mkl(const MklModel& m, const std::filesystem::path& path) {
    detail::BinWriter out(path);
    out.write_magic(kMklMagic);
    out.write_u32(kMklVersion);
    out.write_u32(m.norm_mode == MklNorm::l1 ? 0 : 1);
    out.write_u32(m.converged ? 1 : 0);
    out.write_u64(m.beta.size());
    out.write_array(m.beta);
    for (const auto& id : m.kernel_ids) {
        out.write_u64(id.size());
        out.write_bytes(id.data(), id.size());
    }
    out.write_u64(m.trace.size());
    for (const auto& entry : m.trace) {
        out.write_u64(entry.iteration);
        out.write_bytes(&entry.theta, sizeof entry.theta);
        out.write_bytes(&entry.convergence_gap, sizeof entry.convergence_gap);
    }
    // embedded fused SVM, written through the PLSV serializer
    const std::filesystem::path tmp = path.string() + ".svm.tmp";
    save_svm(m.fused_svm, tmp);
    std::ifstream blob(tmp, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(blob)), std::istreambuf_iterator<char>());
    blob.close();
    std::filesystem::remove(tmp);
    out.write_u64(bytes.size());
    out.write_bytes(bytes.data(), bytes.size());
    out.close();
}

MklModel load_mkl(const std::filesystem::path& path) {
    detail::BinReader in(path);
    in.expect_magic(kMklMagic);
    in.expect_version(kMklVersion);
    MklModel m;
    m.norm_mode = in.read_u32("norm mode") == 0 ? MklNorm::l1 : MklNorm::l2;
    m.converged = in.read_u32("converged") != 0;
    const std::uint64_t n_kernels = in.read_u64("kernel count");
    in.read_array(m.beta, n_kernels, "beta");
    for (double b : m.beta) {
        if (b < 0.0 || !std::isfinite(b)) raise(errc::invalid_header, path.string() + ": negative beta");
    }
    for (std::uint64_t k = 0; k < n_kernels; ++k) {
        const std::uint64_t len = in.read_u64("kernel id length");
        std::string id(len, '\0');
        in.read_bytes(id.data(), len, "kernel id");
        m.kernel_ids.push_back(std::move(id));
    }
    const std::uint64_t n_trace = in.read_u64("trace length");
    for (std::uint64_t t = 0; t < n_trace; ++t) {
        MklTraceEntry entry;
        entry.iteration = in.read_u64("trace iteration");
        in.read_bytes(&entry.theta, sizeof entry.theta, "trace theta");
        in.read_bytes(&entry.convergence_gap, sizeof entry.convergence_gap, "trace gap");
        m.trace.push_back(entry);
    }
    const std::uint64_t blob_len = in.read_u64("svm blob length");
    std::vector<char> bytes(blob_len);
    in.read_bytes(bytes.data(), blob_len, "svm blob");
    const std::filesystem::path tmp = path.string() + ".svm.tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    m.fused_svm = load_svm(tmp);
    std::filesystem::remove(tmp);
    return m;
}

void write_trace_csv(const MklModel& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) raise(errc::io_failure, path.string() + ": cannot open for writing");
    out << "iteration,theta,gap\n";
    out.precision(17);
    for (const auto& entry : m.trace) {
        out << entry.iteration << ',' << entry.theta << ',' << entry.convergence_gap << '\n';
    }
    out.close();
    if (!out) raise(errc::io_failure, path.string() + ": write failed");
}

}  // namespace pillar
