#include "pillar/kernels.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "pillar/parallel.hpp"
#include "pillar/rng.hpp"
#include "binio.hpp"

namespace pillar {

KernelParams KernelParams::rbf(double gamma) {
    require(gamma > 0.0 && std::isfinite(gamma), errc::invalid_spec,
            "rbf gamma must be positive and finite, got " + std::to_string(gamma));
    return KernelParams{KernelKind::rbf, gamma};
}

KernelParams KernelParams::linear() { return KernelParams{KernelKind::linear, 0.0}; }

namespace {

void check_params(const KernelParams& p) {
    if (p.kind == KernelKind::rbf) {
        require(p.gamma > 0.0 && std::isfinite(p.gamma), errc::invalid_spec, "rbf gamma must be positive");
    }
}

double squared_distance(const float* a, const float* b, std::size_t d) {
    double sum = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        const double diff = double(a[k]) - double(b[k]);
        sum += diff * diff;
    }
    return sum;
}

double dot(const float* a, const float* b, std::size_t d) {
    double sum = 0.0;
    for (std::size_t k = 0; k < d; ++k) sum += double(a[k]) * double(b[k]);
    return sum;
}

double entry(const float* a, const float* b, std::size_t d, const KernelParams& p) {
    if (p.kind == KernelKind::rbf) return std::exp(-p.gamma * squared_distance(a, b, d));
    return dot(a, b, d);
}

Eigen::Map<const Eigen::MatrixXd> as_eigen(const KernelMatrix& k) {
    // row-major symmetric, so the column-major map sees the same matrix
    return Eigen::Map<const Eigen::MatrixXd>(k.values.data(), static_cast<Eigen::Index>(k.n),
                                             static_cast<Eigen::Index>(k.n));
}

}  // namespace

KernelMatrix kernel_gram_self(const FeatureMatrix& x, const KernelParams& params, int n_threads) {
    check_params(params);
    const std::size_t n = x.n_samples;
    KernelMatrix k(n);
    k.provenance.kind = params.kind;
    k.provenance.gamma = params.kind == KernelKind::rbf ? params.gamma : 0.0;
    parallel_blocks(n, n_threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            k.values[i * n + i] =
                params.kind == KernelKind::rbf ? 1.0 : dot(x.row(i), x.row(i), x.n_dims);
            for (std::size_t j = i + 1; j < n; ++j) {
                const double v = entry(x.row(i), x.row(j), x.n_dims, params);
                k.values[i * n + j] = v;
                k.values[j * n + i] = v;
            }
        }
    });
    return k;
}

Matrix64 kernel_gram(const FeatureMatrix& x, const FeatureMatrix& z, const KernelParams& params,
                     int n_threads) {
    check_params(params);
    require(x.n_dims == z.n_dims, errc::dimension_mismatch,
            "kernel_gram: x has " + std::to_string(x.n_dims) + " dims, z has " + std::to_string(z.n_dims));
    if (&x == &z) {
        KernelMatrix k = kernel_gram_self(x, params, n_threads);
        Matrix64 out(k.n, k.n);
        out.values = std::move(k.values);
        return out;
    }
    Matrix64 out(x.n_samples, z.n_samples);
    parallel_blocks(x.n_samples, n_threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            for (std::size_t j = 0; j < z.n_samples; ++j) {
                out.at(i, j) = entry(x.row(i), z.row(j), x.n_dims, params);
            }
        }
    });
    return out;
}

double gamma_heuristic(const FeatureMatrix& x, GammaMode mode) {
    require(x.n_samples >= 2, errc::invalid_spec, "gamma_heuristic needs at least 2 samples");
    if (mode == GammaMode::scale) {
        // pooled population variance over all entries
        const std::size_t count = x.values.size();
        double mean = 0.0;
        for (float v : x.values) mean += v;
        mean /= double(count);
        double var = 0.0;
        for (float v : x.values) {
            const double diff = double(v) - mean;
            var += diff * diff;
        }
        var /= double(count);
        require(var > 0.0, errc::zero_variance, "all feature entries are identical");
        return 1.0 / (double(x.n_dims) * var);
    }

    // median mode: median pairwise Euclidean distance, subsampled rows
    constexpr std::size_t kMaxRows = 2000;
    constexpr std::uint64_t kSubsampleSeed = 0x9e3779b97f4a7c15ULL;  // fixed, documented
    std::vector<std::size_t> rows(x.n_samples);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    if (rows.size() > kMaxRows) {
        Rng rng(kSubsampleSeed);
        rng.shuffle(rows);
        rows.resize(kMaxRows);
        std::sort(rows.begin(), rows.end());
    }
    std::vector<double> distances;
    distances.reserve(rows.size() * (rows.size() - 1) / 2);
    for (std::size_t a = 0; a < rows.size(); ++a) {
        for (std::size_t b = a + 1; b < rows.size(); ++b) {
            distances.push_back(std::sqrt(squared_distance(x.row(rows[a]), x.row(rows[b]), x.n_dims)));
        }
    }
    std::sort(distances.begin(), distances.end());
    const std::size_t m = distances.size();
    const double median =
        m % 2 == 1 ? distances[m / 2] : 0.5 * (distances[m / 2 - 1] + distances[m / 2]);
    require(median > 0.0, errc::zero_variance, "median pairwise distance is zero");
    return 1.0 / (2.0 * median * median);
}

KernelMatrix normalize_kernel(const KernelMatrix& k, KernelNormalization mode) {
    if (mode == KernelNormalization::none) return k;
    double mean_diag = 0.0;
    for (std::size_t i = 0; i < k.n; ++i) mean_diag += k.at(i, i);
    mean_diag /= double(k.n);
    require(mean_diag > 0.0, errc::degenerate_diagonal,
            "unit_mean_diag: mean diagonal is " + std::to_string(mean_diag));
    KernelMatrix out = k;
    const double inv = 1.0 / mean_diag;
    for (double& v : out.values) v *= inv;
    out.provenance.normalization = KernelNormalization::unit_mean_diag;
    return out;
}

PsdCheck check_psd(const KernelMatrix& k, double tol) {
    double max_diag = 0.0;
    for (std::size_t i = 0; i < k.n; ++i) max_diag = std::max(max_diag, k.at(i, i));
    const double scale = std::max(1.0, max_diag);
    const auto m = as_eigen(k);

    std::vector<double> ladder = {0.0, 1e-12, 1e-10};
    ladder.erase(std::remove_if(ladder.begin(), ladder.end(), [&](double j) { return j > tol; }),
                 ladder.end());
    ladder.push_back(tol);
    for (double jitter : ladder) {
        Eigen::MatrixXd shifted = m;
        shifted.diagonal().array() += jitter * scale;
        Eigen::LLT<Eigen::MatrixXd> llt(shifted);
        if (llt.info() == Eigen::Success) return {true, 0.0};
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigen(m, Eigen::EigenvaluesOnly);
    const double min_eig = eigen.eigenvalues().minCoeff();
    if (min_eig >= -tol * scale) return {true, min_eig};
    return {false, min_eig};
}

KernelMatrix combine_kernels(std::span<const KernelMatrix> ks, std::span<const double> beta) {
    require(!ks.empty(), errc::size_mismatch, "combine_kernels: no kernels");
    require(ks.size() == beta.size(), errc::size_mismatch,
            "combine_kernels: " + std::to_string(ks.size()) + " kernels vs " + std::to_string(beta.size()) +
                " weights");
    const std::size_t n = ks[0].n;
    for (const auto& k : ks) {
        require(k.n == n, errc::size_mismatch, "combine_kernels: kernel sizes differ");
    }
    for (double b : beta) {
        require(b >= 0.0 && std::isfinite(b), errc::negative_weight,
                "combine_kernels: weight " + std::to_string(b));
    }
    KernelMatrix out(n);
    for (std::size_t k = 0; k < ks.size(); ++k) {
        const double w = beta[k];
        if (w == 0.0) continue;
        const double* src = ks[k].values.data();
        for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += w * src[i];
    }
    out.provenance.source_id = "combined";
    out.provenance.combine_weights.assign(beta.begin(), beta.end());
    for (const auto& k : ks) out.provenance.parents.push_back(k.provenance.source_id);
    return out;
}

Matrix64 combine_kernel_blocks(std::span<const Matrix64> blocks, std::span<const double> beta) {
    require(!blocks.empty() && blocks.size() == beta.size(), errc::size_mismatch,
            "combine_kernel_blocks: block/weight count mismatch");
    for (double b : beta) {
        require(b >= 0.0 && std::isfinite(b), errc::negative_weight,
                "combine_kernel_blocks: weight " + std::to_string(b));
    }
    Matrix64 out(blocks[0].rows, blocks[0].cols);
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        require(blocks[k].rows == out.rows && blocks[k].cols == out.cols, errc::size_mismatch,
                "combine_kernel_blocks: block shapes differ");
        const double w = beta[k];
        if (w == 0.0) continue;
        for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += w * blocks[k].values[i];
    }
    return out;
}

namespace {

constexpr char kKernelMagic[4] = {'P', 'L', 'R', 'K'};
constexpr std::uint32_t kKernelVersion = 1;

std::string join_doubles(const std::vector<double>& v) {
    std::ostringstream out;
    out.precision(17);
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out << ',';
        out << v[i];
    }
    return out.str();
}

std::string join_strings(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += v[i];
    }
    return out;
}

}  // namespace

std::string kernel_kind_name(KernelKind kind) { return kind == KernelKind::rbf ? "rbf" : "linear"; }

std::string normalization_name(KernelNormalization mode) {
    return mode == KernelNormalization::unit_mean_diag ? "unit_mean_diag" : "none";
}

void save_kernel(const KernelMatrix& k, const std::filesystem::path& path) {
    detail::BinWriter out(path);
    out.write_magic(kKernelMagic);
    out.write_u32(kKernelVersion);
    out.write_u64(k.n);
    out.write_array(k.values);
    out.close();

    std::ofstream prov(path.string() + ".prov", std::ios::trunc);
    if (!prov) raise(errc::io_failure, path.string() + ".prov: cannot open for writing");
    prov << "source=" << k.provenance.source_id << "\n";
    prov << "kind=" << kernel_kind_name(k.provenance.kind) << "\n";
    prov.precision(17);
    prov << "gamma=" << k.provenance.gamma << "\n";
    prov << "normalization=" << normalization_name(k.provenance.normalization) << "\n";
    if (!k.provenance.combine_weights.empty()) {
        prov << "weights=" << join_doubles(k.provenance.combine_weights) << "\n";
        prov << "parents=" << join_strings(k.provenance.parents) << "\n";
    }
    prov.close();
    if (!prov) raise(errc::io_failure, path.string() + ".prov: write failed");
}

KernelMatrix load_kernel(const std::filesystem::path& path) {
    detail::BinReader in(path);
    in.expect_magic(kKernelMagic);
    in.expect_version(kKernelVersion);
    const std::uint64_t n = in.read_u64("n");
    if (n < 1) raise(errc::invalid_header, in.path() + ": kernel size must be >= 1");
    if (n > 1 && n > std::numeric_limits<std::size_t>::max() / n / sizeof(double)) {
        raise(errc::invalid_header, in.path() + ": kernel size overflows");
    }
    KernelMatrix k(static_cast<std::size_t>(n));
    const std::size_t payload_offset = in.offset();
    in.read_array(k.values, k.n * k.n, "payload");
    for (std::size_t i = 0; i < k.values.size(); ++i) {
        if (!std::isfinite(k.values[i])) {
            raise(errc::non_finite_value,
                  in.path() + ": non-finite value at byte " + std::to_string(payload_offset + i * sizeof(double)));
        }
    }
    for (std::size_t i = 0; i < k.n; ++i) {
        for (std::size_t j = i + 1; j < k.n; ++j) {
            if (k.at(i, j) != k.at(j, i)) {
                raise(errc::invalid_header, in.path() + ": matrix is not exactly symmetric at (" +
                                                std::to_string(i) + "," + std::to_string(j) + ")");
            }
        }
    }
    const PsdCheck psd = check_psd(k);
    if (!psd.pass) {
        raise(errc::invalid_header,
              in.path() + ": matrix is not positive semidefinite (min eigenvalue " +
                  std::to_string(psd.min_eigenvalue) + ")");
    }

    // sidecar provenance, if present
    std::ifstream prov(path.string() + ".prov");
    if (prov) {
        std::string line;
        while (std::getline(prov, line)) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = line.substr(0, eq);
            const std::string value = line.substr(eq + 1);
            if (key == "source") k.provenance.source_id = value;
            else if (key == "kind") k.provenance.kind = value == "linear" ? KernelKind::linear : KernelKind::rbf;
            else if (key == "gamma") k.provenance.gamma = std::stod(value);
            else if (key == "normalization")
                k.provenance.normalization = value == "unit_mean_diag" ? KernelNormalization::unit_mean_diag
                                                                       : KernelNormalization::none;
        }
    }
    return k;
}

}  // namespace pillar
