#include "pillar/fisher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "pillar/parallel.hpp"
#include "pillar/rng.hpp"
#include "binio.hpp"

namespace pillar {

namespace {

constexpr double kWeightFloor = 1e-10;

// log N(x; mu, diag(var)) for one component
double log_gaussian(const float* x, const double* mu, const double* var, std::size_t dim) {
    double acc = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
        const double diff = double(x[d]) - mu[d];
        acc += diff * diff / var[d] + std::log(var[d]);
    }
    return -0.5 * (acc + double(dim) * std::log(2.0 * std::numbers::pi));
}

double log_mixture_density(const GmmModel& g, const float* row) {
    double max_log = -std::numeric_limits<double>::infinity();
    std::vector<double> logp(g.n_components);
    for (std::size_t k = 0; k < g.n_components; ++k) {
        logp[k] = std::log(g.weights[k]) +
                  log_gaussian(row, g.means.data() + k * g.dim, g.variances.data() + k * g.dim, g.dim);
        max_log = std::max(max_log, logp[k]);
    }
    double denom = 0.0;
    for (double lp : logp) denom += std::exp(lp - max_log);
    return max_log + std::log(denom);
}

struct EStep {
    Matrix64 gamma;          // T x K responsibilities
    double avg_loglik = 0.0;
};

EStep e_step(const GmmModel& g, const FeatureMatrix& x) {
    const std::size_t t_count = x.n_samples;
    const std::size_t k_count = g.n_components;
    EStep out;
    out.gamma = Matrix64(t_count, k_count);
    std::vector<double> log_weight(k_count);
    for (std::size_t k = 0; k < k_count; ++k) log_weight[k] = std::log(g.weights[k]);
    double total = 0.0;
    std::vector<double> logp(k_count);
    for (std::size_t t = 0; t < t_count; ++t) {
        double max_log = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < k_count; ++k) {
            logp[k] = log_weight[k] +
                      log_gaussian(x.row(t), g.means.data() + k * g.dim, g.variances.data() + k * g.dim, g.dim);
            max_log = std::max(max_log, logp[k]);
        }
        double denom = 0.0;
        for (std::size_t k = 0; k < k_count; ++k) denom += std::exp(logp[k] - max_log);
        const double log_denom = max_log + std::log(denom);
        for (std::size_t k = 0; k < k_count; ++k) out.gamma.at(t, k) = std::exp(logp[k] - log_denom);
        total += log_denom;
    }
    out.avg_loglik = total / double(t_count);
    return out;
}

std::vector<double> variance_floor(const FeatureMatrix& x) {
    std::vector<double> floor(x.n_dims, 0.0);
    for (std::size_t d = 0; d < x.n_dims; ++d) {
        double mean = 0.0;
        for (std::size_t t = 0; t < x.n_samples; ++t) mean += x.at(t, d);
        mean /= double(x.n_samples);
        double var = 0.0;
        for (std::size_t t = 0; t < x.n_samples; ++t) {
            const double diff = double(x.at(t, d)) - mean;
            var += diff * diff;
        }
        var /= double(x.n_samples);
        floor[d] = std::max(1e-6 * var, 1e-12);
    }
    return floor;
}

// k-means++ seeding followed by a few Lloyd iterations
std::vector<std::size_t> kmeans_assign(const FeatureMatrix& x, std::size_t k, Rng& rng,
                                       std::vector<double>& centers) {
    const std::size_t n = x.n_samples;
    const std::size_t dim = x.n_dims;
    centers.assign(k * dim, 0.0);

    auto sqdist_to_center = [&](std::size_t t, std::size_t c) {
        double acc = 0.0;
        const float* row = x.row(t);
        const double* center = centers.data() + c * dim;
        for (std::size_t d = 0; d < dim; ++d) {
            const double diff = double(row[d]) - center[d];
            acc += diff * diff;
        }
        return acc;
    };

    // seeding
    const std::size_t first = rng.uniform_index(n);
    for (std::size_t d = 0; d < dim; ++d) centers[d] = x.at(first, d);
    std::vector<double> best_dist(n);
    for (std::size_t t = 0; t < n; ++t) best_dist[t] = sqdist_to_center(t, 0);
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (double v : best_dist) total += v;
        std::size_t chosen;
        if (total <= 0.0) {
            chosen = rng.uniform_index(n);
        } else {
            const double target = rng.uniform() * total;
            double running = 0.0;
            chosen = n - 1;
            for (std::size_t t = 0; t < n; ++t) {
                running += best_dist[t];
                if (running >= target) {
                    chosen = t;
                    break;
                }
            }
        }
        for (std::size_t d = 0; d < dim; ++d) centers[c * dim + d] = x.at(chosen, d);
        for (std::size_t t = 0; t < n; ++t) best_dist[t] = std::min(best_dist[t], sqdist_to_center(t, c));
    }

    // Lloyd
    std::vector<std::size_t> assign(n, 0);
    for (int iter = 0; iter < 10; ++iter) {
        for (std::size_t t = 0; t < n; ++t) {
            std::size_t best = 0;
            double best_d = sqdist_to_center(t, 0);
            for (std::size_t c = 1; c < k; ++c) {
                const double d2 = sqdist_to_center(t, c);
                if (d2 < best_d) {
                    best_d = d2;
                    best = c;
                }
            }
            assign[t] = best;
        }
        std::vector<double> sums(k * dim, 0.0);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t t = 0; t < n; ++t) {
            const float* row = x.row(t);
            for (std::size_t d = 0; d < dim; ++d) sums[assign[t] * dim + d] += row[d];
            ++counts[assign[t]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // re-seed an empty cluster at the point farthest from its center
                std::size_t far = 0;
                double far_d = -1.0;
                for (std::size_t t = 0; t < n; ++t) {
                    const double d2 = sqdist_to_center(t, assign[t]);
                    if (d2 > far_d) {
                        far_d = d2;
                        far = t;
                    }
                }
                for (std::size_t d = 0; d < dim; ++d) centers[c * dim + d] = x.at(far, d);
                assign[far] = c;
            } else {
                for (std::size_t d = 0; d < dim; ++d) centers[c * dim + d] = sums[c * dim + d] / double(counts[c]);
            }
        }
    }
    // final assignment against the updated centers
    for (std::size_t t = 0; t < n; ++t) {
        std::size_t best = 0;
        double best_d = sqdist_to_center(t, 0);
        for (std::size_t c = 1; c < k; ++c) {
            const double d2 = sqdist_to_center(t, c);
            if (d2 < best_d) {
                best_d = d2;
                best = c;
            }
        }
        assign[t] = best;
    }
    return assign;
}

}  // namespace

GmmModel gmm_em(const FeatureMatrix& descriptors, std::size_t k, std::uint64_t seed, double tol,
                std::size_t max_iter, std::vector<double>* loglik_trace) {
    require(k >= 1, errc::too_few_samples, "gmm_em: k must be >= 1");
    require(descriptors.n_samples >= k, errc::too_few_samples,
            "gmm_em: " + std::to_string(descriptors.n_samples) + " descriptors for k = " + std::to_string(k));
    const std::size_t n = descriptors.n_samples;
    const std::size_t dim = descriptors.n_dims;
    const std::vector<double> floor = variance_floor(descriptors);

    GmmModel g;
    g.n_components = k;
    g.dim = dim;
    g.weights.assign(k, 0.0);
    g.means.assign(k * dim, 0.0);
    g.variances.assign(k * dim, 0.0);

    // initialize from a seeded k-means clustering
    Rng rng(seed);
    std::vector<double> centers;
    const std::vector<std::size_t> assign = kmeans_assign(descriptors, k, rng, centers);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t t = 0; t < n; ++t) ++counts[assign[t]];
    g.means = centers;
    for (std::size_t c = 0; c < k; ++c) {
        g.weights[c] = std::max(double(counts[c]) / double(n), kWeightFloor);
    }
    {
        double total = 0.0;
        for (double w : g.weights) total += w;
        for (double& w : g.weights) w /= total;
    }
    for (std::size_t t = 0; t < n; ++t) {
        const float* row = descriptors.row(t);
        const std::size_t c = assign[t];
        for (std::size_t d = 0; d < dim; ++d) {
            const double diff = double(row[d]) - g.means[c * dim + d];
            g.variances[c * dim + d] += diff * diff;
        }
    }
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t d = 0; d < dim; ++d) {
            double v = counts[c] > 0 ? g.variances[c * dim + d] / double(counts[c]) : 0.0;
            g.variances[c * dim + d] = std::max(v, floor[d]);
        }
    }

    // EM
    double previous = -std::numeric_limits<double>::infinity();
    std::vector<bool> repaired(k, false);
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        const EStep e = e_step(g, descriptors);
        if (loglik_trace) loglik_trace->push_back(e.avg_loglik);
        if (iter > 0 && e.avg_loglik - previous <= tol) break;
        previous = e.avg_loglik;

        for (std::size_t c = 0; c < k; ++c) {
            double nk = 0.0;
            for (std::size_t t = 0; t < n; ++t) nk += e.gamma.at(t, c);
            if (nk < kWeightFloor * double(n)) {
                // component starved: re-seed it once at the lowest-likelihood point
                if (repaired[c]) {
                    raise(errc::degenerate_component,
                          "gmm_em: component " + std::to_string(c) + " collapsed twice");
                }
                repaired[c] = true;
                std::size_t worst = 0;
                double worst_ll = std::numeric_limits<double>::infinity();
                for (std::size_t t = 0; t < n; ++t) {
                    const double ll = log_mixture_density(g, descriptors.row(t));
                    if (ll < worst_ll) {
                        worst_ll = ll;
                        worst = t;
                    }
                }
                for (std::size_t d = 0; d < dim; ++d) {
                    g.means[c * dim + d] = descriptors.at(worst, d);
                    g.variances[c * dim + d] = std::max(floor[d] * 1e6, floor[d]);
                }
                g.weights[c] = 1.0 / double(n);
                continue;
            }
            g.weights[c] = nk / double(n);
            for (std::size_t d = 0; d < dim; ++d) {
                double mean = 0.0;
                for (std::size_t t = 0; t < n; ++t) mean += e.gamma.at(t, c) * double(descriptors.at(t, d));
                mean /= nk;
                double var = 0.0;
                for (std::size_t t = 0; t < n; ++t) {
                    const double diff = double(descriptors.at(t, d)) - mean;
                    var += e.gamma.at(t, c) * diff * diff;
                }
                var /= nk;
                g.means[c * dim + d] = mean;
                g.variances[c * dim + d] = std::max(var, floor[d]);
            }
        }
        double total = 0.0;
        for (double& w : g.weights) {
            w = std::max(w, kWeightFloor);
            total += w;
        }
        for (double& w : g.weights) w /= total;
    }
    return g;
}

Matrix64 gmm_responsibilities(const GmmModel& g, const FeatureMatrix& descriptors) {
    require(descriptors.n_dims == g.dim, errc::dimension_mismatch,
            "gmm_responsibilities: descriptor dim " + std::to_string(descriptors.n_dims) +
                " != model dim " + std::to_string(g.dim));
    require(descriptors.n_samples >= 1, errc::empty_descriptor_set, "gmm_responsibilities: empty set");
    return e_step(g, descriptors).gamma;
}

double gmm_log_likelihood(const GmmModel& g, const FeatureMatrix& descriptors) {
    require(descriptors.n_dims == g.dim, errc::dimension_mismatch, "gmm_log_likelihood: dim mismatch");
    require(descriptors.n_samples >= 1, errc::empty_descriptor_set, "gmm_log_likelihood: empty set");
    return e_step(g, descriptors).avg_loglik;
}

FisherVector fisher_encode(const GmmModel& g, const FeatureMatrix& descriptors,
                           FvNormalization normalization) {
    require(descriptors.n_dims == g.dim, errc::dimension_mismatch,
            "fisher_encode: descriptor dim " + std::to_string(descriptors.n_dims) + " != model dim " +
                std::to_string(g.dim));
    require(descriptors.n_samples >= 1, errc::empty_descriptor_set, "fisher_encode: empty descriptor set");

    const std::size_t t_count = descriptors.n_samples;
    const std::size_t k_count = g.n_components;
    const std::size_t dim = g.dim;
    const Matrix64 gamma = e_step(g, descriptors).gamma;

    FisherVector fv;
    fv.normalization = normalization;
    fv.values.assign(2 * k_count * dim, 0.0);

    for (std::size_t k = 0; k < k_count; ++k) {
        double* mean_block = fv.values.data() + k * dim;
        double* var_block = fv.values.data() + (k_count + k) * dim;
        for (std::size_t t = 0; t < t_count; ++t) {
            const double w = gamma.at(t, k);
            if (w == 0.0) continue;
            const float* row = descriptors.row(t);
            for (std::size_t d = 0; d < dim; ++d) {
                const double sigma = std::sqrt(g.var_at(k, d));
                const double u = (double(row[d]) - g.mean_at(k, d)) / sigma;
                mean_block[d] += w * u;
                var_block[d] += w * (u * u - 1.0);
            }
        }
        const double mean_scale = 1.0 / (double(t_count) * std::sqrt(g.weights[k]));
        const double var_scale = 1.0 / (double(t_count) * std::sqrt(2.0 * g.weights[k]));
        for (std::size_t d = 0; d < dim; ++d) {
            mean_block[d] *= mean_scale;
            var_block[d] *= var_scale;
        }
    }

    if (normalization == FvNormalization::improved) {
        for (double& v : fv.values) v = v >= 0.0 ? std::sqrt(v) : -std::sqrt(-v);
        double norm = 0.0;
        for (double v : fv.values) norm += v * v;
        if (norm > 0.0) {
            const double inv = 1.0 / std::sqrt(norm);
            for (double& v : fv.values) v *= inv;
        }
    }
    return fv;
}

FeatureMatrix encode_corpus(const GmmModel& g, std::span<const FeatureMatrix> per_sample_descriptors,
                            FvNormalization normalization, int n_threads) {
    require(!per_sample_descriptors.empty(), errc::empty_descriptor_set, "encode_corpus: no samples");
    FeatureMatrix out(per_sample_descriptors.size(), 2 * g.n_components * g.dim);
    parallel_for(per_sample_descriptors.size(), n_threads, [&](std::size_t i) {
        const FisherVector fv = fisher_encode(g, per_sample_descriptors[i], normalization);
        float* row = out.row(i);
        for (std::size_t j = 0; j < fv.values.size(); ++j) row[j] = static_cast<float>(fv.values[j]);
    });
    return out;
}

namespace {

constexpr char kGmmMagic[4] = {'P', 'L', 'G', 'M'};
constexpr std::uint32_t kGmmVersion = 1;

}  // namespace

void save_gmm(const GmmModel& g, const std::filesystem::path& path) {
    detail::BinWriter out(path);
    out.write_magic(kGmmMagic);
    out.write_u32(kGmmVersion);
    out.write_u64(g.n_components);
    out.write_u64(g.dim);
    out.write_array(g.weights);
    out.write_array(g.means);
    out.write_array(g.variances);
    out.close();
}

GmmModel load_gmm(const std::filesystem::path& path) {
    detail::BinReader in(path);
    in.expect_magic(kGmmMagic);
    in.expect_version(kGmmVersion);
    GmmModel g;
    g.n_components = in.read_u64("n_components");
    g.dim = in.read_u64("dim");
    if (g.n_components < 1 || g.dim < 1) {
        raise(errc::invalid_header, path.string() + ": K and D must be >= 1");
    }
    in.read_array(g.weights, g.n_components, "weights");
    in.read_array(g.means, g.n_components * g.dim, "means");
    in.read_array(g.variances, g.n_components * g.dim, "variances");
    double total = 0.0;
    for (double w : g.weights) {
        if (!(w > 0.0)) raise(errc::invalid_header, path.string() + ": non-positive weight");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-8) raise(errc::invalid_header, path.string() + ": weights do not sum to 1");
    for (double v : g.variances) {
        if (!(v > 0.0)) raise(errc::invalid_header, path.string() + ": non-positive variance");
    }
    return g;
}

}  // namespace pillar
