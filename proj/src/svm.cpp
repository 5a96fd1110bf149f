#include "pillar/svm.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <string>

#include "pillar/parallel.hpp"
#include "binio.hpp"

namespace pillar {

namespace {

constexpr double kCurvatureFloor = 1e-12;

struct WorkingPair {
    std::size_t i = 0;  // argmax over I_up of -y G
    std::size_t j = 0;  // argmin over I_low of -y G
    double m = 0.0;
    double M = 0.0;
    bool valid = false;
};

// Maximal violating pair. I_up holds indices whose alpha can move the
// equality constraint up, I_low down; optimality is m - M <= tol.
WorkingPair select_pair(std::span<const double> alpha, std::span<const signed char> y,
                        std::span<const double> grad, double C) {
    WorkingPair pair;
    double m = -std::numeric_limits<double>::infinity();
    double M = std::numeric_limits<double>::infinity();
    std::size_t arg_m = 0, arg_M = 0;
    bool has_up = false, has_low = false;
    for (std::size_t t = 0; t < alpha.size(); ++t) {
        const double score = -double(y[t]) * grad[t];
        const bool in_up = (y[t] > 0 && alpha[t] < C) || (y[t] < 0 && alpha[t] > 0.0);
        const bool in_low = (y[t] > 0 && alpha[t] > 0.0) || (y[t] < 0 && alpha[t] < C);
        if (in_up && score > m) {
            m = score;
            arg_m = t;
            has_up = true;
        }
        if (in_low && score < M) {
            M = score;
            arg_M = t;
            has_low = true;
        }
    }
    if (!has_up || !has_low) return pair;
    pair.i = arg_m;
    pair.j = arg_M;
    pair.m = m;
    pair.M = M;
    pair.valid = true;
    return pair;
}

}  // namespace

BinarySvmModel smo_train(const KernelMatrix& k, std::span<const signed char> y, double C, double tol,
                         std::size_t max_iter) {
    const std::size_t n = k.n;
    require(y.size() == n, errc::shape_mismatch,
            "smo_train: kernel is " + std::to_string(n) + "x" + std::to_string(n) + " but y has " +
                std::to_string(y.size()) + " entries");
    require(C > 0.0 && std::isfinite(C), errc::invalid_spec, "smo_train: C must be positive");
    require(tol > 0.0, errc::invalid_spec, "smo_train: tol must be positive");
    bool has_pos = false, has_neg = false;
    for (signed char v : y) {
        if (v > 0) has_pos = true;
        if (v < 0) has_neg = true;
    }
    require(has_pos && has_neg, errc::single_class, "smo_train: training labels contain a single class");

    BinarySvmModel model;
    model.alpha.assign(n, 0.0);
    model.y.assign(y.begin(), y.end());
    model.C = C;
    model.train_index_map.resize(n);
    for (std::size_t t = 0; t < n; ++t) model.train_index_map[t] = t;

    // gradient of 1/2 a'Qa - e'a at alpha = 0
    std::vector<double> grad(n, -1.0);

    double final_m = 0.0, final_M = 0.0;
    model.converged = false;
    while (model.iterations < max_iter) {
        const WorkingPair pair = select_pair(model.alpha, y, grad, C);
        if (!pair.valid || pair.m - pair.M <= tol) {
            final_m = pair.valid ? pair.m : 0.0;
            final_M = pair.valid ? pair.M : 0.0;
            model.converged = true;
            break;
        }
        final_m = pair.m;
        final_M = pair.M;

        const std::size_t i = pair.i;
        const std::size_t j = pair.j;
        const double yi = double(y[i]);
        const double yj = double(y[j]);
        const double* ki = k.row(i);
        const double* kj = k.row(j);

        // feasible direction d_i = y_i, d_j = -y_j; curvature along it
        const double curvature = std::max(ki[i] + kj[j] - 2.0 * ki[j], kCurvatureFloor);
        double step = (pair.m - pair.M) / curvature;

        // box limits for alpha_i + y_i*step and alpha_j - y_j*step
        const double limit_i = y[i] > 0 ? C - model.alpha[i] : model.alpha[i];
        const double limit_j = y[j] > 0 ? model.alpha[j] : C - model.alpha[j];
        step = std::min(step, std::min(limit_i, limit_j));

        model.alpha[i] = std::clamp(model.alpha[i] + yi * step, 0.0, C);
        model.alpha[j] = std::clamp(model.alpha[j] - yj * step, 0.0, C);

        for (std::size_t t = 0; t < n; ++t) {
            grad[t] += double(y[t]) * step * (ki[t] - kj[t]);
        }
        ++model.iterations;
    }

    // snap vanishing coefficients so support extraction is clean
    for (double& a : model.alpha) {
        if (a < 1e-12 * C) a = 0.0;
    }
    for (std::size_t t = 0; t < n; ++t) {
        if (model.alpha[t] > 0.0) model.support_indices.push_back(t);
    }

    // bias: mean of y_i - f0(x_i) over non-bound support vectors, which equals
    // -y_i G_i there; fall back to the midpoint of the KKT interval
    double b_sum = 0.0;
    std::size_t b_count = 0;
    for (std::size_t t = 0; t < n; ++t) {
        if (model.alpha[t] > 0.0 && model.alpha[t] < C) {
            b_sum += -double(y[t]) * grad[t];
            ++b_count;
        }
    }
    model.b = b_count > 0 ? b_sum / double(b_count) : 0.5 * (final_m + final_M);
    return model;
}

std::vector<double> decision_values(const BinarySvmModel& m, const Matrix64& k_test_train) {
    require(k_test_train.cols == m.alpha.size(), errc::shape_mismatch,
            "decision_values: kernel block has " + std::to_string(k_test_train.cols) +
                " columns, model has " + std::to_string(m.alpha.size()) + " training rows");
    std::vector<double> out(k_test_train.rows, m.b);
    for (std::size_t r = 0; r < k_test_train.rows; ++r) {
        const double* row = k_test_train.row(r);
        double sum = 0.0;
        for (std::size_t t : m.support_indices) {
            sum += m.alpha[t] * double(m.y[t]) * row[t];
        }
        out[r] += sum;
    }
    return out;
}

double dual_objective(std::span<const double> alpha, std::span<const signed char> y,
                      const KernelMatrix& k) {
    require(alpha.size() == k.n && y.size() == k.n, errc::shape_mismatch,
            "dual_objective: size mismatch");
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
    return linear - 0.5 * quad;
}

double duality_gap(const BinarySvmModel& m, const KernelMatrix& k, std::span<const signed char> y,
                   double C) {
    require(m.alpha.size() == k.n && y.size() == k.n, errc::shape_mismatch, "duality_gap: size mismatch");
    // f0(x_i) and ||w||^2 from the dual expansion
    double w_norm_sq = 0.0;
    double slack_sum = 0.0;
    for (std::size_t i = 0; i < k.n; ++i) {
        const double* row = k.row(i);
        double f0 = 0.0;
        for (std::size_t t : m.support_indices) f0 += m.alpha[t] * double(m.y[t]) * row[t];
        if (m.alpha[i] > 0.0) w_norm_sq += m.alpha[i] * double(m.y[i]) * f0;
        slack_sum += std::max(0.0, 1.0 - double(y[i]) * (f0 + m.b));
    }
    const double primal = 0.5 * w_norm_sq + C * slack_sum;
    const double dual = dual_objective(m.alpha, y, k);
    return primal - dual;
}

MulticlassSvmModel train_one_vs_rest(const KernelMatrix& k, const LabelVector& labels, double C,
                                     double tol, std::size_t max_iter, int n_threads) {
    const std::size_t n = k.n;
    require(labels.labels.size() == n, errc::shape_mismatch,
            "train_one_vs_rest: " + std::to_string(labels.labels.size()) + " labels for " +
                std::to_string(n) + " kernel rows");
    require(labels.n_classes >= 2, errc::single_class, "train_one_vs_rest: need at least 2 classes");
    std::vector<std::size_t> counts(static_cast<std::size_t>(labels.n_classes), 0);
    for (int label : labels.labels) {
        require(label >= 0 && label < labels.n_classes, errc::label_out_of_range,
                "train_one_vs_rest: label " + std::to_string(label));
        ++counts[static_cast<std::size_t>(label)];
    }
    // every class present implies every class-vs-rest problem sees both signs
    for (int c = 0; c < labels.n_classes; ++c) {
        require(counts[static_cast<std::size_t>(c)] > 0, errc::empty_class,
                "train_one_vs_rest: class " + std::to_string(c) + " has no training rows");
    }

    MulticlassSvmModel model;
    model.n_classes = labels.n_classes;
    model.per_class.resize(static_cast<std::size_t>(labels.n_classes));
    parallel_for(static_cast<std::size_t>(labels.n_classes), n_threads, [&](std::size_t c) {
        std::vector<signed char> y(n);
        for (std::size_t t = 0; t < n; ++t) {
            y[t] = labels.labels[t] == static_cast<int>(c) ? +1 : -1;
        }
        BinarySvmModel binary = smo_train(k, y, C, tol, max_iter);
        binary.class_id = static_cast<int>(c);
        model.per_class[c] = std::move(binary);
    });
    return model;
}

Prediction predict_multiclass(const MulticlassSvmModel& m, const Matrix64& k_test_train) {
    require(!m.per_class.empty(), errc::shape_mismatch, "predict_multiclass: empty model");
    Prediction out;
    out.scores = Matrix64(k_test_train.rows, m.per_class.size());
    for (std::size_t c = 0; c < m.per_class.size(); ++c) {
        const std::vector<double> values = decision_values(m.per_class[c], k_test_train);
        for (std::size_t r = 0; r < k_test_train.rows; ++r) out.scores.at(r, c) = values[r];
    }
    out.labels.resize(k_test_train.rows);
    for (std::size_t r = 0; r < k_test_train.rows; ++r) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < m.per_class.size(); ++c) {
            if (out.scores.at(r, c) > out.scores.at(r, best)) best = c;  // ties keep the lower id
        }
        out.labels[r] = static_cast<int>(best);
    }
    return out;
}

namespace {

constexpr char kSvmMagic[4] = {'P', 'L', 'S', 'V'};
constexpr std::uint32_t kSvmVersion = 1;

std::string binary_header(const BinarySvmModel& m) {
    std::ostringstream out;
    out.precision(17);
    out << "C=" << m.C << "\n"
        << "n=" << m.alpha.size() << "\n"
        << "b=" << m.b << "\n"
        << "converged=" << (m.converged ? 1 : 0) << "\n"
        << "class_id=" << m.class_id << "\n"
        << "iterations=" << m.iterations << "\n";
    return out.str();
}

std::map<std::string, std::string> parse_header(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return out;
}

}  // namespace

void save_svm(const MulticlassSvmModel& m, const std::filesystem::path& path) {
    detail::BinWriter out(path);
    out.write_magic(kSvmMagic);
    out.write_u32(kSvmVersion);
    out.write_u32(static_cast<std::uint32_t>(m.per_class.size()));
    out.write_u32(static_cast<std::uint32_t>(m.n_classes));
    for (const auto& binary : m.per_class) {
        const std::string header = binary_header(binary);
        out.write_u64(header.size());
        out.write_bytes(header.data(), header.size());
        out.write_array(binary.alpha);
        out.write_array(binary.y);
        out.write_array(binary.train_index_map);
    }
    out.close();
}

MulticlassSvmModel load_svm(const std::filesystem::path& path) {
    detail::BinReader in(path);
    in.expect_magic(kSvmMagic);
    in.expect_version(kSvmVersion);
    const std::uint32_t n_models = in.read_u32("model count");
    const std::uint32_t n_classes = in.read_u32("class count");
    MulticlassSvmModel m;
    m.n_classes = static_cast<int>(n_classes);
    for (std::uint32_t i = 0; i < n_models; ++i) {
        const std::uint64_t header_len = in.read_u64("header length");
        std::string header(header_len, '\0');
        in.read_bytes(header.data(), header_len, "header");
        const auto kv = parse_header(header);
        BinarySvmModel binary;
        std::size_t n = 0;
        try {
            n = std::stoull(kv.at("n"));
            binary.C = std::stod(kv.at("C"));
            binary.b = std::stod(kv.at("b"));
            binary.converged = kv.at("converged") == "1";
            binary.class_id = std::stoi(kv.at("class_id"));
            binary.iterations = std::stoull(kv.at("iterations"));
        } catch (const std::exception&) {
            raise(errc::invalid_header, path.string() + ": malformed model header");
        }
        in.read_array(binary.alpha, n, "alpha");
        in.read_array(binary.y, n, "y");
        in.read_array(binary.train_index_map, n, "train index map");
        for (std::size_t t = 0; t < n; ++t) {
            if (binary.alpha[t] < 0.0 || binary.alpha[t] > binary.C) {
                raise(errc::invalid_header, path.string() + ": alpha outside [0, C]");
            }
            if (binary.alpha[t] > 0.0) binary.support_indices.push_back(t);
        }
        m.per_class.push_back(std::move(binary));
    }
    return m;
}

}  // namespace pillar
