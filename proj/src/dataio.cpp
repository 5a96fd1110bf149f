#include "pillar/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <string>

#include "pillar/rng.hpp"
#include "binio.hpp"

namespace pillar {

namespace {

constexpr char kFeatureMagic[4] = {'P', 'L', 'R', 'F'};
constexpr std::uint32_t kFeatureVersion = 1;

// Strips one trailing '\r' so CRLF files load the same as LF files.
std::string chomp(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

}  // namespace

FeatureMatrix load_feature_matrix(const std::filesystem::path& path) {
    detail::BinReader in(path);
    in.expect_magic(kFeatureMagic);
    in.expect_version(kFeatureVersion);
    const std::uint64_t n = in.read_u64("n_samples");
    const std::uint64_t d = in.read_u64("n_dims");
    if (n < 1 || d < 1) {
        raise(errc::invalid_header,
              in.path() + ": header declares " + std::to_string(n) + "x" + std::to_string(d) +
                  " matrix; both dimensions must be >= 1");
    }
    if (d != 0 && n > std::numeric_limits<std::size_t>::max() / d / sizeof(float)) {
        raise(errc::invalid_header, in.path() + ": header dimensions overflow");
    }
    FeatureMatrix m;
    m.n_samples = static_cast<std::size_t>(n);
    m.n_dims = static_cast<std::size_t>(d);
    const std::size_t payload_offset = in.offset();
    in.read_array(m.values, m.n_samples * m.n_dims, "payload");
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        if (!std::isfinite(m.values[i])) {
            raise(errc::non_finite_value,
                  in.path() + ": non-finite value at byte " + std::to_string(payload_offset + i * sizeof(float)));
        }
    }
    return m;
}

void write_feature_matrix(const FeatureMatrix& m, const std::filesystem::path& path) {
    detail::BinWriter out(path);
    out.write_magic(kFeatureMagic);
    out.write_u32(kFeatureVersion);
    out.write_u64(m.n_samples);
    out.write_u64(m.n_dims);
    out.write_array(m.values);
    out.close();
}

LabelVector load_labels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) raise(errc::io_failure, path.string() + ": cannot open for reading");
    LabelVector out;
    std::string line;
    std::size_t line_no = 0;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++line_no;
        line = chomp(line);
        if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;  // trailing newline
        long value = 0;
        const auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), value);
        if (ec != std::errc() || ptr != line.data() + line.size()) {
            raise(errc::parse_error, path.string() + ": line " + std::to_string(line_no) + ": expected integer, got '" + line + "'");
        }
        if (value < 0) {
            raise(errc::negative_label, path.string() + ": line " + std::to_string(line_no) + ": label " + std::to_string(value));
        }
        out.labels.push_back(static_cast<int>(value));
        max_label = std::max(max_label, static_cast<int>(value));
    }
    out.n_classes = max_label + 1;
    return out;
}

void write_labels(const LabelVector& labels, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) raise(errc::io_failure, path.string() + ": cannot open for writing");
    for (int label : labels.labels) out << label << '\n';
    out.close();
    if (!out) raise(errc::io_failure, path.string() + ": write failed");
}

SplitDefinition load_split(const std::filesystem::path& path, std::size_t n_samples, int split_id) {
    std::ifstream in(path);
    if (!in) raise(errc::io_failure, path.string() + ": cannot open for reading");
    SplitDefinition split;
    split.split_id = split_id;
    std::set<std::size_t> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = chomp(line);
        if (line.empty()) continue;
        const auto comma = line.find(',');
        const std::string where = path.string() + ": line " + std::to_string(line_no);
        if (comma == std::string::npos) raise(errc::parse_error, where + ": expected '<index>,<train|test>'");
        unsigned long long index = 0;
        const auto [ptr, ec] = std::from_chars(line.data(), line.data() + comma, index);
        if (ec != std::errc() || ptr != line.data() + comma) {
            raise(errc::parse_error, where + ": bad index '" + line.substr(0, comma) + "'");
        }
        if (index >= n_samples) {
            raise(errc::index_out_of_range,
                  where + ": index " + std::to_string(index) + " >= n_samples " + std::to_string(n_samples));
        }
        if (!seen.insert(static_cast<std::size_t>(index)).second) {
            raise(errc::duplicate_index, where + ": index " + std::to_string(index) + " listed twice");
        }
        const std::string role = line.substr(comma + 1);
        if (role == "train") {
            split.train_indices.push_back(static_cast<std::size_t>(index));
        } else if (role == "test") {
            split.test_indices.push_back(static_cast<std::size_t>(index));
        } else {
            raise(errc::unknown_role, where + ": role '" + role + "' is neither 'train' nor 'test'");
        }
    }
    return split;
}

void write_split(const SplitDefinition& split, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) raise(errc::io_failure, path.string() + ": cannot open for writing");
    for (std::size_t i : split.train_indices) out << i << ",train\n";
    for (std::size_t i : split.test_indices) out << i << ",test\n";
    out.close();
    if (!out) raise(errc::io_failure, path.string() + ": write failed");
}

namespace {

void validate_synthetic_spec(const SyntheticSpec& spec) {
    require(spec.n_classes >= 2, errc::invalid_spec, "need at least 2 classes");
    require(!spec.pillars.empty(), errc::invalid_spec, "need at least 1 pillar");
    require(spec.n_samples >= 2 * static_cast<std::size_t>(spec.n_classes), errc::invalid_spec,
            "need at least 2 samples per class for stratified 70/30 splits");
    std::vector<bool> covered(static_cast<std::size_t>(spec.n_classes), false);
    for (std::size_t p = 0; p < spec.pillars.size(); ++p) {
        const auto& pillar = spec.pillars[p];
        const std::string who = "pillar " + std::to_string(p);
        require(pillar.n_dims >= 1, errc::invalid_spec, who + ": n_dims must be >= 1");
        require(!pillar.informative_classes.empty(), errc::invalid_spec, who + ": informative class set is empty");
        require(pillar.n_dims >= pillar.informative_classes.size(), errc::invalid_spec,
                who + ": needs at least one dim per informative class");
        require(pillar.noise_sigma >= 0.0, errc::invalid_spec, who + ": noise_sigma must be >= 0");
        for (int c : pillar.informative_classes) {
            require(c >= 0 && c < spec.n_classes, errc::invalid_spec,
                    who + ": informative class " + std::to_string(c) + " out of range");
            covered[static_cast<std::size_t>(c)] = true;
        }
    }
    for (int c = 0; c < spec.n_classes; ++c) {
        require(covered[static_cast<std::size_t>(c)], errc::invalid_spec,
                "class " + std::to_string(c) + " is informative for no pillar");
    }
}

}  // namespace

SyntheticDataset generate_synthetic_pillars(const SyntheticSpec& spec) {
    validate_synthetic_spec(spec);

    SyntheticDataset out;

    // balanced labels, assigned round-robin
    out.labels.n_classes = spec.n_classes;
    out.labels.labels.resize(spec.n_samples);
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        out.labels.labels[i] = static_cast<int>(i % static_cast<std::size_t>(spec.n_classes));
    }

    // Pillar features: class-conditional unit mean shift on the dims owned by
    // each informative class, Gaussian noise everywhere.
    for (std::size_t p = 0; p < spec.pillars.size(); ++p) {
        const auto& ps = spec.pillars[p];
        std::vector<int> informative = ps.informative_classes;
        std::sort(informative.begin(), informative.end());
        informative.erase(std::unique(informative.begin(), informative.end()), informative.end());

        FeatureMatrix m(spec.n_samples, ps.n_dims);
        Rng rng(derive_seed(spec.seed, p));
        for (std::size_t i = 0; i < spec.n_samples; ++i) {
            const int label = out.labels.labels[i];
            const auto it = std::find(informative.begin(), informative.end(), label);
            const std::size_t rank = static_cast<std::size_t>(it - informative.begin());
            const bool is_informative = it != informative.end();
            for (std::size_t d = 0; d < ps.n_dims; ++d) {
                double value = ps.noise_sigma * rng.normal();
                if (is_informative && d % informative.size() == rank) value += 1.0;
                m.at(i, d) = static_cast<float>(value);
            }
        }
        out.pillars.push_back(std::move(m));
    }

    // Three stratified splits: per class, indices in ascending order are
    // rotated by a split-dependent offset, then the first floor(0.7*count)
    // go to train. Deterministic and distinct across splits.
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(spec.n_classes));
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        by_class[static_cast<std::size_t>(out.labels.labels[i])].push_back(i);
    }
    for (int s = 0; s < 3; ++s) {
        SplitDefinition split;
        split.split_id = s + 1;
        for (const auto& members : by_class) {
            const std::size_t count = members.size();
            const std::size_t n_train = (count * 7) / 10;
            const std::size_t offset = (static_cast<std::size_t>(s) * std::max<std::size_t>(1, count / 3)) % count;
            for (std::size_t j = 0; j < count; ++j) {
                const std::size_t index = members[(j + offset) % count];
                (j < n_train ? split.train_indices : split.test_indices).push_back(index);
            }
        }
        std::sort(split.train_indices.begin(), split.train_indices.end());
        std::sort(split.test_indices.begin(), split.test_indices.end());
        out.splits.push_back(std::move(split));
    }
    return out;
}

void l2_normalize_rows(FeatureMatrix& m) {
    for (std::size_t i = 0; i < m.n_samples; ++i) {
        double sq = 0.0;
        float* row = m.row(i);
        for (std::size_t d = 0; d < m.n_dims; ++d) sq += double(row[d]) * double(row[d]);
        if (sq <= 0.0) continue;
        const double inv = 1.0 / std::sqrt(sq);
        for (std::size_t d = 0; d < m.n_dims; ++d) row[d] = static_cast<float>(row[d] * inv);
    }
}

const char* errc_name(errc code) {
    switch (code) {
        case errc::bad_magic: return "BadMagic";
        case errc::unsupported_version: return "UnsupportedVersion";
        case errc::truncated_payload: return "TruncatedPayload";
        case errc::non_finite_value: return "NonFiniteValue";
        case errc::invalid_header: return "InvalidHeader";
        case errc::io_failure: return "IoFailure";
        case errc::parse_error: return "ParseError";
        case errc::negative_label: return "NegativeLabel";
        case errc::duplicate_index: return "DuplicateIndex";
        case errc::unknown_role: return "UnknownRole";
        case errc::index_out_of_range: return "IndexOutOfRange";
        case errc::invalid_spec: return "InvalidSpec";
        case errc::dimension_mismatch: return "DimensionMismatch";
        case errc::zero_variance: return "ZeroVariance";
        case errc::degenerate_diagonal: return "DegenerateDiagonal";
        case errc::size_mismatch: return "SizeMismatch";
        case errc::negative_weight: return "NegativeWeight";
        case errc::single_class: return "SingleClass";
        case errc::shape_mismatch: return "ShapeMismatch";
        case errc::empty_class: return "EmptyClass";
        case errc::malformed_problem: return "MalformedProblem";
        case errc::kernel_mismatch: return "KernelMismatch";
        case errc::all_kernels_inactive: return "AllKernelsInactive";
        case errc::too_few_samples: return "TooFewSamples";
        case errc::degenerate_component: return "DegenerateComponent";
        case errc::empty_descriptor_set: return "EmptyDescriptorSet";
        case errc::length_mismatch: return "LengthMismatch";
        case errc::empty_input: return "Empty";
        case errc::label_out_of_range: return "LabelOutOfRange";
    }
    return "UnknownError";
}

}  // namespace pillar
