#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <fstream>

#include "pillar/dataio.hpp"
#include "test_util.hpp"

using namespace pillar;
using testutil::TempDir;

namespace {

std::vector<char> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::vector<char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_bytes(const std::filesystem::path& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    out << text;
}

}  // namespace

TEST_CASE("plrf minimal file loads") {
    TempDir dir("plrf_min");
    FeatureMatrix m(1, 1);
    m.at(0, 0) = 0.0f;
    write_feature_matrix(m, dir.file("m.plrf"));
    const FeatureMatrix loaded = load_feature_matrix(dir.file("m.plrf"));
    CHECK(loaded.n_samples == 1);
    CHECK(loaded.n_dims == 1);
    CHECK(loaded.at(0, 0) == 0.0f);
}

TEST_CASE("plrf header is 24 bytes, payload 4 bytes per value") {
    TempDir dir("plrf_size");
    const FeatureMatrix m(2, 3);
    write_feature_matrix(m, dir.file("m.plrf"));
    CHECK(std::filesystem::file_size(dir.file("m.plrf")) == 48);
}

TEST_CASE("plrf round-trip is bit-identical") {
    TempDir dir("plrf_rt");
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const FeatureMatrix m = testutil::random_features(7, 5, seed);
        write_feature_matrix(m, dir.file("m.plrf"));
        const FeatureMatrix loaded = load_feature_matrix(dir.file("m.plrf"));
        REQUIRE(loaded.n_samples == m.n_samples);
        REQUIRE(loaded.n_dims == m.n_dims);
        CHECK(std::memcmp(loaded.values.data(), m.values.data(), m.values.size() * sizeof(float)) == 0);

        // and the bytes themselves round-trip
        write_feature_matrix(loaded, dir.file("m2.plrf"));
        CHECK(read_bytes(dir.file("m.plrf")) == read_bytes(dir.file("m2.plrf")));
    }
}

TEST_CASE("plrf loader rejects malformed files") {
    TempDir dir("plrf_bad");
    const FeatureMatrix m = testutil::random_features(3, 4, 9);
    write_feature_matrix(m, dir.file("good.plrf"));
    std::vector<char> bytes = read_bytes(dir.file("good.plrf"));

    SUBCASE("truncated payload names the byte offset") {
        std::vector<char> cut(bytes.begin(), bytes.begin() + 30);
        write_bytes(dir.file("cut.plrf"), cut);
        try {
            load_feature_matrix(dir.file("cut.plrf"));
            FAIL("expected TruncatedPayload");
        } catch (const Error& e) {
            CHECK(e.code() == errc::truncated_payload);
            CHECK(std::string(e.what()).find("byte 30") != std::string::npos);
        }
    }
    SUBCASE("bad magic") {
        bytes[0] = 'X';
        write_bytes(dir.file("bad.plrf"), bytes);
        try {
            load_feature_matrix(dir.file("bad.plrf"));
            FAIL("expected BadMagic");
        } catch (const Error& e) {
            CHECK(e.code() == errc::bad_magic);
            CHECK(std::string(e.what()).find("byte 0") != std::string::npos);
        }
    }
    SUBCASE("unsupported version") {
        bytes[4] = 2;
        write_bytes(dir.file("v2.plrf"), bytes);
        try {
            load_feature_matrix(dir.file("v2.plrf"));
            FAIL("expected UnsupportedVersion");
        } catch (const Error& e) {
            CHECK(e.code() == errc::unsupported_version);
        }
    }
    SUBCASE("non-finite value names its byte offset") {
        const float nan = std::nanf("");
        std::memcpy(bytes.data() + 24 + 4, &nan, sizeof nan);  // second payload value
        write_bytes(dir.file("nan.plrf"), bytes);
        try {
            load_feature_matrix(dir.file("nan.plrf"));
            FAIL("expected NonFiniteValue");
        } catch (const Error& e) {
            CHECK(e.code() == errc::non_finite_value);
            CHECK(std::string(e.what()).find("byte 28") != std::string::npos);
        }
    }
    SUBCASE("zero dimension header") {
        std::uint64_t zero = 0;
        std::memcpy(bytes.data() + 16, &zero, sizeof zero);
        write_bytes(dir.file("zero.plrf"), bytes);
        try {
            load_feature_matrix(dir.file("zero.plrf"));
            FAIL("expected InvalidHeader");
        } catch (const Error& e) {
            CHECK(e.code() == errc::invalid_header);
        }
    }
}

TEST_CASE("plrf write to an unwritable path fails") {
    const FeatureMatrix m(1, 1);
    try {
        write_feature_matrix(m, "/nonexistent_dir_for_sure/x.plrf");
        FAIL("expected IoFailure");
    } catch (const Error& e) {
        CHECK(e.code() == errc::io_failure);
    }
}

TEST_CASE("labels load") {
    TempDir dir("labels");
    SUBCASE("basic") {
        write_text(dir.file("l.txt"), "0\n1\n0\n");
        const LabelVector labels = load_labels(dir.file("l.txt"));
        CHECK(labels.labels == std::vector<int>{0, 1, 0});
        CHECK(labels.n_classes == 2);
    }
    SUBCASE("junk line reports its line number") {
        write_text(dir.file("l.txt"), "cat\n");
        try {
            load_labels(dir.file("l.txt"));
            FAIL("expected ParseError");
        } catch (const Error& e) {
            CHECK(e.code() == errc::parse_error);
            CHECK(std::string(e.what()).find("line 1") != std::string::npos);
        }
    }
    SUBCASE("negative label reports its line") {
        write_text(dir.file("l.txt"), "0\n-3\n");
        try {
            load_labels(dir.file("l.txt"));
            FAIL("expected NegativeLabel");
        } catch (const Error& e) {
            CHECK(e.code() == errc::negative_label);
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        }
    }
    SUBCASE("51 action-class style ids") {
        std::string text;
        for (int c = 0; c < 51; ++c) text += std::to_string(c) + "\n";
        write_text(dir.file("l.txt"), text);
        CHECK(load_labels(dir.file("l.txt")).n_classes == 51);
    }
    SUBCASE("round-trip") {
        LabelVector labels;
        labels.labels = {3, 0, 2, 2, 1};
        labels.n_classes = 4;
        write_labels(labels, dir.file("l.txt"));
        const LabelVector loaded = load_labels(dir.file("l.txt"));
        CHECK(loaded.labels == labels.labels);
        CHECK(loaded.n_classes == labels.n_classes);
    }
}

TEST_CASE("split load") {
    TempDir dir("split");
    SUBCASE("basic") {
        write_text(dir.file("s.txt"), "0,train\n1,test\n");
        const SplitDefinition split = load_split(dir.file("s.txt"), 2, 1);
        CHECK(split.train_indices == std::vector<std::size_t>{0});
        CHECK(split.test_indices == std::vector<std::size_t>{1});
        CHECK(split.split_id == 1);
    }
    SUBCASE("duplicate index") {
        write_text(dir.file("s.txt"), "0,train\n0,test\n");
        try {
            load_split(dir.file("s.txt"), 2, 1);
            FAIL("expected DuplicateIndex");
        } catch (const Error& e) {
            CHECK(e.code() == errc::duplicate_index);
        }
    }
    SUBCASE("unknown role") {
        write_text(dir.file("s.txt"), "5,validation\n");
        try {
            load_split(dir.file("s.txt"), 10, 1);
            FAIL("expected UnknownRole");
        } catch (const Error& e) {
            CHECK(e.code() == errc::unknown_role);
        }
    }
    SUBCASE("index out of range") {
        write_text(dir.file("s.txt"), "7,train\n");
        try {
            load_split(dir.file("s.txt"), 5, 1);
            FAIL("expected IndexOutOfRange");
        } catch (const Error& e) {
            CHECK(e.code() == errc::index_out_of_range);
        }
    }
    SUBCASE("round-trip") {
        SplitDefinition split;
        split.split_id = 2;
        split.train_indices = {0, 2, 4};
        split.test_indices = {1, 3};
        write_split(split, dir.file("s.txt"));
        const SplitDefinition loaded = load_split(dir.file("s.txt"), 5, 2);
        CHECK(loaded.train_indices == split.train_indices);
        CHECK(loaded.test_indices == split.test_indices);
    }
}

namespace {

SyntheticSpec two_view_spec(std::uint64_t seed) {
    SyntheticSpec spec;
    spec.n_samples = 80;
    spec.n_classes = 4;
    spec.seed = seed;
    spec.pillars.push_back({8, {0, 1}, 0.3});
    spec.pillars.push_back({8, {2, 3}, 0.3});
    return spec;
}

}  // namespace

TEST_CASE("synthetic generation is a pure function of the spec") {
    const SyntheticDataset a = generate_synthetic_pillars(two_view_spec(42));
    const SyntheticDataset b = generate_synthetic_pillars(two_view_spec(42));
    REQUIRE(a.pillars.size() == b.pillars.size());
    for (std::size_t p = 0; p < a.pillars.size(); ++p) {
        CHECK(std::memcmp(a.pillars[p].values.data(), b.pillars[p].values.data(),
                          a.pillars[p].values.size() * sizeof(float)) == 0);
    }
    CHECK(a.labels.labels == b.labels.labels);
    for (std::size_t s = 0; s < 3; ++s) {
        CHECK(a.splits[s].train_indices == b.splits[s].train_indices);
        CHECK(a.splits[s].test_indices == b.splits[s].test_indices);
    }

    const SyntheticDataset c = generate_synthetic_pillars(two_view_spec(43));
    CHECK(a.pillars[0].values != c.pillars[0].values);
}

TEST_CASE("synthetic splits are stratified, disjoint and distinct") {
    const SyntheticDataset data = generate_synthetic_pillars(two_view_spec(7));
    REQUIRE(data.splits.size() == 3);
    for (const auto& split : data.splits) {
        std::vector<std::size_t> all = split.train_indices;
        all.insert(all.end(), split.test_indices.begin(), split.test_indices.end());
        std::sort(all.begin(), all.end());
        // covers every index exactly once
        REQUIRE(all.size() == data.labels.labels.size());
        for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
        // per class: floor(0.7 * count) train rows
        std::vector<std::size_t> train_per_class(4, 0), count_per_class(4, 0);
        for (std::size_t i : split.train_indices) {
            ++train_per_class[static_cast<std::size_t>(data.labels.labels[i])];
        }
        for (int label : data.labels.labels) ++count_per_class[static_cast<std::size_t>(label)];
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(train_per_class[c] == (count_per_class[c] * 7) / 10);
        }
    }
    CHECK(data.splits[0].train_indices != data.splits[1].train_indices);
    CHECK(data.splits[1].train_indices != data.splits[2].train_indices);
}

TEST_CASE("invalid synthetic specs are rejected") {
    SyntheticSpec spec = two_view_spec(1);
    SUBCASE("empty informative set") {
        spec.pillars[0].informative_classes.clear();
        CHECK_THROWS_AS(generate_synthetic_pillars(spec), Error);
    }
    SUBCASE("uncovered class") {
        spec.pillars[1].informative_classes = {2};  // class 3 uncovered
        try {
            generate_synthetic_pillars(spec);
            FAIL("expected InvalidSpec");
        } catch (const Error& e) {
            CHECK(e.code() == errc::invalid_spec);
        }
    }
    SUBCASE("too few samples") {
        spec.n_samples = 5;
        CHECK_THROWS_AS(generate_synthetic_pillars(spec), Error);
    }
}

TEST_CASE("noise-free all-informative pillar separates perfectly") {
    SyntheticSpec spec;
    spec.n_samples = 60;
    spec.n_classes = 3;
    spec.seed = 11;
    spec.pillars.push_back({6, {0, 1, 2}, 0.0});
    const SyntheticDataset data = generate_synthetic_pillars(spec);
    const auto& split = data.splits[0];

    FeatureMatrix train(split.train_indices.size(), 6);
    FeatureMatrix test(split.test_indices.size(), 6);
    for (std::size_t i = 0; i < split.train_indices.size(); ++i) {
        for (std::size_t d = 0; d < 6; ++d) train.at(i, d) = data.pillars[0].at(split.train_indices[i], d);
    }
    for (std::size_t i = 0; i < split.test_indices.size(); ++i) {
        for (std::size_t d = 0; d < 6; ++d) test.at(i, d) = data.pillars[0].at(split.test_indices[i], d);
    }
    LabelVector train_labels;
    train_labels.n_classes = 3;
    for (std::size_t i : split.train_indices) train_labels.labels.push_back(data.labels.labels[i]);
    std::vector<int> truth;
    for (std::size_t i : split.test_indices) truth.push_back(data.labels.labels[i]);

    const KernelParams params = KernelParams::rbf(0.5);
    const KernelMatrix k = kernel_gram_self(train, params);
    const MulticlassSvmModel svm = train_one_vs_rest(k, train_labels, 100.0);
    const Prediction prediction = predict_multiclass(svm, kernel_gram(test, train, params));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (prediction.labels[i] == truth[i]) ++hits;
    }
    CHECK(hits == truth.size());
}

TEST_CASE("l2_normalize_rows gives unit rows and keeps zero rows") {
    FeatureMatrix m(2, 3);
    m.at(0, 0) = 3.0f;
    m.at(0, 1) = 4.0f;
    l2_normalize_rows(m);
    const double norm = std::sqrt(double(m.at(0, 0)) * m.at(0, 0) + double(m.at(0, 1)) * m.at(0, 1) +
                                  double(m.at(0, 2)) * m.at(0, 2));
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(m.at(1, 0) == 0.0f);
    CHECK(m.at(1, 1) == 0.0f);
}
