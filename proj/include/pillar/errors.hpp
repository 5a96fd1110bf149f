#pragma once

#include <stdexcept>
#include <string>

namespace pillar {

// Every recoverable failure in the library is raised as an Error carrying one
// of these codes. Messages include file paths, byte offsets or line numbers
// where the format defines them.
enum class errc {
    // file formats
    bad_magic,
    unsupported_version,
    truncated_payload,
    non_finite_value,
    invalid_header,
    io_failure,
    // text loaders
    parse_error,
    negative_label,
    duplicate_index,
    unknown_role,
    index_out_of_range,
    // synthetic generator
    invalid_spec,
    // kernels
    dimension_mismatch,
    zero_variance,
    degenerate_diagonal,
    size_mismatch,
    negative_weight,
    // svm
    single_class,
    shape_mismatch,
    empty_class,
    // lp
    malformed_problem,
    // mkl
    kernel_mismatch,
    all_kernels_inactive,
    // fisher
    too_few_samples,
    degenerate_component,
    empty_descriptor_set,
    // evaluation
    length_mismatch,
    empty_input,
    label_out_of_range,
};

const char* errc_name(errc code);

class Error : public std::runtime_error {
public:
    Error(errc code, const std::string& message)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

    errc code() const noexcept { return code_; }

private:
    errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool condition, errc code, const std::string& message) {
    if (!condition) raise(code, message);
}

}  // namespace pillar
