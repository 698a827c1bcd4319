#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pindic {

// Base class for everything thrown by this library. The CLI maps subclasses
// onto process exit codes: usage -> 2, I/O and format -> 3, numerical -> 4.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed file content; the message names the offending byte offset.
struct format_error : error {
    std::size_t offset;
    format_error(const std::string& what, std::size_t off)
        : error(what + " (byte offset " + std::to_string(off) + ")"), offset(off) {}
};

// Unreadable or unwritable path.
struct io_error : error {
    using error::error;
};

// Mismatched grid shapes (image vs. mask vs. field).
struct dimension_error : error {
    using error::error;
};

// Sample coordinate outside the image under BorderPolicy::error.
struct bounds_error : error {
    using error::error;
};

// A region of interest with no pixels inside.
struct empty_roi_error : error {
    using error::error;
};

// Non-finite value where a finite one is required (parameters, loss, pixels).
struct numerical_error : error {
    using error::error;
};

// Invalid request at the API or CLI surface (conflicting flags, wrong format
// for a field type, missing required argument).
struct usage_error : error {
    using error::error;
};

}  // namespace pindic
