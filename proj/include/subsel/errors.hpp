#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace subsel {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed dataset files. line is 1-based, 0 when not tied to a line.
struct FormatError : Error {
    FormatError(const std::string& what, std::size_t line = 0)
        : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line(line) {}
    std::size_t line;
};

// Every candidate had zero sampling weight.
struct DegenerateWeightsError : Error {
    DegenerateWeightsError() : Error("degenerate weights") {}
};

struct RankDeficientError : Error {
    explicit RankDeficientError(const std::string& what = "rank-deficient dataset") : Error(what) {}
};

// Problem too large for brute-force enumeration.
struct EnumerationGuardError : Error {
    using Error::Error;
};

} // namespace subsel
