#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace webrep {

// Error hierarchy. Callers that can recover catch the specific type;
// the CLI catches Error and reports the message with a nonzero exit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad arguments or inputs that violate a documented precondition.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Malformed input file content (carries line numbers where known).
class ParseError : public Error {
public:
    using Error::Error;
};

// Corrupt, truncated, or version-mismatched binary/artifact files.
class FormatError : public Error {
public:
    using Error::Error;
};

// Training produced a non-finite value; message names the offending step.
class NumericError : public Error {
public:
    using Error::Error;
};

// Input content too long to tokenize under the hard cap (pathological URL).
class ContentTooLongError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Number of threads used by the parallel kernels and trainers.
// 1 selects the serial reference paths and guarantees bit reproducibility.
void set_num_threads(int n);
int num_threads();

// Stable 64-bit FNV-1a. Used for config fingerprints and seed derivation.
std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(const std::string& s, std::uint64_t seed = 0xcbf29ce484222325ULL);

// Derives an independent seed for a named stage/substream from a master seed.
std::uint64_t derive_seed(std::uint64_t master, const std::string& label);

}  // namespace webrep
