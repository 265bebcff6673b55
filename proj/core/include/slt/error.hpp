#pragma once

#include <stdexcept>
#include <string>

namespace slt {

// Shape or axis disagreement between tensors.
class DimensionError : public std::runtime_error {
public:
    explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

// Value outside the mathematical domain of an operation (negative variance,
// zero temperature, probability outside (0,1), ...).
class DomainError : public std::runtime_error {
public:
    explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

// Structurally invalid configuration (even window size, rank too large, ...).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or truncated file contents.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Token or gloss identifier outside the known vocabulary.
class VocabularyError : public std::runtime_error {
public:
    explicit VocabularyError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem failure (missing file, unwritable directory).
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// API misuse that is a programming error rather than bad data.
class UsageError : public std::logic_error {
public:
    explicit UsageError(const std::string& what) : std::logic_error(what) {}
};

} // namespace slt
