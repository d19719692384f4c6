#pragma once

#include <stdexcept>
#include <string>

namespace xrank {

// Exit codes used by the CLI map onto these classes:
//   ConfigError -> 2, MissingArtifact -> 3, DataError -> 4.

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class MissingArtifact : public std::runtime_error {
public:
    explicit MissingArtifact(const std::string& path)
        : std::runtime_error("missing artifact: " + path), path_(path) {}

    const std::string& path() const { return path_; }

private:
    std::string path_;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
public:
    ParseError(const std::string& file, std::size_t line, const std::string& what)
        : DataError(file + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

}  // namespace xrank
