#ifndef GKC_ERROR_HPP
#define GKC_ERROR_HPP

#include <stdexcept>
#include <string>

namespace gkc {

/// Invalid argument supplied by the caller (bad node index, shape mismatch, ...).
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Operation requested on an object that is not in the required state.
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Request outside of what an operation supports (e.g. size limits).
class UnsupportedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dataset or checkpoint could not be read. The message names file and line.
class LoadError : public std::runtime_error {
public:
    LoadError(const std::string& file, std::size_t line, const std::string& what)
        : std::runtime_error(file + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
          file_(file), line_(line) {}

    const std::string& file() const noexcept { return file_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string file_;
    std::size_t line_;
};

} // namespace gkc

#endif // GKC_ERROR_HPP
