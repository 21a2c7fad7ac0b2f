#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace facewarp {

/// Base class for every error raised by the library. `kind()` is a stable
/// machine-readable tag used by the CLI's JSON error output.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class ArgumentError : public Error {
public:
    explicit ArgumentError(const std::string& message) : Error("ArgumentError", message) {}
};

/// A point lies (numerically) on the camera's principal plane.
class DegenerateDepth : public Error {
public:
    DegenerateDepth(std::size_t index, double depth)
        : Error("DegenerateDepth", "point " + std::to_string(index) + " has projective depth " +
                                       std::to_string(depth) + " (|m3.p| <= eps)"),
          index_(index) {}

    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

class SingularSystem : public Error {
public:
    explicit SingularSystem(const std::string& message) : Error("SingularSystem", message) {}
};

/// The left 3x3 block of the projection matrix is not invertible.
class SingularA : public Error {
public:
    explicit SingularA(const std::string& message) : Error("SingularA", message) {}
};

class ParseError : public Error {
public:
    ParseError(const std::string& file, std::size_t line, const std::string& message)
        : Error("ParseError", file + ":" + std::to_string(line) + ": " + message), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ManifoldError : public Error {
public:
    ManifoldError(const std::string& message, std::vector<std::pair<int, int>> edges)
        : Error("ManifoldError", message), edges_(std::move(edges)) {}

    const std::vector<std::pair<int, int>>& edges() const noexcept { return edges_; }

private:
    std::vector<std::pair<int, int>> edges_;
};

class SchemeMismatch : public Error {
public:
    explicit SchemeMismatch(const std::string& message) : Error("SchemeMismatch", message) {}
};

class NoLandmarks : public Error {
public:
    explicit NoLandmarks(const std::string& message) : Error("NoLandmarks", message) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error("IoError", message) {}
};

class TrainingDiverged : public Error {
public:
    explicit TrainingDiverged(const std::string& message) : Error("TrainingDiverged", message) {}
};

}  // namespace facewarp
