#pragma once

#include <stdexcept>
#include <string>

namespace hydrocal {

/// Base class for all toolkit errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Grid has no usable cells or is otherwise malformed.
struct InvalidGrid : Error {
    explicit InvalidGrid(const std::string& msg) : Error(msg) {}
};

/// Direction graph contains a cycle; carries one cell known to lie on it.
struct CyclicFlow : Error {
    int cell_row, cell_col;
    CyclicFlow(int row, int col)
        : Error("cycle in flow directions at cell (" + std::to_string(row) + "," +
                std::to_string(col) + ")"),
          cell_row(row), cell_col(col) {}
};

/// Requested outlet is not a valid routed cell.
struct InvalidOutlet : Error {
    explicit InvalidOutlet(const std::string& msg) : Error(msg) {}
};

/// A day of year has no samples in the requested climatology window.
struct MissingDoy : Error {
    int doy;
    explicit MissingDoy(int d)
        : Error("no samples for day of year " + std::to_string(d)), doy(d) {}
};

/// A parameter value violates its range.
struct OutOfBounds : Error {
    std::string parameter;
    OutOfBounds(const std::string& name, double value, double lo, double hi)
        : Error("parameter " + name + " = " + std::to_string(value) +
                " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]"),
          parameter(name) {}
};

/// Forcing does not cover a required date.
struct MissingForcing : Error {
    explicit MissingForcing(const std::string& date)
        : Error("missing forcing on " + date) {}
};

/// Vector/matrix dimensions do not agree.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

/// Every singular value fell below the truncation threshold.
struct SingularSystem : Error {
    explicit SingularSystem(const std::string& msg) : Error(msg) {}
};

/// Training loss became non-finite; carries the offending iteration.
struct DivergedTraining : Error {
    int iteration;
    explicit DivergedTraining(int iter)
        : Error("training diverged at iteration " + std::to_string(iter)),
          iteration(iter) {}
};

/// Too few samples to evaluate a statistic.
struct InsufficientData : Error {
    explicit InsufficientData(const std::string& msg) : Error(msg) {}
};

/// File could not be read, written, or parsed.
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

/// Configuration value missing or inconsistent.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// Argument violates a documented precondition.
struct InvalidArgument : Error {
    explicit InvalidArgument(const std::string& msg) : Error(msg) {}
};

}  // namespace hydrocal
