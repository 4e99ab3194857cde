#pragma once

#include <stdexcept>
#include <string>

namespace awrkit {

// Coarse failure classes; the CLI maps them onto process exit codes.
enum class ErrorKind { usage = 1, data = 2, numeric = 3 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct UsageError : Error {
    explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

struct InvalidDepthError : Error {
    explicit InvalidDepthError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct EmptyCropError : Error {
    explicit EmptyCropError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct RenderError : Error {
    explicit RenderError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct UndecodableJointError : Error {
    UndecodableJointError(int joint, const std::string& what)
        : Error(ErrorKind::numeric, what + " (joint " + std::to_string(joint) + ")"), joint_(joint) {}
    int joint() const noexcept { return joint_; }

private:
    int joint_;
};

struct NonFiniteError : Error {
    explicit NonFiniteError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

struct TrainingDivergedError : Error {
    explicit TrainingDivergedError(int epoch)
        : Error(ErrorKind::numeric, "training diverged at epoch " + std::to_string(epoch)), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

} // namespace awrkit
