#pragma once

#include <stdexcept>
#include <string>

namespace advent {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration values (bad depth, unset policy, out-of-range knobs).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Tensor shapes or sizes that do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A caller broke a documented precondition.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Dataset files that are missing or fail validation.
class IngestionError : public Error {
public:
    using Error::Error;
};

/// Non-finite values inside an unrolled layer or the training loss.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, int layer = -1)
        : Error(what), layer_(layer) {}

    /// 1-based unrolled layer index, or -1 when raised outside the unroll.
    int layer() const noexcept { return layer_; }

private:
    int layer_;
};

/// Checkpoint archives that cannot be read by this build.
class VersionError : public Error {
public:
    using Error::Error;
};

/// Filesystem failures, with the offending path in the message.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace advent
