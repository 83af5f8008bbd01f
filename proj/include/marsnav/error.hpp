#ifndef MARSNAV_ERROR_HPP
#define MARSNAV_ERROR_HPP

#include <stdexcept>
#include <string>

namespace marsnav {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FitError : public Error {
public:
    using Error::Error;
};

/// Spline queried outside its tabulated range.
class ExtrapolationError : public Error {
public:
    using Error::Error;
};

/// cos(gamma) or cos(phi) too close to zero for the entry equations.
class SingularityError : public Error {
public:
    using Error::Error;
};

/// Cholesky factorisation failed even after diagonal jitter.
class CovarianceError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    TrainingError(const std::string& what, int epoch)
        : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace marsnav

#endif  // MARSNAV_ERROR_HPP
