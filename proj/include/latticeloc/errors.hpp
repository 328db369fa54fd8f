#pragma once

#include <stdexcept>
#include <string>

namespace latticeloc {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition (bad window, empty input, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

class InsufficientBackground : public Error {
public:
    using Error::Error;
};

/// Too few usable Fourier modes, or a degenerate (all-zero) moment sequence.
class UnderResolved : public Error {
public:
    using Error::Error;
};

/// Design matrix of the amplitude solve is (nearly) singular.
class IllConditioned : public Error {
public:
    IllConditioned(const std::string& what, int first, int second)
        : Error(what), first_(first), second_(second) {}

    int first() const noexcept { return first_; }
    int second() const noexcept { return second_; }

private:
    int first_;
    int second_;
};

class BaselineMisestimate : public Error {
public:
    using Error::Error;
};

class DegenerateSpread : public Error {
public:
    using Error::Error;
};

class NonConvergence : public Error {
public:
    using Error::Error;
};

/// File could not be read or parsed.
class DataError : public Error {
public:
    using Error::Error;
};

}  // namespace latticeloc
