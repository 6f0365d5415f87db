#pragma once

#include <stdexcept>
#include <string>

namespace seqgee {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// non-finite linear predictor, invalid argument ranges on numeric kernels
class NumericalDomainError : public Error {
public:
    using Error::Error;
};

class LinearSolveError : public Error {
public:
    using Error::Error;
};

class InsufficientDataError : public Error {
public:
    using Error::Error;
};

class RankDeficiencyError : public Error {
public:
    using Error::Error;
};

class NoVariablesSelectedError : public Error {
public:
    using Error::Error;
};

class PoolExhaustedError : public Error {
public:
    using Error::Error;
};

class InvariantError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

}  // namespace seqgee
