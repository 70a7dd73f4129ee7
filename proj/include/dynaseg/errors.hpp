#pragma once

#include <stdexcept>
#include <string>

namespace dynaseg {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ShapeMismatch : public Error {
public:
    explicit ShapeMismatch(const std::string& what) : Error(what) {}
};

class InvalidSpec : public Error {
public:
    explicit InvalidSpec(const std::string& what) : Error(what) {}
};

class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what) : Error(what) {}
};

class WeightsUnavailable : public Error {
public:
    explicit WeightsUnavailable(const std::string& what) : Error(what) {}
};

class SingleCluster : public Error {
public:
    explicit SingleCluster(const std::string& what) : Error(what) {}
};

class TooSmall : public Error {
public:
    explicit TooSmall(const std::string& what) : Error(what) {}
};

class InvalidQPrime : public Error {
public:
    explicit InvalidQPrime(const std::string& what) : Error(what) {}
};

class EmptyBatch : public Error {
public:
    explicit EmptyBatch(const std::string& what) : Error(what) {}
};

class EmptyEval : public Error {
public:
    explicit EmptyEval(const std::string& what) : Error(what) {}
};

class NoGroundTruth : public Error {
public:
    explicit NoGroundTruth(const std::string& what) : Error(what) {}
};

class MissingRoot : public Error {
public:
    explicit MissingRoot(const std::string& what) : Error(what) {}
};

class CorruptLayout : public Error {
public:
    explicit CorruptLayout(const std::string& what) : Error(what) {}
};

class DecodeError : public Error {
public:
    explicit DecodeError(const std::string& what) : Error(what) {}
};

}  // namespace dynaseg
