#pragma once

#include <stdexcept>
#include <string>

namespace gliomakit {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Two volumes/masks/tensors that must share a grid do not.
class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// A value violates the label alphabet {0,1,2,3}.
class InvalidLabel : public Error {
public:
    using Error::Error;
};

/// Intensity statistics have no usable spread (constant or empty input).
class DegenerateSpread : public Error {
public:
    using Error::Error;
};

class NiftiError : public Error {
public:
    using Error::Error;
};

}  // namespace gliomakit
