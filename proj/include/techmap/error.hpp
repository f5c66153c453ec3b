#pragma once

#include <stdexcept>
#include <string>

namespace techmap {

/// Malformed or inconsistent input data (files, ids, shapes).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training produced non-finite parameters.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace techmap
