#pragma once

#include <stdexcept>
#include <string>

namespace noon {

// Operator moments handed to the library fail their structural
// requirements (hermiticity of <c_i^dag c_j>, symmetry of <c_i c_j>,
// mismatched shapes).
class invalid_moments_error : public std::runtime_error {
public:
    explicit invalid_moments_error(const std::string& msg)
        : std::runtime_error(msg) {}
};

// A covariance matrix violates the uncertainty relation
// V + i*Omega >= 0 beyond numerical tolerance, or is otherwise not a
// valid Gaussian state.
class unphysical_state_error : public std::runtime_error {
public:
    explicit unphysical_state_error(const std::string& msg)
        : std::runtime_error(msg) {}
};

// A factorization or series lost so much precision that the result
// would be meaningless even after extended-precision retries.
class numeric_degeneracy_error : public std::runtime_error {
public:
    explicit numeric_degeneracy_error(const std::string& msg)
        : std::runtime_error(msg) {}
};

// A conditional quantity was requested for a heralding event whose
// success probability is numerically zero.
class zero_probability_error : public std::runtime_error {
public:
    explicit zero_probability_error(const std::string& msg)
        : std::runtime_error(msg) {}
};

} // namespace noon
