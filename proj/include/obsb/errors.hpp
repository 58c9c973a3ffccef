#ifndef OBSB_ERRORS_HPP
#define OBSB_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace obsb {

// Base class for all toolkit errors.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Input violates a documented precondition (bad exponent, delta >= 1, ...).
struct precondition_error : error {
    using error::error;
};

// Structurally invalid data: wrong dimensions, non-finite coordinates, bad JSON.
struct malformed_error : error {
    using error::error;
};

// An iterative routine failed to reach its tolerance within its budget.
struct numerical_error : error {
    using error::error;
};

// A certified (upper-bound) quantity was required but only a sampled
// lower bound is available and no attested value was supplied.
struct certification_error : error {
    using error::error;
};

} // namespace obsb

#endif
