#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sdelab {

// Base class for everything the library throws.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A user-supplied parameter is outside its admissible range.
struct InvalidParameterError : Error {
    using Error::Error;
};

// Diffusion family that cannot certify a positive ellipticity constant.
struct EllipticityViolationError : Error {
    using Error::Error;
};

// A standing-assumption check failed; message names the check and witness point.
struct AssumptionViolationError : Error {
    using Error::Error;
};

// Requested dyadic level incompatible with the lattice resolution.
struct InvalidLevelError : Error {
    using Error::Error;
};

// Guard against absurd resource requests (lattice level out of [1,24]).
struct ResourceGuardError : Error {
    using Error::Error;
};

// Missing cutoff, non-dense path where density is required, bad config file.
struct ConfigurationError : Error {
    using Error::Error;
};

// A trajectory coordinate left the sanity box; carries where it happened.
struct NumericalBlowupError : Error {
    NumericalBlowupError(const std::string& msg, std::uint64_t fine_step, std::uint64_t path)
        : Error(msg), fine_step(fine_step), path_index(path) {}
    std::uint64_t fine_step = 0;
    std::uint64_t path_index = 0;
};

// Paths that do not live on a common grid / lattice.
struct IncompatiblePathsError : Error {
    using Error::Error;
};

// Ensembles that are not driven by the same lattice seed and path indices.
// Comparing them would be statistically meaningless, so this is a hard failure.
struct CouplingViolationError : Error {
    using Error::Error;
};

// Log-log fit fed a zero error or too few points.
struct DegenerateFitError : Error {
    using Error::Error;
};

// Unexpected numerical condition (singular matrix in the Girsanov weight).
struct NumericalError : Error {
    using Error::Error;
};

}  // namespace sdelab
