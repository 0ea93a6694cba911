#pragma once

#include <stdexcept>

namespace buckrl {

/// Output voltage fell below the constant-power-load floor; the load
/// current P/v is no longer meaningful and the run must abort.
struct VoltageCollapse : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A state variable became non-finite during integration or training.
struct NumericalDivergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// No steady operating point exists for the requested duty/load pair.
struct NoEquilibrium : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// The steady-state sweep produced too few settled samples to fit a map.
struct NoSteadyState : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Regressors are collinear beyond the rank-2 fallback; no fit possible.
struct DegenerateDesign : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Replay memory holds fewer transitions than one minibatch.
struct InsufficientReplay : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Sampling from an empty replay memory.
struct EmptyMemory : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Configuration file or parameter validation failure. The message is
/// prefixed with the offending key path, e.g. "dqn.gamma: ...".
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace buckrl
