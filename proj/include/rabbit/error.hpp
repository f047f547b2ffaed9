#pragma once

#include <stdexcept>
#include <string>

namespace rabbit {

// Scenario or gain-schedule misconfiguration (CLI exit code 3).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite state or command inside the control loop (CLI exit code 2).
struct ControllerFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Mismatched image sizes, malformed image files.
struct ImageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Waypoint lifting failed (no usable depth).
struct PlanningError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Rank-deficient regression problem.
struct CalibrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace rabbit
