#pragma once

#include <stdexcept>
#include <string>

namespace aol {

/// Base class for every error raised by the planning toolkit.
class planning_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Observation has zero predictive probability under the belief.
class impossible_observation : public planning_error {
 public:
  using planning_error::planning_error;
};

/// Every particle weight became zero after reweighting.
class particle_depletion : public planning_error {
 public:
  using planning_error::planning_error;
};

/// Exact enumeration exceeded its declared node budget.
class budget_exceeded : public planning_error {
 public:
  using planning_error::planning_error;
};

/// A precondition of an operation was violated by the caller.
class contract_violation : public planning_error {
 public:
  using planning_error::planning_error;
};

/// Q-tilde residual is negative, so multiplicative future bounds are invalid.
class positivity_violated : public planning_error {
 public:
  using planning_error::planning_error;
};

/// No strictly positive likelihood exists in a restricted (observation, state) set.
class empty_likelihood_support : public planning_error {
 public:
  using planning_error::planning_error;
};

/// Malformed model, topology, config or trace document.
class parse_error : public planning_error {
 public:
  using planning_error::planning_error;
};

}  // namespace aol
