#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "aol/errors.hpp"
#include "aol/pomdp.hpp"
#include "aol/rng.hpp"

namespace aol {

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

enum class obs_error_model {
  clamped,   ///< clamp(slope * d, floor, cap): noise grows with distance
  paper,     ///< min(cap, 1 - slope * d), the formula as printed
  constant,  ///< the listed constant (floor)
};

inline const char* to_string(obs_error_model m) {
  switch (m) {
    case obs_error_model::clamped: return "clamped";
    case obs_error_model::paper: return "paper";
    case obs_error_model::constant: return "constant";
  }
  return "?";
}

/// Actions are up (+y), down (-y), left (-x), right (+x).
inline constexpr int num_grid_actions = 4;
inline constexpr Cell grid_moves[num_grid_actions] = {{0, 1}, {0, -1}, {-1, 0}, {1, 0}};
inline const char* grid_action_names[num_grid_actions] = {"up", "down", "left", "right"};

struct GridWorldSpec {
  int width = 20;
  int height = 20;
  std::vector<Cell> beacons{{3, 3}};
  std::vector<Cell> obstacles{{2, 3}, {2, 4}, {9, 3}};
  Cell goal{7, 5};
  Cell start{1, 3};
  double p_intended = 0.5;
  double p_adjacent = 0.2;
  double p_stay = 0.3;
  double r_goal = 200.0;
  double r_obstacle = -30.0;
  double r_step = -0.5;
  double distance_scale = 15.0;  ///< numerator of the distance reward
  double reward_offset = 0.0;    ///< added to every reward
  obs_error_model error_model = obs_error_model::clamped;
  double error_slope = 0.15;
  double error_floor = 0.1;
  double error_cap = 0.9;
  /// Beyond this distance the sensor only reports the null observation. The
  /// default is where slope * d passes the cap: 0.9 / 0.15 = 6.
  double beacon_range = 6.0;
  int horizon = 3;

  int num_cells() const noexcept { return width * height; }
  int index(Cell c) const noexcept { return c.y * width + c.x; }
  Cell cell(int s) const noexcept { return {s % width, s / width}; }
  bool inside(Cell c) const noexcept { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }
  bool is_obstacle(Cell c) const { return std::find(obstacles.begin(), obstacles.end(), c) != obstacles.end(); }
  int null_observation() const noexcept { return num_cells(); }

  double beacon_distance(Cell c) const {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& b : beacons) d = std::min(d, std::hypot(c.x - b.x, c.y - b.y));
    return d;
  }

  double observation_error(double d) const {
    switch (error_model) {
      case obs_error_model::clamped: return std::clamp(error_slope * d, error_floor, error_cap);
      case obs_error_model::paper: return std::min(error_cap, 1.0 - error_slope * d);
      case obs_error_model::constant: return error_floor;
    }
    return error_floor;
  }

  double reward(Cell c) const {
    double r = r_step + distance_scale / (1.0 + std::hypot(c.x - goal.x, c.y - goal.y)) + reward_offset;
    if (c == goal) r += r_goal;
    if (is_obstacle(c)) r += r_obstacle;
    return r;
  }

  void validate() const {
    if (width <= 0 || height <= 0) throw contract_violation("grid dimensions must be positive");
    if (p_intended < 0 || p_adjacent < 0 || p_stay < 0 ||
        std::abs(p_intended + p_adjacent + p_stay - 1.0) > probability_tolerance)
      throw contract_violation("transition parameters must be non-negative and sum to 1");
    if (!inside(goal) || !inside(start)) throw contract_violation("start and goal must lie inside the grid");
    for (const auto& b : beacons)
      if (!inside(b)) throw contract_violation("beacon outside the grid");
    for (const auto& o : obstacles)
      if (!inside(o)) throw contract_violation("obstacle outside the grid");
    if (is_obstacle(goal)) throw contract_violation("goal cell is an obstacle");
    if (is_obstacle(start)) throw contract_violation("start cell is an obstacle");
    if (horizon <= 0) throw contract_violation("horizon must be positive");
  }
};

/**
 * Grid navigation with a range-limited position sensor.
 *
 * Movement: the intended cell with p_intended, each of the two cells beside the
 * intended one with p_adjacent / 2, otherwise stay. Mass that would leave the
 * grid or enter an obstacle stays in place. The goal is absorbing.
 *
 * Sensor: within range the true cell is reported with 1 - p_err and each grid
 * neighbour with p_err / 4 (neighbours outside the grid give their share back to
 * the true cell). Out of range the null observation is emitted.
 */
inline DiscretePomdp build_beacon_pomdp(const GridWorldSpec& spec) {
  spec.validate();
  const int n = spec.num_cells();
  DiscretePomdp m(n, num_grid_actions, n + 1, spec.horizon);
  auto add = [&](int s, int a, Cell target, double p) {
    int t = spec.inside(target) && !spec.is_obstacle(target) ? spec.index(target) : s;
    m.set_transition(s, a, t, m.transition(s, a, t) + p);
  };
  for (int s = 0; s < n; ++s) {
    const Cell c = spec.cell(s);
    for (int a = 0; a < num_grid_actions; ++a) {
      m.set_reward(s, a, spec.reward(c));
      if (c == spec.goal) {
        m.set_transition(s, a, s, 1.0);
        continue;
      }
      const Cell d = grid_moves[a];
      const Cell perp{d.y, d.x};
      const Cell intended{c.x + d.x, c.y + d.y};
      add(s, a, intended, spec.p_intended);
      add(s, a, {intended.x + perp.x, intended.y + perp.y}, spec.p_adjacent / 2);
      add(s, a, {intended.x - perp.x, intended.y - perp.y}, spec.p_adjacent / 2);
      add(s, a, c, spec.p_stay);
    }
    const double dist = spec.beacon_distance(c);
    if (dist > spec.beacon_range) {
      m.set_observation(s, spec.null_observation(), 1.0);
      continue;
    }
    const double err = spec.observation_error(dist);
    double own = 1.0 - err;
    for (const auto& mv : grid_moves) {
      Cell nb{c.x + mv.x, c.y + mv.y};
      if (spec.inside(nb)) m.set_observation(s, spec.index(nb), err / 4);
      else own += err / 4;
    }
    m.set_observation(s, s, own);
  }
  std::vector<double> b0(static_cast<std::size_t>(n), 0.0);
  b0[static_cast<std::size_t>(spec.index(spec.start))] = 1.0;
  m.set_initial_belief(std::move(b0));
  m.finalize();
  return m;
}

/// The reduced desk-scale beacon layout: the paper's cells on a 10x10 grid.
inline GridWorldSpec reduced_beacon_spec() {
  GridWorldSpec s;
  s.width = 10;
  s.height = 10;
  return s;
}

/// Straight corridor of `length` cells on row 1 of a height-3 grid whose rows 0
/// and 2 are walls. Rewards are shifted by +31 so every entry is positive; the
/// beacon sits at the goal end so the first cells are out of sensor range.
inline GridWorldSpec tunnel_spec(int length = 12) {
  if (length < 3) throw contract_violation("tunnel needs at least 3 cells");
  GridWorldSpec s;
  s.width = length;
  s.height = 3;
  s.obstacles.clear();
  for (int x = 0; x < length; ++x) {
    s.obstacles.push_back({x, 0});
    s.obstacles.push_back({x, 2});
  }
  s.start = {0, 1};
  s.goal = {length - 1, 1};
  s.beacons = {{length - 1, 1}};
  s.reward_offset = 31.0;
  return s;
}

inline DiscretePomdp build_tunnel_pomdp(const GridWorldSpec& spec) {
  DiscretePomdp m = build_beacon_pomdp(spec);
  if (m.min_reward() < 0.0)
    throw contract_violation("tunnel rewards must be non-negative; raise reward_offset (minimum reward " +
                             std::to_string(m.min_reward()) + ")");
  return m;
}

struct StepResult {
  observation_id observation = 0;
  double reward = 0.0;
  bool done = false;
  state_id next_state = 0;
};

/// Episode simulator over a tabular model. The reward of a step is r(x_t, a_t).
class Environment {
 public:
  Environment(const DiscretePomdp& model, state_id start, int max_steps, std::uint64_t seed, state_id goal = -1)
      : model_(model), state_(start), goal_(goal), max_steps_(max_steps),
        rng_(make_stream(seed, {tag(stream_tag::environment)})) {}

  StepResult step(action_id a) {
    if (done_) throw contract_violation("step() on a finished episode");
    StepResult r;
    r.reward = model_.reward(state_, a);
    state_ = model_.sample_next_state(state_, a, rng_);
    r.observation = model_.sample_observation(state_, rng_);
    r.next_state = state_;
    ++steps_;
    done_ = (goal_ >= 0 && state_ == goal_) || steps_ >= max_steps_;
    r.done = done_;
    return r;
  }

  state_id state() const noexcept { return state_; }
  int steps() const noexcept { return steps_; }
  bool done() const noexcept { return done_; }

 private:
  const DiscretePomdp& model_;
  state_id state_;
  state_id goal_;
  int max_steps_;
  int steps_ = 0;
  bool done_ = false;
  rng_engine rng_;
};

inline Environment make_environment(const DiscretePomdp& model, const GridWorldSpec& spec, int max_steps,
                                    std::uint64_t seed) {
  return Environment(model, spec.index(spec.start), max_steps, seed, spec.index(spec.goal));
}

}  // namespace aol
