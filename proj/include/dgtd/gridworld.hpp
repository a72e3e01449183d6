#pragma once

#include <vector>

#include "dgtd/mdp.hpp"
#include "dgtd/value_objective.hpp"

namespace dgtd {

// Foraging world on a bounded grid.  States are numbered left to right and
// bottom to top: state 1 is the bottom-left corner, state rows*cols the
// top-right.  Rows and columns are 1-based in this spec.
struct GridWorldSpec {
  int rows = 20;
  int cols = 20;
  int food_row = 20;
  int food_col = 20;
  int predator_row_min = 8;
  int predator_row_max = 15;
  int predator_col_min = 5;
  int predator_col_max = 20;
  double step_reward = -1.0;
  double predator_reward = -15.0;
  double food_reward = 20.0;

  int num_states() const { return rows * cols; }
  int state_of(int row, int col) const { return (row - 1) * cols + (col - 1); }  // 0-based
  int row_of(int state) const { return state / cols + 1; }
  int col_of(int state) const { return state % cols + 1; }
  bool in_predator_area(int state) const;
  void validate() const;
};

enum GridAction : int { north = 0, south = 1, east = 2, west = 3 };
inline constexpr int kGridActions = 4;

struct GridFeatureSpec {
  int markers_per_axis = 8;
  // Squared-width parameter of the Gaussian exponent over the unit square:
  // exp(-||pos - marker||^2 / (2 * width)).
  double width = 0.005;
  bool normalize_rows = false;
};

// Deterministic movement kernel; off-grid moves stay in place; reward is
// decided by the destination cell.
Mdp build_world(const GridWorldSpec& spec);

// Gaussian radial basis features on marker grid positions, cell-centered on
// the unit square.
FeatureMap build_features(const GridFeatureSpec& features, const GridWorldSpec& world);

struct GridPolicies {
  Policy myopic;                  // head straight for the food
  Policy detour;                  // route around the predator area
  std::vector<Policy> behaviors;  // territorial, one per agent
};

// greedy_prob is the mass put on the distance-reducing action set (split
// equally on ties, remainder spread over the other actions); detour_prob is
// the mass on the detour routing field.
GridPolicies build_policies(const GridWorldSpec& world,
                            const std::vector<int>& territory_centers,
                            double greedy_prob = 0.8, double detour_prob = 0.95,
                            double behavior_greedy_prob = 0.8);

// A policy that puts `attract_prob` on the actions minimizing Manhattan
// distance of the destination to `goal_state` (0-based).
Policy attraction_policy(const GridWorldSpec& world, int goal_state, double attract_prob);

// 15 approximately equispaced centers from state 395 down to 21 (1-based),
// matching the arithmetic-looking progression of the reference setup.
std::vector<int> default_territory_centers();

}  // namespace dgtd
