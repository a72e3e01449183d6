#include "dgtd/gridworld.hpp"

#include <cmath>
#include <stdexcept>

namespace dgtd {

bool GridWorldSpec::in_predator_area(int state) const {
  const int r = row_of(state), c = col_of(state);
  return r >= predator_row_min && r <= predator_row_max && c >= predator_col_min &&
         c <= predator_col_max;
}

void GridWorldSpec::validate() const {
  if (rows < 2 || cols < 2) throw std::invalid_argument("grid must be at least 2x2");
  if (food_row < 1 || food_row > rows || food_col < 1 || food_col > cols)
    throw std::invalid_argument("food cell outside the grid");
  if (predator_row_min < 1 || predator_row_max > rows || predator_col_min < 1 ||
      predator_col_max > cols || predator_row_min > predator_row_max ||
      predator_col_min > predator_col_max)
    throw std::invalid_argument("predator rectangle outside the grid");
  if (in_predator_area(state_of(food_row, food_col)))
    throw std::invalid_argument("food cell lies inside the predator rectangle");
}

namespace {

// Destination of one move; off-grid moves keep the state.
int destination(const GridWorldSpec& w, int state, int action) {
  int r = w.row_of(state), c = w.col_of(state);
  switch (action) {
    case north: r = std::min(r + 1, w.rows); break;
    case south: r = std::max(r - 1, 1); break;
    case east: c = std::min(c + 1, w.cols); break;
    case west: c = std::max(c - 1, 1); break;
    default: throw std::invalid_argument("bad action");
  }
  return w.state_of(r, c);
}

int manhattan(const GridWorldSpec& w, int state, int goal) {
  return std::abs(w.row_of(state) - w.row_of(goal)) +
         std::abs(w.col_of(state) - w.col_of(goal));
}

}  // namespace

Mdp build_world(const GridWorldSpec& spec) {
  spec.validate();
  const int S = spec.num_states();
  const int food = spec.state_of(spec.food_row, spec.food_col);
  Mdp mdp;
  mdp.num_states = S;
  mdp.num_actions = kGridActions;
  mdp.kernel = Matrix::Zero(static_cast<long>(S) * kGridActions, S);
  mdp.reward = Matrix::Zero(static_cast<long>(S) * kGridActions, S);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < kGridActions; ++a) {
      const int dest = destination(spec, s, a);
      const long row = static_cast<long>(s) * kGridActions + a;
      mdp.kernel(row, dest) = 1.0;
      double r = spec.step_reward;
      if (dest == food)
        r = spec.food_reward;
      else if (spec.in_predator_area(dest))
        r = spec.predator_reward;
      mdp.reward(row, dest) = r;
    }
  return mdp;
}

FeatureMap build_features(const GridFeatureSpec& features, const GridWorldSpec& world) {
  if (features.markers_per_axis < 1) throw std::invalid_argument("need at least one marker");
  if (!(features.width > 0.0)) throw std::invalid_argument("feature width must be positive");
  const int S = world.num_states();
  const int K = features.markers_per_axis;
  const int M = K * K;
  Matrix X(S, M);
  for (int s = 0; s < S; ++s) {
    const double px = (world.col_of(s) - 0.5) / world.cols;
    const double py = (world.row_of(s) - 0.5) / world.rows;
    for (int my = 0; my < K; ++my)
      for (int mx = 0; mx < K; ++mx) {
        const double cx = (mx + 0.5) / K;
        const double cy = (my + 0.5) / K;
        const double d2 = (px - cx) * (px - cx) + (py - cy) * (py - cy);
        X(s, my * K + mx) = std::exp(-d2 / (2.0 * features.width));
      }
    if (features.normalize_rows) X.row(s) /= X.row(s).sum();
  }
  try {
    return FeatureMap::checked(std::move(X));
  } catch (const std::invalid_argument&) {
    throw std::invalid_argument(
        "grid features are rank deficient; increase the feature width");
  }
}

Policy attraction_policy(const GridWorldSpec& world, int goal_state, double attract_prob) {
  if (!(attract_prob > 0.0 && attract_prob <= 1.0))
    throw std::invalid_argument("attraction probability must lie in (0,1]");
  const int S = world.num_states();
  Policy p;
  p.probs = Matrix::Zero(S, kGridActions);
  for (int s = 0; s < S; ++s) {
    int best = kGridActions + 1;
    int dist[kGridActions];
    for (int a = 0; a < kGridActions; ++a) {
      dist[a] = manhattan(world, destination(world, s, a), goal_state);
      best = std::min(best, dist[a]);
    }
    int greedy = 0;
    for (int a = 0; a < kGridActions; ++a) greedy += dist[a] == best;
    if (greedy == kGridActions) {
      p.probs.row(s).setConstant(1.0 / kGridActions);
      continue;
    }
    for (int a = 0; a < kGridActions; ++a)
      p.probs(s, a) = dist[a] == best ? attract_prob / greedy
                                      : (1.0 - attract_prob) / (kGridActions - greedy);
  }
  return p;
}

namespace {

// Detour routing field: hug the western corridor northward, cross east along
// the top rows, drop south onto the food only past the predator block.  For
// states caught inside the predator rectangle, exit by the shortest vertical
// route.
int detour_action(const GridWorldSpec& w, int state) {
  const int r = w.row_of(state), c = w.col_of(state);
  const int corridor = w.predator_col_min - 1;  // westmost safe columns
  const int above = w.predator_row_max + 1;
  if (r >= above) {
    if (c < w.food_col) return east;
    if (c > w.food_col) return west;
    return r > w.food_row ? south : north;
  }
  if (r >= w.predator_row_min && c >= w.predator_col_min && c <= w.predator_col_max) {
    // inside the predator rectangle
    return (r - w.predator_row_min) < (w.predator_row_max - r) ? south : north;
  }
  if (c <= corridor) return north;
  return west;
}

}  // namespace

GridPolicies build_policies(const GridWorldSpec& world,
                            const std::vector<int>& territory_centers, double greedy_prob,
                            double detour_prob, double behavior_greedy_prob) {
  world.validate();
  GridPolicies out;
  const int food = world.state_of(world.food_row, world.food_col);
  out.myopic = attraction_policy(world, food, greedy_prob);

  const int S = world.num_states();
  out.detour.probs = Matrix::Zero(S, kGridActions);
  for (int s = 0; s < S; ++s) {
    const int a_star = detour_action(world, s);
    for (int a = 0; a < kGridActions; ++a)
      out.detour.probs(s, a) =
          a == a_star ? detour_prob : (1.0 - detour_prob) / (kGridActions - 1);
  }

  out.behaviors.reserve(territory_centers.size());
  for (int center : territory_centers) {
    if (center < 1 || center > S)
      throw std::invalid_argument("territory center outside the grid (1-based states)");
    out.behaviors.push_back(attraction_policy(world, center - 1, behavior_greedy_prob));
  }
  return out;
}

std::vector<int> default_territory_centers() {
  // 15 evenly spread values from 395 down to 21, rounded to integers.
  std::vector<int> centers;
  for (int i = 0; i < 15; ++i)
    centers.push_back(static_cast<int>(std::lround(395.0 - i * (395.0 - 21.0) / 14.0)));
  return centers;
}

}  // namespace dgtd
