#include "icrl/envs/darkroom.hpp"

#include <algorithm>
#include <cstdlib>

#include "icrl/errors.hpp"

namespace icrl::envs {

namespace {

void check_state(int state, int side, const char* what) {
  if (side <= 0) throw ContractError(std::string(what) + ": side must be positive");
  if (state < 0 || state >= side * side)
    throw ContractError(std::string(what) + ": state outside grid");
}

}  // namespace

int darkroom_state(int row, int col, int side) {
  if (row < 0 || row >= side || col < 0 || col >= side)
    throw ContractError("darkroom_state: cell outside grid");
  return row * side + col;
}

std::pair<int, int> darkroom_cell(int state, int side) {
  check_state(state, side, "darkroom_cell");
  return {state / side, state % side};
}

int darkroom_next_state(int state, int action, int side) {
  check_state(state, side, "darkroom_next_state");
  auto [row, col] = darkroom_cell(state, side);
  switch (action) {
    case kDarkroomUp: row = std::max(0, row - 1); break;
    case kDarkroomDown: row = std::min(side - 1, row + 1); break;
    case kDarkroomLeft: col = std::max(0, col - 1); break;
    case kDarkroomRight: col = std::min(side - 1, col + 1); break;
    case kDarkroomStay: break;
    default:
      throw ContractError("darkroom_next_state: unknown action");
  }
  return darkroom_state(row, col, side);
}

std::pair<int, double> darkroom_step(int state, int action, int goal,
                                     int side) {
  check_state(goal, side, "darkroom_step(goal)");
  const int next = darkroom_next_state(state, action, side);
  return {next, next == goal ? 1.0 : 0.0};
}

int darkroom_optimal_action(int state, int goal, int side) {
  check_state(state, side, "darkroom_optimal_action");
  check_state(goal, side, "darkroom_optimal_action(goal)");
  auto [row, col] = darkroom_cell(state, side);
  auto [goal_row, goal_col] = darkroom_cell(goal, side);
  if (row < goal_row) return kDarkroomDown;
  if (row > goal_row) return kDarkroomUp;
  if (col < goal_col) return kDarkroomRight;
  if (col > goal_col) return kDarkroomLeft;
  return kDarkroomStay;
}

int darkroom_manhattan(int state, int goal, int side) {
  auto [r1, c1] = darkroom_cell(state, side);
  auto [r2, c2] = darkroom_cell(goal, side);
  return std::abs(r1 - r2) + std::abs(c1 - c2);
}

double darkroom_optimal_return(int state, int goal, int side, int horizon) {
  const int dist = darkroom_manhattan(state, goal, side);
  if (dist > horizon) return 0.0;
  // Arrive at step max(dist, 1) and collect 1 per remaining step.
  return static_cast<double>(horizon - std::max(dist, 1) + 1);
}

}  // namespace icrl::envs
