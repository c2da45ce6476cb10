#pragma once

#include <utility>

namespace icrl::envs {

// Dark Room: an n x n grid with an invisible goal cell.  The agent moves
// deterministically (moves that would exit the grid clip to the wall) and
// receives reward 1 exactly when the step lands it on the goal.  Episodes do
// not terminate at the goal, so the optimal return from a cell at Manhattan
// distance dist >= 1 is H - dist + 1 (and H when starting on the goal).
//
// States are cell indices row * side + col; actions are:
inline constexpr int kDarkroomUp = 0;
inline constexpr int kDarkroomDown = 1;
inline constexpr int kDarkroomLeft = 2;
inline constexpr int kDarkroomRight = 3;
inline constexpr int kDarkroomStay = 4;
inline constexpr int kDarkroomActionCount = 5;

int darkroom_state(int row, int col, int side);
std::pair<int, int> darkroom_cell(int state, int side);

// Deterministic clipped move.
int darkroom_next_state(int state, int action, int side);

// (next_state, reward); reward is 1 iff next_state == goal.
std::pair<int, double> darkroom_step(int state, int action, int goal,
                                     int side);

// Shortest-path rule: move vertically until the row matches the goal's,
// then horizontally until the column matches, then stay.
int darkroom_optimal_action(int state, int goal, int side);

int darkroom_manhattan(int state, int goal, int side);

// Best achievable episode return from `state` over horizon H.
double darkroom_optimal_return(int state, int goal, int side, int horizon);

}  // namespace icrl::envs
