#pragma once

#include <cstddef>
#include <vector>

namespace pillar {

// Infinite bounds are encoded by the has_* flags, never by floating-point
// infinities, so tableau arithmetic stays finite.
struct LpBound {
    bool has_lower = false;
    double lower = 0.0;
    bool has_upper = false;
    double upper = 0.0;

    static LpBound free() { return {}; }
    static LpBound at_least(double lo) { return {true, lo, false, 0.0}; }
    static LpBound at_most(double hi) { return {false, 0.0, true, hi}; }
    static LpBound range(double lo, double hi) { return {true, lo, true, hi}; }
    static LpBound nonnegative() { return at_least(0.0); }
};

struct LpConstraint {
    std::vector<double> row;
    double rhs = 0.0;
};

// maximize objective . v
// subject to  ineq[i].row . v <= ineq[i].rhs
//             eq[i].row . v == eq[i].rhs
//             bounds (per variable; empty bounds vector means all free)
struct LpProblem {
    std::vector<double> objective;
    std::vector<LpConstraint> ineq;
    std::vector<LpConstraint> eq;
    std::vector<LpBound> bounds;
};

enum class LpStatus { optimal, infeasible, unbounded };

struct LpSolution {
    LpStatus status = LpStatus::infeasible;
    std::vector<double> v;
    double objective_value = 0.0;
    std::size_t iterations = 0;
};

// Two-phase dense simplex with Bland's rule (anti-cycling, deterministic).
// Optimal solutions are vertex solutions and satisfy every constraint within
// 1e-9 * max(1, |rhs|). With debug_dump set, tableaus are printed to stderr.
LpSolution solve_lp(const LpProblem& problem, bool debug_dump = false);

}  // namespace pillar
