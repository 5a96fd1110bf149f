#include "pillar/lp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "pillar/errors.hpp"

namespace pillar {

namespace {

constexpr double kPivotEps = 1e-11;     // entries below this are treated as zero
constexpr double kReducedCostEps = 1e-9;
constexpr double kFeasEps = 1e-9;       // phase-1 feasibility threshold
constexpr std::size_t kMaxPivots = 100000;

// Standard-form tableau: maximize c.x s.t. A x = b, x >= 0, b >= 0.
// basis[r] is the column basic in row r.
struct Tableau {
    std::size_t rows = 0;
    std::size_t cols = 0;  // structural + slack + artificial
    std::vector<std::vector<double>> a;
    std::vector<double> b;
    std::vector<std::size_t> basis;
};

void dump(const Tableau& t, const std::vector<double>& c, const char* tag) {
    std::fprintf(stderr, "-- tableau %s (%zux%zu) --\n", tag, t.rows, t.cols);
    for (std::size_t r = 0; r < t.rows; ++r) {
        std::string line;
        for (std::size_t j = 0; j < t.cols; ++j) line += std::to_string(t.a[r][j]) + " ";
        std::fprintf(stderr, "row %zu (basis x%zu): %s| %g\n", r, t.basis[r], line.c_str(), t.b[r]);
    }
    std::string obj;
    for (double v : c) obj += std::to_string(v) + " ";
    std::fprintf(stderr, "obj: %s\n", obj.c_str());
}

void pivot(Tableau& t, std::size_t row, std::size_t col) {
    const double p = t.a[row][col];
    const double inv = 1.0 / p;
    for (std::size_t j = 0; j < t.cols; ++j) t.a[row][j] *= inv;
    t.a[row][col] = 1.0;  // kill rounding on the pivot element
    t.b[row] *= inv;
    for (std::size_t r = 0; r < t.rows; ++r) {
        if (r == row) continue;
        const double factor = t.a[r][col];
        if (factor == 0.0) continue;
        for (std::size_t j = 0; j < t.cols; ++j) t.a[r][j] -= factor * t.a[row][j];
        t.a[r][col] = 0.0;
        t.b[r] -= factor * t.b[row];
    }
    t.basis[row] = col;
}

// Bland's rule simplex on the tableau for maximize c.x. Returns false if
// unbounded. allowed(col) filters candidate entering columns.
template <typename Allowed>
bool simplex(Tableau& t, std::vector<double>& c, double& objective, std::size_t& iterations,
             Allowed allowed, bool debug, const char* tag) {
    // reduced costs: maintain c as the objective row updated by pivots
    for (std::size_t r = 0; r < t.rows; ++r) {
        const double factor = c[t.basis[r]];
        if (factor == 0.0) continue;
        for (std::size_t j = 0; j < t.cols; ++j) c[j] -= factor * t.a[r][j];
        c[t.basis[r]] = 0.0;
        objective += factor * t.b[r];
    }
    while (true) {
        if (iterations >= kMaxPivots) {
            raise(errc::malformed_problem, "simplex exceeded pivot limit (cycling guard)");
        }
        if (debug) dump(t, c, tag);
        // entering: smallest-index column with positive reduced cost (Bland)
        std::size_t enter = t.cols;
        for (std::size_t j = 0; j < t.cols; ++j) {
            if (!allowed(j)) continue;
            if (c[j] > kReducedCostEps) {
                enter = j;
                break;
            }
        }
        if (enter == t.cols) return true;  // optimal
        // leaving: minimum ratio, ties broken by smallest basic variable (Bland)
        std::size_t leave = t.rows;
        double best_ratio = 0.0;
        for (std::size_t r = 0; r < t.rows; ++r) {
            if (t.a[r][enter] <= kPivotEps) continue;
            const double ratio = t.b[r] / t.a[r][enter];
            if (leave == t.rows || ratio < best_ratio - 1e-12 ||
                (ratio <= best_ratio + 1e-12 && t.basis[r] < t.basis[leave])) {
                leave = r;
                best_ratio = ratio;
            }
        }
        if (leave == t.rows) return false;  // unbounded direction
        const double gain = c[enter];
        pivot(t, leave, enter);
        // the objective row transforms like any other row
        objective += gain * t.b[leave];
        for (std::size_t j = 0; j < t.cols; ++j) c[j] -= gain * t.a[leave][j];
        c[enter] = 0.0;
        ++iterations;
    }
}

void validate(const LpProblem& p) {
    const std::size_t n = p.objective.size();
    require(n >= 1, errc::malformed_problem, "objective is empty");
    auto check_finite = [](double v, const char* what) {
        require(std::isfinite(v), errc::malformed_problem, std::string(what) + " has non-finite coefficient");
    };
    for (double v : p.objective) check_finite(v, "objective");
    for (const auto& c : p.ineq) {
        require(c.row.size() == n, errc::malformed_problem, "inequality row length mismatch");
        for (double v : c.row) check_finite(v, "inequality");
        check_finite(c.rhs, "inequality rhs");
    }
    for (const auto& c : p.eq) {
        require(c.row.size() == n, errc::malformed_problem, "equality row length mismatch");
        for (double v : c.row) check_finite(v, "equality");
        check_finite(c.rhs, "equality rhs");
    }
    require(p.bounds.empty() || p.bounds.size() == n, errc::malformed_problem,
            "bounds must be empty or one per variable");
    for (const auto& b : p.bounds) {
        if (b.has_lower) check_finite(b.lower, "lower bound");
        if (b.has_upper) check_finite(b.upper, "upper bound");
    }
}

// Mapping from an original variable to nonnegative standard-form columns:
// x = offset + sign0 * y[col0] (+ sign1 * y[col1] for free variables).
struct VarMap {
    double offset = 0.0;
    std::size_t col0 = 0;
    double sign0 = 1.0;
    std::size_t col1 = 0;
    bool split = false;
};

}  // namespace

LpSolution solve_lp(const LpProblem& problem, bool debug_dump) {
    validate(problem);
    const std::size_t n = problem.objective.size();

    // quick infeasibility from crossed bounds
    for (const auto& b : problem.bounds) {
        if (b.has_lower && b.has_upper && b.lower > b.upper) {
            return {LpStatus::infeasible, {}, 0.0, 0};
        }
    }

    // 1. substitute variables so every standard-form variable is >= 0
    std::vector<VarMap> vmap(n);
    std::size_t n_std = 0;
    std::vector<LpConstraint> extra_ineq;  // shifted upper bounds
    for (std::size_t j = 0; j < n; ++j) {
        const LpBound b = problem.bounds.empty() ? LpBound::free() : problem.bounds[j];
        VarMap& m = vmap[j];
        if (b.has_lower) {
            m.offset = b.lower;
            m.col0 = n_std++;
            m.sign0 = 1.0;
            if (b.has_upper) {
                LpConstraint up;
                up.row.assign(n, 0.0);
                up.row[j] = 1.0;  // resolved against vmap below
                up.rhs = b.upper;
                extra_ineq.push_back(std::move(up));
            }
        } else if (b.has_upper) {
            m.offset = b.upper;
            m.col0 = n_std++;
            m.sign0 = -1.0;
        } else {
            m.col0 = n_std++;
            m.col1 = n_std++;
            m.split = true;
        }
    }

    auto to_std_row = [&](const std::vector<double>& row, double rhs, std::vector<double>& out,
                          double& out_rhs) {
        out.assign(n_std, 0.0);
        out_rhs = rhs;
        for (std::size_t j = 0; j < n; ++j) {
            const double a = row[j];
            if (a == 0.0) continue;
            const VarMap& m = vmap[j];
            out[m.col0] += a * m.sign0;
            if (m.split) out[m.col1] -= a;
            out_rhs -= a * m.offset;
        }
    };

    std::vector<LpConstraint> all_ineq = problem.ineq;
    for (auto& c : extra_ineq) all_ineq.push_back(std::move(c));

    const std::size_t n_rows = all_ineq.size() + problem.eq.size();
    const std::size_t n_slack = all_ineq.size();

    // 2. build the phase-1 tableau
    Tableau t;
    t.rows = n_rows;
    t.cols = n_std + n_slack;  // artificials appended below as needed
    t.a.assign(n_rows, std::vector<double>(t.cols, 0.0));
    t.b.assign(n_rows, 0.0);
    t.basis.assign(n_rows, 0);

    std::vector<double> row_std;
    double rhs_std = 0.0;
    std::size_t r = 0;
    std::vector<std::size_t> needs_artificial;
    for (const auto& c : all_ineq) {
        to_std_row(c.row, c.rhs, row_std, rhs_std);
        for (std::size_t j = 0; j < n_std; ++j) t.a[r][j] = row_std[j];
        t.a[r][n_std + r] = 1.0;  // slack
        t.b[r] = rhs_std;
        if (rhs_std < 0.0) {
            for (std::size_t j = 0; j < t.cols; ++j) t.a[r][j] = -t.a[r][j];
            t.b[r] = -t.b[r];
            needs_artificial.push_back(r);  // slack is now -1, not basic
        } else {
            t.basis[r] = n_std + r;
        }
        ++r;
    }
    for (const auto& c : problem.eq) {
        to_std_row(c.row, c.rhs, row_std, rhs_std);
        for (std::size_t j = 0; j < n_std; ++j) t.a[r][j] = row_std[j];
        t.b[r] = rhs_std;
        if (rhs_std < 0.0) {
            for (std::size_t j = 0; j < t.cols; ++j) t.a[r][j] = -t.a[r][j];
            t.b[r] = -t.b[r];
        }
        needs_artificial.push_back(r);
        ++r;
    }

    const std::size_t first_artificial = t.cols;
    t.cols += needs_artificial.size();
    for (auto& row : t.a) row.resize(t.cols, 0.0);
    for (std::size_t i = 0; i < needs_artificial.size(); ++i) {
        const std::size_t row_index = needs_artificial[i];
        t.a[row_index][first_artificial + i] = 1.0;
        t.basis[row_index] = first_artificial + i;
    }

    LpSolution solution;
    solution.v.assign(n, 0.0);

    // 3. phase 1: maximize -sum(artificials)
    if (!needs_artificial.empty()) {
        std::vector<double> c1(t.cols, 0.0);
        for (std::size_t j = first_artificial; j < t.cols; ++j) c1[j] = -1.0;
        double obj1 = 0.0;
        simplex(t, c1, obj1, solution.iterations, [](std::size_t) { return true; }, debug_dump, "phase1");
        if (obj1 < -kFeasEps) {
            solution.status = LpStatus::infeasible;
            return solution;
        }
        // drive remaining artificials out of the basis
        for (std::size_t row = 0; row < t.rows; ++row) {
            if (t.basis[row] < first_artificial) continue;
            std::size_t col = first_artificial;
            for (std::size_t j = 0; j < first_artificial; ++j) {
                if (std::abs(t.a[row][j]) > kPivotEps) {
                    col = j;
                    break;
                }
            }
            if (col < first_artificial) {
                pivot(t, row, col);
                ++solution.iterations;
            }
            // else: redundant row, its basic artificial stays at value ~0
        }
    }

    // 4. phase 2 on the original objective, artificial columns frozen
    std::vector<double> c2(t.cols, 0.0);
    double obj2 = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double cj = problem.objective[j];
        if (cj == 0.0) continue;
        const VarMap& m = vmap[j];
        c2[m.col0] += cj * m.sign0;
        if (m.split) c2[m.col1] -= cj;
        obj2 += cj * m.offset;
    }
    const bool bounded = simplex(
        t, c2, obj2, solution.iterations, [&](std::size_t j) { return j < first_artificial; },
        debug_dump, "phase2");
    if (!bounded) {
        solution.status = LpStatus::unbounded;
        return solution;
    }

    // 5. read off the vertex and map back to original variables
    std::vector<double> y(t.cols, 0.0);
    for (std::size_t row = 0; row < t.rows; ++row) y[t.basis[row]] = t.b[row];
    for (std::size_t j = 0; j < n; ++j) {
        const VarMap& m = vmap[j];
        double v = m.offset + m.sign0 * y[m.col0];
        if (m.split) v -= y[m.col1];
        solution.v[j] = v;
    }
    solution.objective_value = 0.0;
    for (std::size_t j = 0; j < n; ++j) solution.objective_value += problem.objective[j] * solution.v[j];
    solution.status = LpStatus::optimal;
    return solution;
}

}  // namespace pillar
