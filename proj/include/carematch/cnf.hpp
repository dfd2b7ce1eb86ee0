#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace carematch {

/// DIMACS-style literal: +v / -v for variable v >= 1.
using Lit = std::int32_t;
using Clause = std::vector<Lit>;

inline int var_of(Lit lit) { return lit < 0 ? -lit : lit; }

struct CnfFormula {
    int num_vars = 0;
    std::vector<Clause> clauses;

    /// Sorts out duplicate literals and drops tautologies. Returns false when
    /// the clause was a tautology and nothing was added. Grows num_vars to
    /// cover every literal.
    bool add_clause(Clause clause);

    std::size_t max_width() const;
};

/// Removes duplicate literals, keeping first-occurrence order. Returns false
/// when the clause contains both v and -v.
bool normalize_clause(Clause& clause);

/// True when `assignment[v]` (1-based, index 0 unused) satisfies every clause.
bool satisfies(const CnfFormula& formula, const std::vector<bool>& assignment);

/// `p cnf <vars> <clauses>` header, then one 0-terminated clause per line.
std::string export_dimacs(const CnfFormula& formula);

/// Accepts comment lines, clauses spanning lines and a trailing `%` marker.
/// Throws SolverError("dimacs-parse") on malformed input.
CnfFormula parse_dimacs(std::string_view text);

}  // namespace carematch
