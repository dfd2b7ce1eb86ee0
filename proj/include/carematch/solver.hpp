#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "carematch/cnf.hpp"

namespace carematch::sat {

struct Config {
    double var_decay = 0.95;
    double clause_decay = 0.999;
    /// Conflicts per Luby unit.
    std::uint64_t restart_base = 64;
    /// Learned clauses are kept untouched below this count, then halved by activity.
    std::size_t learnt_limit = 10000;
    /// Fraction of decisions taken on a random unassigned variable; 0 disables.
    double random_decision_freq = 0.0;
    std::uint64_t seed = 0;
};

struct Stats {
    std::uint64_t solves = 0;
    std::uint64_t decisions = 0;
    std::uint64_t propagations = 0;
    std::uint64_t conflicts = 0;
    std::uint64_t restarts = 0;
    std::uint64_t learned = 0;
    std::uint64_t deleted = 0;

    bool operator==(const Stats&) const = default;
};

enum class Verdict { sat, unsat };

struct SolveOutcome {
    Verdict verdict = Verdict::unsat;
    /// 1-based; model[0] unused. Empty for UNSAT.
    std::vector<bool> model;
    /// Subset of the assumptions that is already contradictory. Empty when
    /// the clause set itself is UNSAT.
    std::vector<Lit> failed_assumptions;
    Stats stats;

    bool is_sat() const { return verdict == Verdict::sat; }
    bool value(Lit lit) const { return model.at(static_cast<std::size_t>(var_of(lit))) == (lit > 0); }
};

/// Incremental CDCL solver: two watched literals, first-UIP learning,
/// VSIDS-style activities, Luby restarts, phase saving and assumptions.
/// One instance is single-threaded; independent instances share nothing.
class Solver {
public:
    explicit Solver(Config config = {});
    ~Solver();
    Solver(const Solver&) = delete;
    Solver& operator=(const Solver&) = delete;
    Solver(Solver&&) noexcept;
    Solver& operator=(Solver&&) noexcept;

    int new_var();
    /// Ensures variables 1..n exist.
    void reserve_vars(int n);
    int num_vars() const;

    /// Drops tautologies and duplicate literals; an empty clause makes the
    /// solver permanently UNSAT. Throws SolverError("bad-literal") for
    /// variable 0 or an unallocated variable. Returns false once UNSAT.
    bool add_clause(std::span<const Lit> clause);
    bool add_clause(std::initializer_list<Lit> clause) {
        return add_clause(std::span<const Lit>(clause.begin(), clause.size()));
    }
    void add_formula(const CnfFormula& formula);

    SolveOutcome solve(std::span<const Lit> assumptions = {});
    SolveOutcome solve(std::initializer_list<Lit> assumptions) {
        return solve(std::span<const Lit>(assumptions.begin(), assumptions.size()));
    }

    /// False once the clause set is known UNSAT independent of assumptions.
    bool okay() const;
    const Stats& stats() const;
    const Config& config() const;

    /// Problem clauses as accepted by add_clause (after normalization).
    const std::vector<Clause>& problem_clauses() const;
    /// Currently retained learned clauses.
    std::vector<Clause> learned_clauses() const;
    /// Structural check of the watch index: every live clause of width >= 2
    /// is watched by exactly its first two literals.
    bool watches_consistent() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

using ModelCallback = std::function<void(const SolveOutcome&)>;

/// Solves repeatedly, recording each model's projection and blocking it,
/// until UNSAT or `limit` models. Blocking clauses stay in the solver; pass
/// an activation literal in `assumptions` and guard them with `guard` to
/// retire them afterwards (blocking clause gets `-guard` appended).
std::vector<std::vector<Lit>> enumerate_models(Solver& solver, std::span<const int> projection,
                                               std::size_t limit,
                                               std::span<const Lit> assumptions = {},
                                               std::optional<Lit> guard = std::nullopt,
                                               const ModelCallback& on_model = {});

/// Reference decision procedure: backtracking DPLL with unit propagation.
/// Throws SolverError("variable-budget") when num_vars > 30.
struct OracleResult {
    Verdict verdict = Verdict::unsat;
    std::vector<bool> model;
};
OracleResult dpll_oracle(const std::vector<Clause>& clauses, int num_vars);

}  // namespace carematch::sat
