#include "carematch/solver.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <string>

#include "carematch/error.hpp"

namespace carematch::sat {

namespace {

// Internal literal: 2 * (var - 1) + sign, sign = 1 for negative.
using ILit = std::uint32_t;
constexpr ILit kUndefLit = ~ILit{0};

inline ILit to_internal(Lit l) {
    return static_cast<ILit>((var_of(l) - 1) * 2 + (l < 0 ? 1 : 0));
}
inline Lit to_external(ILit l) {
    int v = static_cast<int>(l >> 1) + 1;
    return (l & 1U) ? -v : v;
}
inline ILit neg(ILit l) { return l ^ 1U; }
inline std::uint32_t var_index(ILit l) { return l >> 1; }
inline bool sign_of(ILit l) { return (l & 1U) != 0; }

// Three-valued assignment: 1 true, -1 false, 0 unassigned.
using LBool = std::int8_t;
constexpr LBool kTrue = 1;
constexpr LBool kFalse = -1;
constexpr LBool kUndef = 0;

struct ClauseData {
    std::vector<ILit> lits;
    bool learnt = false;
    bool deleted = false;
    double activity = 0.0;
};

struct Watcher {
    ClauseData* clause;
    ILit blocker;
};

double luby(double y, std::uint64_t x) {
    std::uint64_t size = 1;
    int seq = 0;
    while (size < x + 1) {
        ++seq;
        size = 2 * size + 1;
    }
    while (size - 1 != x) {
        size = (size - 1) >> 1;
        --seq;
        x = x % size;
    }
    return std::pow(y, seq);
}

// Max-heap of variables ordered by activity.
class VarHeap {
public:
    explicit VarHeap(const std::vector<double>& activity) : activity_(activity) {}

    bool contains(std::uint32_t v) const { return v < index_.size() && index_[v] >= 0; }
    bool empty() const { return heap_.empty(); }

    void grow(std::uint32_t nvars) {
        if (index_.size() < nvars) index_.resize(nvars, -1);
    }

    void insert(std::uint32_t v) {
        grow(v + 1);
        if (contains(v)) return;
        index_[v] = static_cast<int>(heap_.size());
        heap_.push_back(v);
        sift_up(heap_.size() - 1);
    }

    void increased(std::uint32_t v) {
        if (contains(v)) sift_up(static_cast<std::size_t>(index_[v]));
    }

    std::uint32_t pop() {
        std::uint32_t top = heap_.front();
        heap_.front() = heap_.back();
        index_[heap_.front()] = 0;
        heap_.pop_back();
        index_[top] = -1;
        if (!heap_.empty()) sift_down(0);
        return top;
    }

private:
    bool above(std::uint32_t a, std::uint32_t b) const {
        // Ties broken by lower index for determinism.
        return activity_[a] > activity_[b] || (activity_[a] == activity_[b] && a < b);
    }

    void sift_up(std::size_t i) {
        std::uint32_t v = heap_[i];
        while (i > 0) {
            std::size_t parent = (i - 1) / 2;
            if (!above(v, heap_[parent])) break;
            heap_[i] = heap_[parent];
            index_[heap_[i]] = static_cast<int>(i);
            i = parent;
        }
        heap_[i] = v;
        index_[v] = static_cast<int>(i);
    }

    void sift_down(std::size_t i) {
        std::uint32_t v = heap_[i];
        for (;;) {
            std::size_t child = 2 * i + 1;
            if (child >= heap_.size()) break;
            if (child + 1 < heap_.size() && above(heap_[child + 1], heap_[child])) ++child;
            if (!above(heap_[child], v)) break;
            heap_[i] = heap_[child];
            index_[heap_[i]] = static_cast<int>(i);
            i = child;
        }
        heap_[i] = v;
        index_[v] = static_cast<int>(i);
    }

    const std::vector<double>& activity_;
    std::vector<std::uint32_t> heap_;
    std::vector<int> index_;
};

}  // namespace

struct Solver::Impl {
    explicit Impl(Config cfg) : config(cfg), max_learnts(cfg.learnt_limit), heap(activity), rng(cfg.seed) {}

    Config config;
    Stats stats;
    bool ok = true;

    std::vector<std::unique_ptr<ClauseData>> clauses;
    std::vector<std::unique_ptr<ClauseData>> learnts;
    std::vector<Clause> problem;

    std::vector<std::vector<Watcher>> watches;  // indexed by literal that becomes true
    std::vector<LBool> assigns;
    std::vector<int> level;
    std::vector<ClauseData*> reason;
    std::vector<bool> phase;
    std::vector<char> seen;
    std::vector<double> activity;
    double var_inc = 1.0;
    std::size_t max_learnts = 0;
    double cla_inc = 1.0;
    VarHeap heap;
    std::mt19937_64 rng;

    std::vector<ILit> trail;
    std::vector<std::size_t> trail_lim;
    std::size_t qhead = 0;

    std::vector<ILit> assumptions;
    std::vector<ILit> conflict;  // negated failed assumptions

    std::uint32_t nvars() const { return static_cast<std::uint32_t>(assigns.size()); }
    int decision_level() const { return static_cast<int>(trail_lim.size()); }

    LBool value(ILit l) const {
        LBool v = assigns[var_index(l)];
        return sign_of(l) ? static_cast<LBool>(-v) : v;
    }

    int new_var() {
        std::uint32_t v = nvars();
        assigns.push_back(kUndef);
        level.push_back(0);
        reason.push_back(nullptr);
        phase.push_back(false);
        seen.push_back(0);
        activity.push_back(0.0);
        watches.emplace_back();
        watches.emplace_back();
        heap.insert(v);
        return static_cast<int>(v) + 1;
    }

    void enqueue(ILit l, ClauseData* from) {
        auto v = var_index(l);
        assigns[v] = sign_of(l) ? kFalse : kTrue;
        level[v] = decision_level();
        reason[v] = from;
        trail.push_back(l);
    }

    void attach(ClauseData* c) {
        watches[neg(c->lits[0])].push_back({c, c->lits[1]});
        watches[neg(c->lits[1])].push_back({c, c->lits[0]});
    }

    void cancel_until(int target) {
        if (decision_level() <= target) return;
        for (std::size_t i = trail.size(); i-- > trail_lim[static_cast<std::size_t>(target)];) {
            auto v = var_index(trail[i]);
            phase[v] = !sign_of(trail[i]);
            assigns[v] = kUndef;
            reason[v] = nullptr;
            heap.insert(v);
        }
        trail.resize(trail_lim[static_cast<std::size_t>(target)]);
        trail_lim.resize(static_cast<std::size_t>(target));
        qhead = trail.size();
    }

    ClauseData* propagate() {
        ClauseData* confl = nullptr;
        while (qhead < trail.size()) {
            ILit p = trail[qhead++];
            ILit false_lit = neg(p);
            auto& ws = watches[p];
            std::size_t i = 0;
            std::size_t j = 0;
            ++stats.propagations;
            while (i < ws.size()) {
                Watcher w = ws[i];
                if (value(w.blocker) == kTrue) {
                    ws[j++] = ws[i++];
                    continue;
                }
                ClauseData& c = *w.clause;
                ++i;
                if (c.deleted) continue;
                if (c.lits[0] == false_lit) std::swap(c.lits[0], c.lits[1]);
                ILit first = c.lits[0];
                Watcher kept{&c, first};
                if (first != w.blocker && value(first) == kTrue) {
                    ws[j++] = kept;
                    continue;
                }
                bool moved = false;
                for (std::size_t k = 2; k < c.lits.size(); ++k) {
                    if (value(c.lits[k]) != kFalse) {
                        std::swap(c.lits[1], c.lits[k]);
                        watches[neg(c.lits[1])].push_back(kept);
                        moved = true;
                        break;
                    }
                }
                if (moved) continue;
                ws[j++] = kept;
                if (value(first) == kFalse) {
                    confl = &c;
                    qhead = trail.size();
                    while (i < ws.size()) ws[j++] = ws[i++];
                } else {
                    enqueue(first, &c);
                }
            }
            ws.resize(j);
            if (confl) break;
        }
        return confl;
    }

    void bump_var(std::uint32_t v) {
        activity[v] += var_inc;
        if (activity[v] > 1e100) {
            for (auto& a : activity) a *= 1e-100;
            var_inc *= 1e-100;
        }
        heap.increased(v);
    }

    void bump_clause(ClauseData& c) {
        c.activity += cla_inc;
        if (c.activity > 1e20) {
            for (auto& l : learnts) l->activity *= 1e-20;
            cla_inc *= 1e-20;
        }
    }

    void analyze(ClauseData* confl, std::vector<ILit>& out_learnt, int& out_btlevel) {
        int path_count = 0;
        ILit p = kUndefLit;
        out_learnt.clear();
        out_learnt.push_back(kUndefLit);
        std::size_t index = trail.size();

        do {
            if (confl->learnt) bump_clause(*confl);
            for (std::size_t k = (p == kUndefLit ? 0 : 1); k < confl->lits.size(); ++k) {
                ILit q = confl->lits[k];
                auto v = var_index(q);
                if (!seen[v] && level[v] > 0) {
                    bump_var(v);
                    seen[v] = 1;
                    if (level[v] >= decision_level()) {
                        ++path_count;
                    } else {
                        out_learnt.push_back(q);
                    }
                }
            }
            while (!seen[var_index(trail[--index])]) {
            }
            p = trail[index];
            confl = reason[var_index(p)];
            seen[var_index(p)] = 0;
            --path_count;
        } while (path_count > 0);
        out_learnt[0] = neg(p);

        if (out_learnt.size() == 1) {
            out_btlevel = 0;
        } else {
            std::size_t max_i = 1;
            for (std::size_t k = 2; k < out_learnt.size(); ++k) {
                if (level[var_index(out_learnt[k])] > level[var_index(out_learnt[max_i])]) max_i = k;
            }
            std::swap(out_learnt[1], out_learnt[max_i]);
            out_btlevel = level[var_index(out_learnt[1])];
        }
        for (ILit l : out_learnt) seen[var_index(l)] = 0;
    }

    // Collects the assumptions responsible for `p` being forced; p is the
    // negation of a failed assumption.
    void analyze_final(ILit p) {
        conflict.clear();
        conflict.push_back(p);
        if (decision_level() == 0) return;
        seen[var_index(p)] = 1;
        for (std::size_t i = trail.size(); i-- > trail_lim[0];) {
            auto v = var_index(trail[i]);
            if (!seen[v]) continue;
            if (reason[v] == nullptr) {
                conflict.push_back(neg(trail[i]));
            } else {
                const auto& lits = reason[v]->lits;
                for (std::size_t k = 1; k < lits.size(); ++k) {
                    if (level[var_index(lits[k])] > 0) seen[var_index(lits[k])] = 1;
                }
            }
            seen[v] = 0;
        }
        seen[var_index(p)] = 0;
    }

    bool locked(const ClauseData& c) const {
        auto v = var_index(c.lits[0]);
        return reason[v] == &c && value(c.lits[0]) == kTrue;
    }

    void reduce_db() {
        std::sort(learnts.begin(), learnts.end(),
                  [](const auto& a, const auto& b) { return a->activity < b->activity; });
        std::size_t half = learnts.size() / 2;
        std::size_t removed = 0;
        for (std::size_t i = 0; i < half; ++i) {
            auto& c = *learnts[i];
            if (c.lits.size() > 2 && !locked(c)) {
                c.deleted = true;
                ++removed;
            }
        }
        if (removed == 0) return;
        for (auto& ws : watches) {
            ws.erase(std::remove_if(ws.begin(), ws.end(), [](const Watcher& w) { return w.clause->deleted; }),
                     ws.end());
        }
        learnts.erase(std::remove_if(learnts.begin(), learnts.end(), [](const auto& c) { return c->deleted; }),
                      learnts.end());
        stats.deleted += removed;
    }

    ILit pick_branch() {
        std::uint32_t next = nvars();
        if (config.random_decision_freq > 0.0 && !heap.empty()) {
            std::uniform_real_distribution<double> coin(0.0, 1.0);
            if (coin(rng) < config.random_decision_freq) {
                std::uniform_int_distribution<std::uint32_t> pick(0, nvars() - 1);
                std::uint32_t v = pick(rng);
                if (assigns[v] == kUndef) next = v;
            }
        }
        while (next == nvars() || assigns[next] != kUndef) {
            if (heap.empty()) return kUndefLit;
            next = heap.pop();
        }
        return static_cast<ILit>(next * 2 + (phase[next] ? 0 : 1));
    }

    // Returns kTrue (model), kFalse (UNSAT under assumptions) or kUndef (restart).
    LBool search(std::uint64_t conflict_budget) {
        std::uint64_t conflicts_here = 0;
        std::vector<ILit> learnt;
        for (;;) {
            ClauseData* confl = propagate();
            if (confl) {
                ++stats.conflicts;
                ++conflicts_here;
                if (decision_level() == 0) {
                    ok = false;
                    return kFalse;
                }
                int bt = 0;
                analyze(confl, learnt, bt);
                cancel_until(bt);
                if (learnt.size() == 1) {
                    enqueue(learnt[0], nullptr);
                } else {
                    auto c = std::make_unique<ClauseData>();
                    c->lits = learnt;
                    c->learnt = true;
                    attach(c.get());
                    bump_clause(*c);
                    enqueue(learnt[0], c.get());
                    learnts.push_back(std::move(c));
                }
                ++stats.learned;
                var_inc /= config.var_decay;
                cla_inc /= config.clause_decay;
                continue;
            }

            if (conflicts_here >= conflict_budget) {
                cancel_until(0);
                return kUndef;
            }
            if (learnts.size() >= max_learnts) {
                reduce_db();
                // Everything left may be locked or binary; grow rather than thrash.
                if (learnts.size() >= max_learnts) max_learnts += max_learnts / 10;
            }

            ILit next = kUndefLit;
            while (static_cast<std::size_t>(decision_level()) < assumptions.size()) {
                ILit a = assumptions[static_cast<std::size_t>(decision_level())];
                if (value(a) == kTrue) {
                    trail_lim.push_back(trail.size());
                } else if (value(a) == kFalse) {
                    analyze_final(neg(a));
                    return kFalse;
                } else {
                    next = a;
                    break;
                }
            }
            if (next == kUndefLit) {
                next = pick_branch();
                if (next == kUndefLit) return kTrue;
                ++stats.decisions;
            }
            trail_lim.push_back(trail.size());
            enqueue(next, nullptr);
        }
    }

    bool add_clause(std::span<const Lit> input) {
        for (Lit l : input) {
            if (l == 0 || var_of(l) > static_cast<int>(nvars())) {
                throw SolverError("bad-literal", "literal " + std::to_string(l) + " references an unallocated variable (" +
                                                     std::to_string(nvars()) + " allocated)");
            }
        }
        Clause normalized(input.begin(), input.end());
        if (!normalize_clause(normalized)) return ok;
        problem.push_back(normalized);
        if (!ok) return false;
        assert(decision_level() == 0);

        std::vector<ILit> lits;
        for (Lit l : normalized) {
            ILit il = to_internal(l);
            LBool v = value(il);
            if (v == kTrue) return true;
            if (v == kFalse) continue;
            lits.push_back(il);
        }
        if (lits.empty()) {
            ok = false;
            return false;
        }
        if (lits.size() == 1) {
            enqueue(lits[0], nullptr);
            if (propagate() != nullptr) ok = false;
            return ok;
        }
        auto c = std::make_unique<ClauseData>();
        c->lits = std::move(lits);
        attach(c.get());
        clauses.push_back(std::move(c));
        return true;
    }

    SolveOutcome solve(std::span<const Lit> assume) {
        ++stats.solves;
        SolveOutcome out;
        assumptions.clear();
        for (Lit l : assume) {
            if (l == 0 || var_of(l) > static_cast<int>(nvars())) {
                throw SolverError("bad-literal", "assumption " + std::to_string(l) + " references an unallocated variable");
            }
            assumptions.push_back(to_internal(l));
        }
        conflict.clear();
        if (!ok) {
            out.stats = stats;
            return out;
        }

        LBool status = kUndef;
        std::uint64_t restarts = 0;
        while (status == kUndef) {
            auto budget = static_cast<std::uint64_t>(luby(2.0, restarts) * static_cast<double>(config.restart_base));
            status = search(budget);
            if (status == kUndef) ++stats.restarts;
            ++restarts;
        }

        if (status == kTrue) {
            out.verdict = Verdict::sat;
            out.model.assign(nvars() + 1, false);
            for (std::uint32_t v = 0; v < nvars(); ++v) out.model[v + 1] = assigns[v] == kTrue;
        } else {
            out.verdict = Verdict::unsat;
            for (ILit l : conflict) out.failed_assumptions.push_back(to_external(neg(l)));
        }
        cancel_until(0);
        out.stats = stats;
        return out;
    }
};

Solver::Solver(Config config) : impl_(std::make_unique<Impl>(config)) {}
Solver::~Solver() = default;
Solver::Solver(Solver&&) noexcept = default;
Solver& Solver::operator=(Solver&&) noexcept = default;

int Solver::new_var() { return impl_->new_var(); }

void Solver::reserve_vars(int n) {
    while (num_vars() < n) impl_->new_var();
}

int Solver::num_vars() const { return static_cast<int>(impl_->nvars()); }

bool Solver::add_clause(std::span<const Lit> clause) { return impl_->add_clause(clause); }

void Solver::add_formula(const CnfFormula& formula) {
    reserve_vars(formula.num_vars);
    for (const auto& c : formula.clauses) impl_->add_clause(c);
}

SolveOutcome Solver::solve(std::span<const Lit> assumptions) { return impl_->solve(assumptions); }

bool Solver::okay() const { return impl_->ok; }
const Stats& Solver::stats() const { return impl_->stats; }
const Config& Solver::config() const { return impl_->config; }
const std::vector<Clause>& Solver::problem_clauses() const { return impl_->problem; }

std::vector<Clause> Solver::learned_clauses() const {
    std::vector<Clause> out;
    for (const auto& c : impl_->learnts) {
        Clause ext;
        for (ILit l : c->lits) ext.push_back(to_external(l));
        out.push_back(std::move(ext));
    }
    return out;
}

bool Solver::watches_consistent() const {
    auto watched_by = [&](const ClauseData* c, ILit l) {
        const auto& ws = impl_->watches[neg(l)];
        return std::any_of(ws.begin(), ws.end(), [&](const Watcher& w) { return w.clause == c; });
    };
    auto check = [&](const auto& list) {
        for (const auto& c : list) {
            if (c->deleted) continue;
            if (c->lits.size() < 2 || c->lits[0] == c->lits[1]) return false;
            if (!watched_by(c.get(), c->lits[0]) || !watched_by(c.get(), c->lits[1])) return false;
        }
        return true;
    };
    return check(impl_->clauses) && check(impl_->learnts);
}

std::vector<std::vector<Lit>> enumerate_models(Solver& solver, std::span<const int> projection,
                                               std::size_t limit, std::span<const Lit> assumptions,
                                               std::optional<Lit> guard, const ModelCallback& on_model) {
    std::vector<std::vector<Lit>> found;
    while (found.size() < limit) {
        auto outcome = solver.solve(assumptions);
        if (!outcome.is_sat()) break;
        if (on_model) on_model(outcome);
        std::vector<Lit> projected;
        projected.reserve(projection.size());
        for (int v : projection) projected.push_back(outcome.model.at(static_cast<std::size_t>(v)) ? v : -v);
        found.push_back(projected);
        if (projection.empty()) break;
        Clause block;
        block.reserve(projected.size() + 1);
        for (Lit l : projected) block.push_back(-l);
        if (guard) block.push_back(-*guard);
        solver.add_clause(block);
    }
    return found;
}

// ---------------------------------------------------------------------------

namespace {

struct Dpll {
    const std::vector<Clause>& clauses;
    std::vector<LBool> assign;  // 1-based

    LBool lit_value(Lit l) const {
        LBool v = assign[static_cast<std::size_t>(var_of(l))];
        return l > 0 ? v : static_cast<LBool>(-v);
    }

    // Returns false on conflict; records assigned variables in `trail`.
    bool unit_propagate(std::vector<int>& trail) {
        bool changed = true;
        while (changed) {
            changed = false;
            for (const auto& c : clauses) {
                int unassigned = 0;
                Lit last = 0;
                bool sat = false;
                for (Lit l : c) {
                    LBool v = lit_value(l);
                    if (v == kTrue) {
                        sat = true;
                        break;
                    }
                    if (v == kUndef) {
                        ++unassigned;
                        last = l;
                    }
                }
                if (sat) continue;
                if (unassigned == 0) return false;
                if (unassigned == 1) {
                    assign[static_cast<std::size_t>(var_of(last))] = last > 0 ? kTrue : kFalse;
                    trail.push_back(var_of(last));
                    changed = true;
                }
            }
        }
        return true;
    }

    bool run() {
        std::vector<int> trail;
        if (!unit_propagate(trail)) {
            for (int v : trail) assign[static_cast<std::size_t>(v)] = kUndef;
            return false;
        }
        std::size_t pick = 0;
        for (std::size_t v = 1; v < assign.size(); ++v) {
            if (assign[v] == kUndef) {
                pick = v;
                break;
            }
        }
        if (pick == 0) return true;
        for (LBool choice : {kTrue, kFalse}) {
            assign[pick] = choice;
            if (run()) return true;
        }
        assign[pick] = kUndef;
        for (int v : trail) assign[static_cast<std::size_t>(v)] = kUndef;
        return false;
    }
};

}  // namespace

OracleResult dpll_oracle(const std::vector<Clause>& clauses, int num_vars) {
    if (num_vars > 30) {
        throw SolverError("variable-budget", "dpll_oracle handles at most 30 variables, got " + std::to_string(num_vars));
    }
    for (const auto& c : clauses) {
        for (Lit l : c) {
            if (l == 0 || var_of(l) > num_vars) throw SolverError("bad-literal", "literal out of range");
        }
    }
    Dpll d{clauses, std::vector<LBool>(static_cast<std::size_t>(num_vars) + 1, kUndef)};
    OracleResult out;
    if (d.run()) {
        out.verdict = Verdict::sat;
        out.model.assign(static_cast<std::size_t>(num_vars) + 1, false);
        for (std::size_t v = 1; v < d.assign.size(); ++v) out.model[v] = d.assign[v] == kTrue;
    }
    return out;
}

}  // namespace carematch::sat
