#include "carematch/match.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "carematch/encoder.hpp"
#include "carematch/error.hpp"

namespace carematch::match {

using nlohmann::json;
using query::NodeKind;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void append(CnfFormula& into, const CnfFormula& from) {
    into.clauses.insert(into.clauses.end(), from.clauses.begin(), from.clauses.end());
    into.num_vars = std::max(into.num_vars, from.num_vars);
}

std::vector<int> selector_vars(const encode::VarTable& table) {
    std::vector<int> out;
    for (const auto& entry : table.selector_order()) out.push_back(entry.second);
    return out;
}

// Maps a projected selector model back to its provider index.
std::size_t provider_of(const std::vector<Lit>& projected) {
    for (std::size_t i = 0; i < projected.size(); ++i) {
        if (projected[i] > 0) return i;
    }
    throw std::logic_error("projected model selects no provider");
}

}  // namespace

bool evaluate_direct(const query::Ast& ast, const ProviderRecord& record) {
    switch (ast->kind) {
        case NodeKind::and_node: return evaluate_direct(ast->left, record) && evaluate_direct(ast->right, record);
        case NodeKind::or_node: return evaluate_direct(ast->left, record) || evaluate_direct(ast->right, record);
        case NodeKind::not_node: return !evaluate_direct(ast->left, record);
        case NodeKind::any: return true;
        case NodeKind::atom: {
            auto it = record.values.find(ast->atom.attribute);
            if (it == record.values.end()) return false;
            return query::holds(ast->atom, it->second);
        }
    }
    return false;
}

MatchReport match_query(const query::Ast& validated, const CatalogSnapshot& snapshot, const MatchOptions& options,
                        std::string query_text) {
    MatchReport report;
    report.query_text = query_text.empty() ? query::to_string(validated) : std::move(query_text);
    report.snapshot_version = snapshot.version;
    for (const auto& c : query::top_level_conjuncts(validated)) report.conjuncts.push_back(query::to_string(c));
    report.constraints = query::atoms_of(validated);
    report.queried_attributes = query::attributes_of(validated);

    auto t0 = Clock::now();
    auto model = encode::encode_catalog_model(snapshot);
    auto q = encode::tseitin_cnf(validated, snapshot.schemas, model.table);
    CnfFormula formula = std::move(model.formula);
    append(formula, encode::reduce_to_3sat(q.formula, &model.table));
    formula.clauses.push_back({q.root});
    formula.num_vars = model.table.num_vars();
    report.timings.translation_ms = ms_since(t0);
    report.num_vars = formula.num_vars;
    report.num_clauses = formula.clauses.size();
    report.empty_catalog = model.empty_catalog;

    auto t1 = Clock::now();
    sat::Solver solver(options.solver);
    solver.add_formula(formula);
    auto selectors = selector_vars(model.table);
    std::vector<ProviderMatch> matches;
    sat::enumerate_models(solver, selectors, std::max<std::size_t>(selectors.size(), 1), {}, std::nullopt,
                          [&](const sat::SolveOutcome& outcome) {
                              std::vector<Lit> projected;
                              for (int v : selectors) projected.push_back(outcome.model[static_cast<std::size_t>(v)] ? v : -v);
                              const auto& record = snapshot.providers[provider_of(projected)];
                              ProviderMatch m{record.provider_id, record.display_name, record.kind, {}};
                              for (const auto& schema : snapshot.schemas) {
                                  m.assignment[schema.name] = encode::decode_value(
                                      outcome.model, *model.table.bits(schema.name), schema.lo);
                              }
                              matches.push_back(std::move(m));
                          });
    report.timings.solve_ms = ms_since(t1);
    report.stats = solver.stats();

    std::sort(matches.begin(), matches.end(),
              [](const ProviderMatch& a, const ProviderMatch& b) { return a.provider_id < b.provider_id; });
    report.matches = std::move(matches);

    if (report.matches.empty() && !report.empty_catalog && options.relax_on_empty) {
        auto t2 = Clock::now();
        report.relaxations = relax(validated, snapshot, options);
        report.timings.relax_ms = ms_since(t2);
    }
    return report;
}

std::vector<RelaxationSuggestion> relax(const query::Ast& validated, const CatalogSnapshot& snapshot,
                                        const MatchOptions& options) {
    std::vector<RelaxationSuggestion> out;
    if (snapshot.providers.empty()) return out;

    const auto conjuncts = query::top_level_conjuncts(validated);
    const std::size_t k = conjuncts.size();

    auto model = encode::encode_catalog_model(snapshot);
    CnfFormula formula = std::move(model.formula);
    // conjunct_j | drop_j: assuming -drop_j enforces conjunct j.
    std::vector<int> drop(k);
    for (std::size_t j = 0; j < k; ++j) {
        auto c = encode::tseitin_cnf(conjuncts[j], snapshot.schemas, model.table);
        append(formula, encode::reduce_to_3sat(c.formula, &model.table));
        drop[j] = model.table.new_aux();
        formula.clauses.push_back({c.root, drop[j]});
    }
    formula.num_vars = model.table.num_vars();

    sat::Solver solver(options.solver);
    solver.add_formula(formula);
    const auto selectors = selector_vars(model.table);

    auto assumptions_for = [&](const std::vector<std::size_t>& dropped) {
        std::vector<Lit> a;
        for (std::size_t j = 0; j < k; ++j) {
            if (!std::binary_search(dropped.begin(), dropped.end(), j)) a.push_back(-drop[j]);
        }
        return a;
    };

    std::vector<std::vector<std::size_t>> cores;  // conjunct sets proven jointly unsatisfiable
    std::vector<std::vector<std::size_t>> found;
    std::size_t calls = 0;

    auto record_core = [&](const sat::SolveOutcome& outcome) {
        std::vector<std::size_t> core;
        for (Lit l : outcome.failed_assumptions) {
            auto it = std::find(drop.begin(), drop.end(), -l);
            if (it != drop.end()) core.push_back(static_cast<std::size_t>(it - drop.begin()));
        }
        std::sort(core.begin(), core.end());
        cores.push_back(std::move(core));
    };

    // Nothing to relax if the full query already matches.
    if (auto full = solver.solve(assumptions_for({})); full.is_sat()) {
        return out;
    } else {
        record_core(full);
    }

    auto superset_of_found = [&](const std::vector<std::size_t>& s) {
        return std::any_of(found.begin(), found.end(), [&](const auto& f) {
            return std::includes(s.begin(), s.end(), f.begin(), f.end());
        });
    };
    auto misses_a_core = [&](const std::vector<std::size_t>& s) {
        return std::any_of(cores.begin(), cores.end(), [&](const auto& core) {
            return std::none_of(core.begin(), core.end(),
                                [&](std::size_t j) { return std::binary_search(s.begin(), s.end(), j); });
        });
    };

    const std::size_t max_size = std::min(options.max_cardinality, k);
    for (std::size_t size = 1; size <= max_size; ++size) {
        // Lexicographic enumeration of `size`-subsets of {0..k-1}.
        std::vector<std::size_t> subset(size);
        std::iota(subset.begin(), subset.end(), 0);
        for (;;) {
            if (found.size() >= options.max_suggestions || calls >= options.max_solver_calls) return out;
            if (!superset_of_found(subset) && !misses_a_core(subset)) {
                auto assumptions = assumptions_for(subset);
                ++calls;
                auto outcome = solver.solve(assumptions);
                if (outcome.is_sat()) {
                    found.push_back(subset);
                    int guard = solver.new_var();
                    assumptions.push_back(guard);
                    auto models = sat::enumerate_models(solver, selectors, selectors.size(), assumptions, guard);
                    solver.add_clause({-guard});

                    RelaxationSuggestion s;
                    s.dropped = subset;
                    for (auto j : subset) s.dropped_text.push_back(query::to_string(conjuncts[j]));
                    for (const auto& m : models) s.resulting_matches.push_back(snapshot.providers[provider_of(m)].provider_id);
                    std::sort(s.resulting_matches.begin(), s.resulting_matches.end());
                    out.push_back(std::move(s));
                } else {
                    record_core(outcome);
                }
            }
            // Advance to the next combination.
            std::size_t i = size;
            while (i > 0 && subset[i - 1] == k - size + (i - 1)) --i;
            if (i == 0) break;
            ++subset[i - 1];
            for (std::size_t j = i; j < size; ++j) subset[j] = subset[j - 1] + 1;
        }
    }
    return out;
}

json to_json(const sat::Stats& stats) {
    return json{{"solves", stats.solves},       {"decisions", stats.decisions}, {"propagations", stats.propagations},
                {"conflicts", stats.conflicts}, {"restarts", stats.restarts},   {"learned", stats.learned},
                {"deleted", stats.deleted}};
}

json to_json(const MatchReport& r) {
    json constraints = json::array();
    for (const auto& c : r.constraints) {
        constraints.push_back(
            json{{"attribute", c.attribute}, {"cmp", query::to_string(c.op)}, {"threshold", c.threshold}});
    }
    json matches = json::array();
    for (const auto& m : r.matches) {
        json assignment = json::object();
        for (const auto& [k, v] : m.assignment) assignment[k] = v;
        matches.push_back(json{{"provider_id", m.provider_id},
                               {"display_name", m.display_name},
                               {"kind", to_string(m.kind)},
                               {"assignment", assignment}});
    }
    json relaxations = json::array();
    for (const auto& s : r.relaxations) {
        relaxations.push_back(json{{"dropped", s.dropped},
                                   {"dropped_text", s.dropped_text},
                                   {"resulting_matches", s.resulting_matches}});
    }
    return json{{"query", r.query_text},
                {"snapshot_version", r.snapshot_version},
                {"empty_catalog", r.empty_catalog},
                {"conjuncts", r.conjuncts},
                {"constraints", constraints},
                {"queried_attributes", r.queried_attributes},
                {"matches", matches},
                {"relaxations", relaxations},
                {"timings",
                 json{{"translation_ms", r.timings.translation_ms},
                      {"solve_ms", r.timings.solve_ms},
                      {"relax_ms", r.timings.relax_ms}}},
                {"stats", to_json(r.stats)},
                {"formula", json{{"num_vars", r.num_vars}, {"num_clauses", r.num_clauses}}}};
}

MatchReport report_from_json(const json& doc) {
    MatchReport r;
    r.query_text = doc.at("query").get<std::string>();
    r.snapshot_version = doc.at("snapshot_version").get<std::uint64_t>();
    r.empty_catalog = doc.value("empty_catalog", false);
    r.conjuncts = doc.value("conjuncts", std::vector<std::string>{});
    for (const auto& c : doc.value("constraints", json::array())) {
        query::AtomConstraint a;
        a.attribute = c.at("attribute").get<std::string>();
        auto cmp = c.at("cmp").get<std::string>();
        a.op = cmp == ">=" ? query::Comparison::ge : cmp == "<=" ? query::Comparison::le : query::Comparison::eq;
        a.threshold = c.at("threshold").get<std::int64_t>();
        r.constraints.push_back(a);
    }
    r.queried_attributes = doc.value("queried_attributes", std::vector<std::string>{});
    for (const auto& m : doc.at("matches")) {
        ProviderMatch pm;
        pm.provider_id = m.at("provider_id").get<std::string>();
        pm.display_name = m.value("display_name", pm.provider_id);
        pm.kind = parse_provider_kind(m.value("kind", std::string("hospital")));
        for (const auto& [k, v] : m.at("assignment").items()) pm.assignment[k] = v.get<std::int64_t>();
        r.matches.push_back(std::move(pm));
    }
    for (const auto& s : doc.value("relaxations", json::array())) {
        RelaxationSuggestion rs;
        rs.dropped = s.at("dropped").get<std::vector<std::size_t>>();
        rs.dropped_text = s.at("dropped_text").get<std::vector<std::string>>();
        rs.resulting_matches = s.at("resulting_matches").get<std::vector<std::string>>();
        r.relaxations.push_back(std::move(rs));
    }
    if (doc.contains("timings")) {
        const auto& t = doc["timings"];
        r.timings = {t.value("translation_ms", 0.0), t.value("solve_ms", 0.0), t.value("relax_ms", 0.0)};
    }
    if (doc.contains("stats")) {
        const auto& s = doc["stats"];
        r.stats.solves = s.value("solves", std::uint64_t{0});
        r.stats.decisions = s.value("decisions", std::uint64_t{0});
        r.stats.propagations = s.value("propagations", std::uint64_t{0});
        r.stats.conflicts = s.value("conflicts", std::uint64_t{0});
        r.stats.restarts = s.value("restarts", std::uint64_t{0});
        r.stats.learned = s.value("learned", std::uint64_t{0});
        r.stats.deleted = s.value("deleted", std::uint64_t{0});
    }
    if (doc.contains("formula")) {
        r.num_vars = doc["formula"].value("num_vars", 0);
        r.num_clauses = doc["formula"].value("num_clauses", std::size_t{0});
    }
    return r;
}

}  // namespace carematch::match
