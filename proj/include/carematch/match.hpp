#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "carematch/catalog.hpp"
#include "carematch/query.hpp"
#include "carematch/solver.hpp"

namespace carematch::match {

struct ProviderMatch {
    std::string provider_id;
    std::string display_name;
    ProviderKind kind = ProviderKind::hospital;
    /// Attribute values decoded from the solver model.
    std::map<std::string, std::int64_t> assignment;

    bool operator==(const ProviderMatch&) const = default;
};

struct RelaxationSuggestion {
    /// 0-based indices into MatchReport::conjuncts.
    std::vector<std::size_t> dropped;
    std::vector<std::string> dropped_text;
    std::vector<std::string> resulting_matches;

    bool operator==(const RelaxationSuggestion&) const = default;
};

struct Timings {
    double translation_ms = 0.0;
    double solve_ms = 0.0;
    double relax_ms = 0.0;
};

struct MatchReport {
    std::string query_text;
    std::uint64_t snapshot_version = 0;
    bool empty_catalog = false;
    std::vector<std::string> conjuncts;
    std::vector<query::AtomConstraint> constraints;
    std::vector<std::string> queried_attributes;
    std::vector<ProviderMatch> matches;  // ordered by provider_id
    std::vector<RelaxationSuggestion> relaxations;
    Timings timings;
    sat::Stats stats;
    int num_vars = 0;
    std::size_t num_clauses = 0;
};

struct MatchOptions {
    bool relax_on_empty = true;
    std::size_t max_suggestions = 5;
    /// Relaxation search stops after drop sets of this size...
    std::size_t max_cardinality = 3;
    /// ...or after this many subset tests, whichever comes first.
    std::size_t max_solver_calls = 50;
    sat::Config solver;
};

/// Direct recursive evaluation of a validated query on one record. This is
/// the reference the SAT pipeline is tested against.
bool evaluate_direct(const query::Ast& ast, const ProviderRecord& record);

/// Encodes the catalog model and the query over one variable table, asserts
/// the query root and enumerates all satisfying providers. When nothing
/// matches (and the catalog is nonempty) relaxations are attached.
MatchReport match_query(const query::Ast& validated, const CatalogSnapshot& snapshot,
                        const MatchOptions& options = {}, std::string query_text = {});

/// Minimal sets of top-level conjuncts whose removal yields at least one
/// match, searched by increasing size under solver assumptions.
std::vector<RelaxationSuggestion> relax(const query::Ast& validated, const CatalogSnapshot& snapshot,
                                        const MatchOptions& options = {});

nlohmann::json to_json(const MatchReport& report);
MatchReport report_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const sat::Stats& stats);

}  // namespace carematch::match
