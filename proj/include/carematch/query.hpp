#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "carematch/catalog.hpp"

namespace carematch::query {

enum class TokenKind { identifier, integer, and_op, or_op, not_op, ge, le, eq, lparen, rparen };

struct Token {
    TokenKind kind;
    std::string text;
    std::int64_t value = 0;  // integer tokens only
    std::size_t offset = 0;

    bool operator==(const Token&) const = default;
};

enum class Comparison { ge, le, eq };

std::string_view to_string(Comparison op);

struct AtomConstraint {
    std::string attribute;
    Comparison op = Comparison::eq;
    std::int64_t threshold = 1;
    /// Written as a bare attribute name; validation turns it into `= 1`.
    bool bare = false;
    std::size_t offset = 0;

    /// Structural equality; source offsets are ignored.
    bool operator==(const AtomConstraint& o) const {
        return attribute == o.attribute && op == o.op && threshold == o.threshold && bare == o.bare;
    }
};

/// Evaluates one atom against an integer value.
bool holds(const AtomConstraint& atom, std::int64_t value);
std::string to_string(const AtomConstraint& atom);

struct Node;
using Ast = std::shared_ptr<const Node>;

enum class NodeKind { and_node, or_node, not_node, atom, any };

/// Immutable query tree. And/Or carry `left` and `right`, Not carries `left`
/// only. `any` is the ANY(attr) marker for a deliberately unconstrained
/// attribute: it is always true and compiles to no constraint.
struct Node {
    NodeKind kind;
    Ast left;
    Ast right;
    AtomConstraint atom;  // atom and any nodes
};

Ast make_and(Ast left, Ast right);
Ast make_or(Ast left, Ast right);
Ast make_not(Ast child);
Ast make_atom(AtomConstraint atom);
Ast make_any(std::string attribute);

bool equal(const Ast& a, const Ast& b);
std::size_t node_count(const Ast& ast);

/// Splits `text` into tokens. Throws QueryError("illegal-character") with
/// the byte offset of the first character that starts no token.
std::vector<Token> tokenize(std::string_view text);

/// Precedence NOT > AND > OR, left-associative, parentheses override.
/// `source_length` positions the "unexpected end of input" error.
Ast parse(const std::vector<Token>& tokens, std::size_t source_length = 0);
Ast parse_query(std::string_view text);

struct RequirementGroups {
    std::vector<AtomConstraint> mandatory;
    std::vector<AtomConstraint> optional;
    std::vector<AtomConstraint> except;
};

/// AND(mandatory) & OR(optional) & AND(!except); empty groups add nothing.
Ast compose_groups(const RequirementGroups& groups);

/// Resolves attributes against the schema set, range-checks thresholds and
/// desugars bare boolean atoms to `= 1`. Returns a new tree.
Ast validate(const Ast& ast, const std::vector<AttributeSchema>& schemas);

/// Canonical text that reparses to a structurally identical tree.
std::string to_string(const Ast& ast);

/// Flattens the chain of And nodes at the root into its conjuncts.
std::vector<Ast> top_level_conjuncts(const Ast& ast);
/// Rebuilds a left-folded conjunction; empty input yields nullptr.
Ast conjoin(const std::vector<Ast>& conjuncts);

/// Distinct attribute names mentioned by atoms (and ANY markers), in order of
/// first appearance.
std::vector<std::string> attributes_of(const Ast& ast);
std::vector<AtomConstraint> atoms_of(const Ast& ast);

/// {"op":"and"|"or"|"not"|"atom"|"any", ...}
nlohmann::json to_json(const Ast& ast);
Ast ast_from_json(const nlohmann::json& doc);

}  // namespace carematch::query
