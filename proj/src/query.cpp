#include "carematch/query.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include <nlohmann/json.hpp>

#include "carematch/error.hpp"

namespace carematch::query {

using nlohmann::json;

std::string_view to_string(Comparison op) {
    switch (op) {
        case Comparison::ge: return ">=";
        case Comparison::le: return "<=";
        case Comparison::eq: return "=";
    }
    return "=";
}

bool holds(const AtomConstraint& atom, std::int64_t value) {
    switch (atom.op) {
        case Comparison::ge: return value >= atom.threshold;
        case Comparison::le: return value <= atom.threshold;
        case Comparison::eq: return value == atom.threshold;
    }
    return false;
}

std::string to_string(const AtomConstraint& atom) {
    if (atom.bare) return atom.attribute;
    return atom.attribute + " " + std::string(to_string(atom.op)) + " " +
           std::to_string(atom.threshold);
}

Ast make_and(Ast left, Ast right) {
    return std::make_shared<const Node>(Node{NodeKind::and_node, std::move(left), std::move(right), {}});
}

Ast make_or(Ast left, Ast right) {
    return std::make_shared<const Node>(Node{NodeKind::or_node, std::move(left), std::move(right), {}});
}

Ast make_not(Ast child) {
    return std::make_shared<const Node>(Node{NodeKind::not_node, std::move(child), nullptr, {}});
}

Ast make_atom(AtomConstraint atom) {
    return std::make_shared<const Node>(Node{NodeKind::atom, nullptr, nullptr, std::move(atom)});
}

Ast make_any(std::string attribute) {
    AtomConstraint marker;
    marker.attribute = std::move(attribute);
    return std::make_shared<const Node>(Node{NodeKind::any, nullptr, nullptr, std::move(marker)});
}

bool equal(const Ast& a, const Ast& b) {
    if (!a || !b) return !a && !b;
    if (a->kind != b->kind) return false;
    switch (a->kind) {
        case NodeKind::and_node:
        case NodeKind::or_node: return equal(a->left, b->left) && equal(a->right, b->right);
        case NodeKind::not_node: return equal(a->left, b->left);
        case NodeKind::atom: return a->atom == b->atom;
        case NodeKind::any: return a->atom.attribute == b->atom.attribute;
    }
    return false;
}

std::size_t node_count(const Ast& ast) {
    if (!ast) return 0;
    return 1 + node_count(ast->left) + node_count(ast->right);
}

// ---------------------------------------------------------------------------
// Lexer

std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> out;
    std::size_t i = 0;
    auto is_ident_start = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; };
    auto is_ident_char = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
    auto is_digit = [](char c) { return c >= '0' && c <= '9'; };

    while (i < text.size()) {
        char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        std::size_t start = i;
        if (is_ident_start(c)) {
            while (i < text.size() && is_ident_char(text[i])) ++i;
            out.push_back({TokenKind::identifier, std::string(text.substr(start, i - start)), 0, start});
            continue;
        }
        if (is_digit(c) || (c == '-' && i + 1 < text.size() && is_digit(text[i + 1]))) {
            ++i;
            while (i < text.size() && is_digit(text[i])) ++i;
            auto lexeme = text.substr(start, i - start);
            std::int64_t value = 0;
            auto [ptr, ec] = std::from_chars(lexeme.data(), lexeme.data() + lexeme.size(), value);
            if (ec != std::errc()) {
                throw QueryError("integer-overflow", "integer literal out of range at offset " +
                                                         std::to_string(start), start);
            }
            out.push_back({TokenKind::integer, std::string(lexeme), value, start});
            continue;
        }
        auto two = text.substr(i, 2);
        if (two == ">=" || two == "<=") {
            out.push_back({two == ">=" ? TokenKind::ge : TokenKind::le, std::string(two), 0, start});
            i += 2;
            continue;
        }
        TokenKind kind;
        switch (c) {
            case '&': kind = TokenKind::and_op; break;
            case '|': kind = TokenKind::or_op; break;
            case '!': kind = TokenKind::not_op; break;
            case '=': kind = TokenKind::eq; break;
            case '(': kind = TokenKind::lparen; break;
            case ')': kind = TokenKind::rparen; break;
            default:
                throw QueryError("illegal-character",
                                 "illegal character '" + std::string(1, c) + "' at offset " +
                                     std::to_string(start),
                                 start);
        }
        out.push_back({kind, std::string(1, c), 0, start});
        ++i;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Parser
//
//   or      := and ('|' and)*
//   and     := unary ('&' unary)*
//   unary   := '!' unary | primary
//   primary := '(' or ')' | 'ANY' '(' ident ')' | ident [cmp integer]

namespace {

class Parser {
public:
    Parser(const std::vector<Token>& tokens, std::size_t source_length)
        : tokens_(tokens), end_offset_(source_length) {
        if (!tokens_.empty()) {
            const auto& last = tokens_.back();
            end_offset_ = std::max(end_offset_, last.offset + last.text.size());
        }
    }

    Ast parse_all() {
        if (tokens_.empty()) throw QueryError("empty-query", "query is empty", 0);
        Ast ast = parse_or();
        if (pos_ < tokens_.size()) {
            const auto& t = tokens_[pos_];
            if (t.kind == TokenKind::rparen) {
                throw QueryError("unbalanced-parentheses",
                                 "unmatched ')' at offset " + std::to_string(t.offset), t.offset);
            }
            throw QueryError("trailing-input",
                             "unexpected '" + t.text + "' at offset " + std::to_string(t.offset) +
                                 " after complete expression",
                             t.offset);
        }
        return ast;
    }

private:
    const Token* peek() const { return pos_ < tokens_.size() ? &tokens_[pos_] : nullptr; }

    bool accept(TokenKind kind) {
        if (const auto* t = peek(); t && t->kind == kind) {
            ++pos_;
            return true;
        }
        return false;
    }

    [[noreturn]] void unexpected(std::string_view expected) const {
        if (const auto* t = peek()) {
            throw QueryError("unexpected-token",
                             "unexpected '" + t->text + "' at offset " + std::to_string(t->offset) +
                                 ", expected " + std::string(expected),
                             t->offset);
        }
        throw QueryError("unexpected-end",
                         "unexpected end of input, expected " + std::string(expected), end_offset_);
    }

    Ast parse_or() {
        Ast left = parse_and();
        while (accept(TokenKind::or_op)) left = make_or(left, parse_and());
        return left;
    }

    Ast parse_and() {
        Ast left = parse_unary();
        while (accept(TokenKind::and_op)) left = make_and(left, parse_unary());
        return left;
    }

    Ast parse_unary() {
        if (accept(TokenKind::not_op)) return make_not(parse_unary());
        return parse_primary();
    }

    Ast parse_primary() {
        const Token* t = peek();
        if (!t) unexpected("attribute, '!' or '('");
        if (t->kind == TokenKind::lparen) {
            std::size_t open = t->offset;
            ++pos_;
            Ast inner = parse_or();
            if (!accept(TokenKind::rparen)) {
                if (peek()) unexpected("')'");
                throw QueryError("unbalanced-parentheses",
                                 "'(' at offset " + std::to_string(open) + " is never closed", open);
            }
            return inner;
        }
        if (t->kind != TokenKind::identifier) unexpected("attribute, '!' or '('");
        ++pos_;
        if (t->text == "ANY" && peek() && peek()->kind == TokenKind::lparen) {
            ++pos_;
            const Token* name = peek();
            if (!name || name->kind != TokenKind::identifier) unexpected("attribute name");
            ++pos_;
            if (!accept(TokenKind::rparen)) unexpected("')'");
            return make_any(name->text);
        }

        AtomConstraint atom;
        atom.attribute = t->text;
        atom.offset = t->offset;
        const Token* op = peek();
        if (op && (op->kind == TokenKind::ge || op->kind == TokenKind::le || op->kind == TokenKind::eq)) {
            ++pos_;
            atom.op = op->kind == TokenKind::ge   ? Comparison::ge
                      : op->kind == TokenKind::le ? Comparison::le
                                                  : Comparison::eq;
            const Token* value = peek();
            if (!value || value->kind != TokenKind::integer) unexpected("integer");
            ++pos_;
            atom.threshold = value->value;
        } else {
            atom.bare = true;
            atom.op = Comparison::eq;
            atom.threshold = 1;
        }
        return make_atom(std::move(atom));
    }

    const std::vector<Token>& tokens_;
    std::size_t pos_ = 0;
    std::size_t end_offset_;
};

}  // namespace

Ast parse(const std::vector<Token>& tokens, std::size_t source_length) {
    return Parser(tokens, source_length).parse_all();
}

Ast parse_query(std::string_view text) { return parse(tokenize(text), text.size()); }

// ---------------------------------------------------------------------------

Ast conjoin(const std::vector<Ast>& conjuncts) {
    Ast out;
    for (const auto& c : conjuncts) out = out ? make_and(out, c) : c;
    return out;
}

Ast compose_groups(const RequirementGroups& groups) {
    std::vector<Ast> conjuncts;
    for (const auto& m : groups.mandatory) conjuncts.push_back(make_atom(m));
    Ast optional;
    for (const auto& o : groups.optional) optional = optional ? make_or(optional, make_atom(o)) : make_atom(o);
    if (optional) conjuncts.push_back(optional);
    for (const auto& e : groups.except) conjuncts.push_back(make_not(make_atom(e)));
    if (conjuncts.empty()) {
        throw QueryError("empty-groups", "at least one of mandatory, optional, except must be nonempty");
    }
    return conjoin(conjuncts);
}

Ast validate(const Ast& ast, const std::vector<AttributeSchema>& schemas) {
    auto find = [&](const std::string& name, std::size_t offset) -> const AttributeSchema& {
        auto it = std::find_if(schemas.begin(), schemas.end(),
                               [&](const AttributeSchema& s) { return s.name == name; });
        if (it == schemas.end()) {
            throw QueryError("unknown-attribute", "unknown attribute '" + name + "'", offset);
        }
        return *it;
    };
    switch (ast->kind) {
        case NodeKind::and_node: return make_and(validate(ast->left, schemas), validate(ast->right, schemas));
        case NodeKind::or_node: return make_or(validate(ast->left, schemas), validate(ast->right, schemas));
        case NodeKind::not_node: return make_not(validate(ast->left, schemas));
        case NodeKind::any:
            find(ast->atom.attribute, ast->atom.offset);
            return ast;
        case NodeKind::atom: break;
    }
    AtomConstraint atom = ast->atom;
    const auto& schema = find(atom.attribute, atom.offset);
    if (atom.bare) {
        if (schema.kind != AttributeKind::boolean) {
            throw QueryError("bare-integer-attribute",
                             "attribute '" + atom.attribute + "' is an integer range [" +
                                 std::to_string(schema.lo) + "," + std::to_string(schema.hi) +
                                 "]; write a comparison such as '" + atom.attribute + " >= N'",
                             atom.offset);
        }
        atom.bare = false;
        atom.op = Comparison::eq;
        atom.threshold = 1;
    }
    if (schema.kind == AttributeKind::boolean && atom.op != Comparison::eq) {
        throw QueryError("boolean-comparison",
                         "boolean attribute '" + atom.attribute + "' only supports '= 0' or '= 1'",
                         atom.offset);
    }
    if (atom.threshold < schema.lo || atom.threshold > schema.hi) {
        throw QueryError("threshold-out-of-range",
                         "threshold " + std::to_string(atom.threshold) + " for '" + atom.attribute +
                             "' is outside [" + std::to_string(schema.lo) + "," +
                             std::to_string(schema.hi) + "]",
                         atom.offset);
    }
    return make_atom(std::move(atom));
}

// ---------------------------------------------------------------------------
// Printing

namespace {

int precedence(const Ast& ast) {
    switch (ast->kind) {
        case NodeKind::or_node: return 1;
        case NodeKind::and_node: return 2;
        case NodeKind::not_node: return 3;
        default: return 4;
    }
}

std::string print(const Ast& ast) {
    auto wrap = [](const Ast& child, bool parens) {
        auto text = print(child);
        return parens ? "(" + text + ")" : text;
    };
    switch (ast->kind) {
        case NodeKind::atom: return to_string(ast->atom);
        case NodeKind::any: return "ANY(" + ast->atom.attribute + ")";
        case NodeKind::not_node: return "!" + wrap(ast->left, precedence(ast->left) < 3);
        case NodeKind::and_node:
        case NodeKind::or_node: {
            int p = precedence(ast);
            // Left-fold: a right child at the same level needs parentheses to
            // keep its own grouping.
            auto sep = ast->kind == NodeKind::and_node ? " & " : " | ";
            return wrap(ast->left, precedence(ast->left) < p) + sep +
                   wrap(ast->right, precedence(ast->right) <= p);
        }
    }
    return {};
}

void collect_conjuncts(const Ast& ast, std::vector<Ast>& out) {
    if (ast->kind == NodeKind::and_node) {
        collect_conjuncts(ast->left, out);
        collect_conjuncts(ast->right, out);
    } else {
        out.push_back(ast);
    }
}

void collect_atoms(const Ast& ast, std::vector<AtomConstraint>& atoms, std::vector<std::string>& names) {
    if (!ast) return;
    if (ast->kind == NodeKind::atom || ast->kind == NodeKind::any) {
        if (ast->kind == NodeKind::atom) atoms.push_back(ast->atom);
        if (std::find(names.begin(), names.end(), ast->atom.attribute) == names.end()) {
            names.push_back(ast->atom.attribute);
        }
        return;
    }
    collect_atoms(ast->left, atoms, names);
    collect_atoms(ast->right, atoms, names);
}

}  // namespace

std::string to_string(const Ast& ast) { return print(ast); }

std::vector<Ast> top_level_conjuncts(const Ast& ast) {
    std::vector<Ast> out;
    collect_conjuncts(ast, out);
    return out;
}

std::vector<std::string> attributes_of(const Ast& ast) {
    std::vector<AtomConstraint> atoms;
    std::vector<std::string> names;
    collect_atoms(ast, atoms, names);
    return names;
}

std::vector<AtomConstraint> atoms_of(const Ast& ast) {
    std::vector<AtomConstraint> atoms;
    std::vector<std::string> names;
    collect_atoms(ast, atoms, names);
    return atoms;
}

// ---------------------------------------------------------------------------
// JSON

json to_json(const Ast& ast) {
    switch (ast->kind) {
        case NodeKind::and_node: return json{{"op", "and"}, {"left", to_json(ast->left)}, {"right", to_json(ast->right)}};
        case NodeKind::or_node: return json{{"op", "or"}, {"left", to_json(ast->left)}, {"right", to_json(ast->right)}};
        case NodeKind::not_node: return json{{"op", "not"}, {"child", to_json(ast->left)}};
        case NodeKind::any: return json{{"op", "any"}, {"attribute", ast->atom.attribute}};
        case NodeKind::atom: {
            json j{{"op", "atom"}, {"attribute", ast->atom.attribute}};
            if (ast->atom.bare) {
                j["bare"] = true;
            } else {
                j["cmp"] = to_string(ast->atom.op);
                j["threshold"] = ast->atom.threshold;
            }
            return j;
        }
    }
    return {};
}

Ast ast_from_json(const json& doc) {
    if (!doc.is_object() || !doc.contains("op")) throw QueryError("bad-ast-json", "AST node needs \"op\"");
    auto op = doc["op"].get<std::string>();
    if (op == "and") return make_and(ast_from_json(doc.at("left")), ast_from_json(doc.at("right")));
    if (op == "or") return make_or(ast_from_json(doc.at("left")), ast_from_json(doc.at("right")));
    if (op == "not") return make_not(ast_from_json(doc.at("child")));
    if (op == "any") return make_any(doc.at("attribute").get<std::string>());
    if (op == "atom") {
        AtomConstraint atom;
        atom.attribute = doc.at("attribute").get<std::string>();
        if (doc.value("bare", false)) {
            atom.bare = true;
        } else {
            auto cmp = doc.at("cmp").get<std::string>();
            if (cmp == ">=") atom.op = Comparison::ge;
            else if (cmp == "<=") atom.op = Comparison::le;
            else if (cmp == "=") atom.op = Comparison::eq;
            else throw QueryError("bad-ast-json", "unknown comparison '" + cmp + "'");
            atom.threshold = doc.at("threshold").get<std::int64_t>();
        }
        return make_atom(std::move(atom));
    }
    throw QueryError("bad-ast-json", "unknown op '" + op + "'");
}

}  // namespace carematch::query
