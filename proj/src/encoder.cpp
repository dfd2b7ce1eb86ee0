#include "carematch/encoder.hpp"

#include <algorithm>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "carematch/error.hpp"

namespace carematch::encode {

using nlohmann::json;
using query::AtomConstraint;
using query::Comparison;
using query::NodeKind;

int VarTable::new_bit(const std::string& attribute, int bit) {
    int id = next_id_++;
    entries_[{attribute, bit}] = id;
    auto& bits = attribute_bits_[attribute];
    if (static_cast<int>(bits.size()) != bit) {
        throw std::logic_error("bits of '" + attribute + "' must be allocated in order");
    }
    bits.push_back(id);
    return id;
}

int VarTable::new_selector(const std::string& provider_id) {
    int id = next_id_++;
    selectors_[provider_id] = id;
    selector_order_.emplace_back(provider_id, id);
    return id;
}

int VarTable::new_aux() {
    int id = next_id_++;
    auxiliaries_.push_back(id);
    return id;
}

const std::vector<int>* VarTable::bits(const std::string& attribute) const {
    auto it = attribute_bits_.find(attribute);
    return it == attribute_bits_.end() ? nullptr : &it->second;
}

std::optional<int> VarTable::selector(const std::string& provider_id) const {
    auto it = selectors_.find(provider_id);
    if (it == selectors_.end()) return std::nullopt;
    return it->second;
}

std::pair<int, bool> VarTable::ensure_true_var() {
    if (true_var_) return {*true_var_, false};
    true_var_ = new_aux();
    return {*true_var_, true};
}

json VarTable::sidecar() const {
    std::vector<json> vars(static_cast<std::size_t>(num_vars()));
    for (const auto& [key, id] : entries_) {
        vars[static_cast<std::size_t>(id - 1)] =
            json{{"id", id}, {"kind", "bit"}, {"attribute", key.first}, {"bit", key.second}};
    }
    for (const auto& [pid, id] : selectors_) {
        vars[static_cast<std::size_t>(id - 1)] = json{{"id", id}, {"kind", "selector"}, {"provider_id", pid}};
    }
    for (int id : auxiliaries_) {
        json entry{{"id", id}, {"kind", "aux"}};
        if (true_var_ && *true_var_ == id) entry["kind"] = "true";
        vars[static_cast<std::size_t>(id - 1)] = entry;
    }
    return json{{"num_vars", num_vars()}, {"variables", vars}};
}

int bit_width(const AttributeSchema& schema) {
    std::uint64_t span = schema.span();
    int k = 0;
    while (k < 63 && (std::uint64_t{1} << k) < span) ++k;
    return std::max(1, k);
}

namespace {

void emit_domain(const std::string& attribute, std::uint64_t max_offset, const std::vector<int>& bits,
                 VarTable& table, CnfFormula& out) {
    if (!table.claim_domain(attribute)) return;
    const int k = static_cast<int>(bits.size());
    // Offset x exceeds max_offset iff at the highest differing bit x has 1
    // where max_offset has 0. Forbid each such bit together with all higher
    // 1-bits of max_offset.
    for (int i = 0; i < k; ++i) {
        if ((max_offset >> i) & 1U) continue;
        Clause c{-bits[static_cast<std::size_t>(i)]};
        for (int j = i + 1; j < k; ++j) {
            if ((max_offset >> j) & 1U) c.push_back(-bits[static_cast<std::size_t>(j)]);
        }
        out.add_clause(std::move(c));
    }
}

// Gate builders with constant folding around the session's true literal.
class Gates {
public:
    Gates(VarTable& table, CnfFormula& out) : table_(table), out_(out) {}

    Lit truth() {
        auto [v, created] = table_.ensure_true_var();
        if (created) out_.add_clause({v});
        return v;
    }

    bool is_true(Lit l) const { return table_.true_var() && l == *table_.true_var(); }
    bool is_false(Lit l) const { return table_.true_var() && l == -*table_.true_var(); }

    Lit and_gate(std::vector<Lit> inputs) {
        std::vector<Lit> lits;
        for (Lit l : inputs) {
            if (is_true(l)) continue;
            if (is_false(l)) return -truth();
            if (std::find(lits.begin(), lits.end(), -l) != lits.end()) return -truth();
            if (std::find(lits.begin(), lits.end(), l) == lits.end()) lits.push_back(l);
        }
        if (lits.empty()) return truth();
        if (lits.size() == 1) return lits.front();
        return define_and(lits);
    }

    Lit or_gate(std::vector<Lit> inputs) {
        for (auto& l : inputs) l = -l;
        return -and_gate(std::move(inputs));
    }

    /// y <-> AND(lits), always with a fresh variable.
    Lit define_and(const std::vector<Lit>& lits) {
        Lit y = table_.new_aux();
        Clause back{y};
        for (Lit l : lits) {
            out_.add_clause({-y, l});
            back.push_back(-l);
        }
        out_.add_clause(std::move(back));
        return y;
    }

    Lit define_or(const std::vector<Lit>& lits) {
        Lit y = table_.new_aux();
        Clause forward{-y};
        for (Lit l : lits) {
            out_.add_clause({y, -l});
            forward.push_back(l);
        }
        out_.add_clause(std::move(forward));
        return y;
    }

private:
    VarTable& table_;
    CnfFormula& out_;
};

// x >= k over offset bits, LSB first.
Lit greater_equal(Gates& g, const std::vector<int>& bits, std::uint64_t k) {
    const auto width = bits.size();
    if (k == 0) return g.truth();
    if (width < 64 && k >= (std::uint64_t{1} << width)) return -g.truth();
    Lit acc = g.truth();
    for (std::size_t i = 0; i < width; ++i) {
        Lit b = bits[i];
        acc = ((k >> i) & 1U) ? g.and_gate({b, acc}) : g.or_gate({b, acc});
    }
    return acc;
}

Lit equal_to(Gates& g, const std::vector<int>& bits, std::uint64_t k) {
    if (bits.size() < 64 && k >= (std::uint64_t{1} << bits.size())) return -g.truth();
    std::vector<Lit> lits;
    for (std::size_t i = 0; i < bits.size(); ++i) lits.push_back(((k >> i) & 1U) ? bits[i] : -bits[i]);
    return g.and_gate(std::move(lits));
}

}  // namespace

std::vector<int> bitblast_attribute(const AttributeSchema& schema, VarTable& table, CnfFormula& out) {
    if (const auto* existing = table.bits(schema.name)) {
        emit_domain(schema.name, schema.span() - 1, *existing, table, out);
        return *existing;
    }
    const int k = bit_width(schema);
    std::vector<int> bits;
    bits.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) bits.push_back(table.new_bit(schema.name, i));
    emit_domain(schema.name, schema.span() - 1, bits, table, out);
    out.num_vars = std::max(out.num_vars, table.num_vars());
    return bits;
}

Lit encode_comparison(const AtomConstraint& atom, const AttributeSchema& schema, const std::vector<int>& bits,
                      VarTable& table, CnfFormula& out) {
    emit_domain(schema.name, schema.span() - 1, bits, table, out);
    Gates g(table, out);
    Lit result = 0;
    // Thresholds are validated into [lo, hi]; clamp anyway so the circuit
    // stays meaningful for out-of-range input.
    auto offset = [&](std::int64_t t) -> std::uint64_t {
        return static_cast<std::uint64_t>(std::clamp(t, schema.lo, schema.hi) - schema.lo);
    };
    switch (atom.op) {
        case Comparison::ge:
            result = atom.threshold <= schema.lo   ? g.truth()
                     : atom.threshold > schema.hi ? -g.truth()
                                                  : greater_equal(g, bits, offset(atom.threshold));
            break;
        case Comparison::le:
            result = atom.threshold >= schema.hi  ? g.truth()
                     : atom.threshold < schema.lo ? -g.truth()
                                                  : -greater_equal(g, bits, offset(atom.threshold) + 1);
            break;
        case Comparison::eq:
            result = (atom.threshold < schema.lo || atom.threshold > schema.hi)
                         ? -g.truth()
                         : equal_to(g, bits, offset(atom.threshold));
            break;
    }
    out.num_vars = std::max(out.num_vars, table.num_vars());
    return result;
}

TseitinResult tseitin_cnf(const query::Ast& ast, const std::vector<AttributeSchema>& schemas, VarTable& table) {
    TseitinResult result;
    Gates g(table, result.formula);

    auto schema_of = [&](const std::string& name) -> const AttributeSchema& {
        auto it = std::find_if(schemas.begin(), schemas.end(), [&](const auto& s) { return s.name == name; });
        if (it == schemas.end()) throw QueryError("unknown-attribute", "unknown attribute '" + name + "'");
        return *it;
    };

    auto encode = [&](auto&& self, const query::Ast& node) -> Lit {
        switch (node->kind) {
            case NodeKind::any: return g.truth();
            case NodeKind::not_node: return -self(self, node->left);
            case NodeKind::atom: {
                const auto& schema = schema_of(node->atom.attribute);
                auto bits = bitblast_attribute(schema, table, result.formula);
                return encode_comparison(node->atom, schema, bits, table, result.formula);
            }
            case NodeKind::and_node: {
                Lit l = self(self, node->left);
                Lit r = self(self, node->right);
                return g.define_and({l, r});
            }
            case NodeKind::or_node: {
                Lit l = self(self, node->left);
                Lit r = self(self, node->right);
                return g.define_or({l, r});
            }
        }
        throw std::logic_error("unreachable node kind");
    };
    result.root = encode(encode, ast);
    result.formula.num_vars = std::max(result.formula.num_vars, table.num_vars());
    return result;
}

CnfFormula reduce_to_3sat(const CnfFormula& formula, VarTable* table) {
    CnfFormula out;
    out.num_vars = formula.num_vars;
    int next = formula.num_vars + 1;
    if (table && table->next_id() < next) {
        throw std::logic_error("variable table is behind the formula");
    }
    auto fresh = [&]() {
        int v = table ? table->new_aux() : next++;
        out.num_vars = std::max(out.num_vars, v);
        return v;
    };
    out.clauses.reserve(formula.clauses.size());
    for (const auto& clause : formula.clauses) {
        if (clause.size() <= 3) {
            out.clauses.push_back(clause);
            continue;
        }
        // (l1 v l2 v y1), (-y1 v l3 v y2), ..., (-y_{w-3} v l_{w-1} v l_w)
        const std::size_t w = clause.size();
        Lit y = fresh();
        out.clauses.push_back({clause[0], clause[1], y});
        for (std::size_t i = 2; i + 2 < w; ++i) {
            Lit next_y = fresh();
            out.clauses.push_back({-y, clause[i], next_y});
            y = next_y;
        }
        out.clauses.push_back({-y, clause[w - 2], clause[w - 1]});
    }
    return out;
}

CatalogModel encode_catalog_model(const CatalogSnapshot& snapshot, CatalogModelOptions options) {
    if (snapshot.schemas.empty()) {
        throw CatalogError("empty-schema", "cannot encode a catalog without attributes");
    }
    CatalogModel model;
    model.snapshot_version = snapshot.version;
    auto& table = model.table;
    CnfFormula raw;

    std::map<std::string, std::vector<int>> bits;
    for (const auto& schema : snapshot.schemas) bits[schema.name] = bitblast_attribute(schema, table, raw);

    std::vector<int> selectors;
    selectors.reserve(snapshot.providers.size());
    for (const auto& p : snapshot.providers) selectors.push_back(table.new_selector(p.provider_id));

    if (selectors.empty()) {
        // At-least-one over nothing is unsatisfiable; keep clauses nonempty.
        model.empty_catalog = true;
        Gates g(table, raw);
        raw.add_clause({-g.truth()});
    } else {
        raw.add_clause(Clause(selectors.begin(), selectors.end()));
    }

    const std::size_t n = selectors.size();
    if (n <= options.pairwise_limit || n < 2) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) raw.add_clause({-selectors[i], -selectors[j]});
        }
    } else {
        // Sequential counter: r_i means "some selector among 1..i is true".
        std::vector<int> r(n - 1);
        for (auto& v : r) v = table.new_aux();
        raw.add_clause({-selectors[0], r[0]});
        for (std::size_t i = 1; i + 1 < n; ++i) {
            raw.add_clause({-selectors[i], r[i]});
            raw.add_clause({-r[i - 1], r[i]});
            raw.add_clause({-selectors[i], -r[i - 1]});
        }
        raw.add_clause({-selectors[n - 1], -r[n - 2]});
    }

    for (std::size_t p = 0; p < n; ++p) {
        const auto& record = snapshot.providers[p];
        for (const auto& schema : snapshot.schemas) {
            auto value = static_cast<std::uint64_t>(record.values.at(schema.name) - schema.lo);
            const auto& b = bits[schema.name];
            for (std::size_t i = 0; i < b.size(); ++i) {
                raw.add_clause({-selectors[p], ((value >> i) & 1U) ? b[i] : -b[i]});
            }
        }
    }
    raw.num_vars = table.num_vars();
    model.formula = options.reduce_width ? reduce_to_3sat(raw, &table) : std::move(raw);
    model.formula.num_vars = table.num_vars();
    return model;
}

std::int64_t decode_value(const std::vector<bool>& model, const std::vector<int>& bits, std::int64_t lo) {
    std::uint64_t offset = 0;
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (model.at(static_cast<std::size_t>(bits[i]))) offset |= std::uint64_t{1} << i;
    }
    return lo + static_cast<std::int64_t>(offset);
}

}  // namespace carematch::encode
