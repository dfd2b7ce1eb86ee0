#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "carematch/catalog.hpp"
#include "carematch/cnf.hpp"
#include "carematch/query.hpp"

namespace carematch::encode {

/// Variable allocation for one encoding session. Ids are dense from 1.
class VarTable {
public:
    int new_bit(const std::string& attribute, int bit);
    int new_selector(const std::string& provider_id);
    int new_aux();

    int next_id() const { return next_id_; }
    int num_vars() const { return next_id_ - 1; }

    /// Bits of an attribute (LSB first), or nullptr when not yet blasted.
    const std::vector<int>* bits(const std::string& attribute) const;
    std::optional<int> selector(const std::string& provider_id) const;

    const std::map<std::pair<std::string, int>, int>& entries() const { return entries_; }
    const std::map<std::string, int>& selectors() const { return selectors_; }
    /// Selectors in allocation order.
    const std::vector<std::pair<std::string, int>>& selector_order() const { return selector_order_; }
    const std::vector<int>& auxiliaries() const { return auxiliaries_; }

    /// Variable forced true by a unit clause; created on first use and listed
    /// among the auxiliaries.
    std::optional<int> true_var() const { return true_var_; }
    /// Returns {var, created}; the caller emits the unit clause when created.
    std::pair<int, bool> ensure_true_var();

    /// True the first time it is called for `attribute`.
    bool claim_domain(const std::string& attribute) { return domain_done_.insert(attribute).second; }

    /// Variable map sidecar: {"num_vars": N, "variables": [{"id","kind",...}]}.
    nlohmann::json sidecar() const;

private:
    int next_id_ = 1;
    std::map<std::pair<std::string, int>, int> entries_;
    std::map<std::string, std::vector<int>> attribute_bits_;
    std::map<std::string, int> selectors_;
    std::vector<std::pair<std::string, int>> selector_order_;
    std::vector<int> auxiliaries_;
    std::optional<int> true_var_;
    std::set<std::string> domain_done_;
};

/// max(1, ceil(log2(hi - lo + 1)))
int bit_width(const AttributeSchema& schema);

/// Allocates the attribute's bits (or returns the existing ones) and emits
/// its domain clauses, which exclude offsets above hi - lo. A singleton
/// range yields one bit fixed false.
std::vector<int> bitblast_attribute(const AttributeSchema& schema, VarTable& table, CnfFormula& out);

/// Emits a Tseitin-defined unsigned comparator over `bits` (offset binary,
/// value - lo) and returns the literal equivalent to the atom.
Lit encode_comparison(const query::AtomConstraint& atom, const AttributeSchema& schema,
                      const std::vector<int>& bits, VarTable& table, CnfFormula& out);

struct TseitinResult {
    Lit root = 0;
    CnfFormula formula;
};

/// Definitional CNF for a validated query. And/Or nodes get one auxiliary
/// each; negation only flips polarity. Attributes not yet in `table` are
/// blasted into the returned formula.
TseitinResult tseitin_cnf(const query::Ast& ast, const std::vector<AttributeSchema>& schemas,
                          VarTable& table);

/// Splits clauses wider than three into chained width-3 clauses. Fresh
/// variables come from `table` when given, else from formula.num_vars + 1.
CnfFormula reduce_to_3sat(const CnfFormula& formula, VarTable* table = nullptr);

struct CatalogModel {
    CnfFormula formula;
    VarTable table;
    std::uint64_t snapshot_version = 0;
    bool empty_catalog = false;
};

struct CatalogModelOptions {
    /// Above this provider count the at-most-one constraint switches from
    /// pairwise to the sequential (ladder) encoding.
    std::size_t pairwise_limit = 200;
    bool reduce_width = true;
};

/// One-hot provider selectors plus selector -> bit-value clauses.
CatalogModel encode_catalog_model(const CatalogSnapshot& snapshot, CatalogModelOptions options = {});

/// Reads an attribute value back from a model (1-based assignment).
std::int64_t decode_value(const std::vector<bool>& model, const std::vector<int>& bits, std::int64_t lo);

}  // namespace carematch::encode
