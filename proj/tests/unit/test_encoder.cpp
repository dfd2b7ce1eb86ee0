#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "carematch/encoder.hpp"
#include "carematch/solver.hpp"
#include "encoder_checks.hpp"
#include "fixtures.hpp"

using namespace carematch;
using namespace carematch::encode;
using namespace carematch::testing;
using query::Comparison;

namespace {

AttributeSchema range(const std::string& name, std::int64_t lo, std::int64_t hi) {
    return {name, AttributeKind::integer_range, lo, hi, ""};
}

AttributeSchema boolean(const std::string& name) { return {name, AttributeKind::boolean, 0, 1, ""}; }

// Zero bits of max_offset within k bits: one domain clause each.
std::size_t domain_clause_count(const AttributeSchema& s) {
    auto m = s.span() - 1;
    std::size_t zeros = 0;
    for (int i = 0; i < bit_width(s); ++i) zeros += ((m >> i) & 1U) ? 0 : 1;
    return zeros;
}

}  // namespace

TEST_CASE("bit widths") {
    CHECK(bit_width(range("a", 0, 100)) == 7);
    CHECK(bit_width(boolean("b")) == 1);
    CHECK(bit_width(range("c", 3, 3)) == 1);
    CHECK(bit_width(range("d", 0, 127)) == 7);
    CHECK(bit_width(range("e", 0, 128)) == 8);
    CHECK(bit_width(range("f", -4, 3)) == 3);
}

TEST_CASE("bitblast_attribute") {
    SUBCASE("[0,100] gets seven bits, LSB first, densely numbered") {
        VarTable t;
        CnfFormula f;
        auto bits = bitblast_attribute(range("a", 0, 100), t, f);
        CHECK(bits == std::vector<int>{1, 2, 3, 4, 5, 6, 7});
        CHECK(t.entries().at({"a", 0}) == 1);
        CHECK(f.clauses.size() == 4);
        // Blasting again reuses the bits and adds no clauses.
        CHECK(bitblast_attribute(range("a", 0, 100), t, f) == bits);
        CHECK(f.clauses.size() == 4);
    }
    SUBCASE("boolean gets one unconstrained bit") {
        VarTable t;
        CnfFormula f;
        CHECK(bitblast_attribute(boolean("b"), t, f).size() == 1);
        CHECK(f.clauses.empty());
    }
    SUBCASE("singleton range is one bit fixed false") {
        VarTable t;
        CnfFormula f;
        auto bits = bitblast_attribute(range("c", 3, 3), t, f);
        REQUIRE(bits.size() == 1);
        REQUIRE(f.clauses.size() == 1);
        CHECK(f.clauses[0] == Clause{-bits[0]});
    }
    SUBCASE("domain clauses admit exactly the offsets 0..hi-lo") {
        for (std::int64_t hi = 0; hi <= 70; ++hi) {
            VarTable t;
            CnfFormula f;
            auto s = range("a", 5, 5 + hi);
            auto bits = bitblast_attribute(s, t, f);
            for (std::uint64_t p = 0; p < (1u << bits.size()); ++p) {
                CHECK(brute_sat(f, fix_bits(bits, p)) == (p <= static_cast<std::uint64_t>(hi)));
            }
        }
    }
}

TEST_CASE("comparator corner cases") {
    SUBCASE("x >= lo is the true literal") {
        VarTable t;
        CnfFormula f;
        auto s = range("x", 0, 100);
        auto bits = bitblast_attribute(s, t, f);
        Lit out = encode_comparison({"x", Comparison::ge, 0, false, 0}, s, bits, t, f);
        REQUIRE(t.true_var());
        CHECK(out == *t.true_var());
        CHECK(std::find(f.clauses.begin(), f.clauses.end(), Clause{out}) != f.clauses.end());
    }
    SUBCASE("boolean = 1 is the bit itself") {
        VarTable t;
        CnfFormula f;
        auto s = boolean("b");
        auto bits = bitblast_attribute(s, t, f);
        CHECK(encode_comparison({"b", Comparison::eq, 1, false, 0}, s, bits, t, f) == bits[0]);
        CHECK(encode_comparison({"b", Comparison::eq, 0, false, 0}, s, bits, t, f) == -bits[0]);
        CHECK(f.clauses.empty());
    }
}

TEST_CASE("x >= 60 over [0,100]: all 128 bit patterns") {
    CHECK(comparator_mismatches(0, 100, Comparison::ge, 60) == 0);
}

TEST_CASE("every threshold and comparison over [0,100] and shifted ranges") {
    for (auto [lo, hi] : {std::pair<std::int64_t, std::int64_t>{0, 100}, {-20, 17}, {3, 3}, {1, 64}, {0, 1}}) {
        for (std::int64_t k = lo - 1; k <= hi + 1; ++k) {
            for (auto op : {Comparison::ge, Comparison::le, Comparison::eq}) {
                INFO("range [" << lo << "," << hi << "] op " << static_cast<int>(op) << " k " << k);
                CHECK(comparator_mismatches(lo, hi, op, k) == 0);
            }
        }
    }
}

TEST_CASE("tseitin_cnf") {
    std::vector<AttributeSchema> bools{boolean("r1"), boolean("r2"), boolean("r3"), boolean("r4")};
    auto atom = [](const std::string& n) { return query::make_atom({n, Comparison::eq, 1, false, 0}); };

    SUBCASE("atom only: root is the comparator output, no gate clauses") {
        VarTable t;
        auto r = tseitin_cnf(atom("r1"), bools, t);
        CHECK(r.root == *t.bits("r1")->data());
        CHECK(r.formula.clauses.empty());
        CHECK(t.auxiliaries().empty());
    }
    SUBCASE("negation flips polarity without an auxiliary") {
        VarTable t;
        auto r = tseitin_cnf(query::make_not(atom("r1")), bools, t);
        CHECK(r.root == -*t.bits("r1")->data());
        CHECK(t.auxiliaries().empty());
    }
    SUBCASE("And(Or(r1, r2), r3) over 8 input combinations") {
        auto q = query::make_and(query::make_or(atom("r1"), atom("r2")), atom("r3"));
        CHECK(tseitin_mismatches(q, {bools[0], bools[1], bools[2]}) == 0);
        VarTable t;
        tseitin_cnf(q, bools, t);
        CHECK(t.auxiliaries().size() == 2);
    }
    SUBCASE("(r1 | r2) & r3 & !r4 over 16 combinations") {
        auto q = query::validate(query::parse_query("(r1 | r2) & r3 & !r4"), bools);
        CHECK(tseitin_mismatches(q, bools) == 0);
    }
    SUBCASE("ANY compiles to the true literal") {
        VarTable t;
        auto r = tseitin_cnf(query::make_any("r1"), bools, t);
        CHECK(r.root == *t.true_var());
        CHECK(t.bits("r1") == nullptr);
    }
}

TEST_CASE("equisatisfiability property over small ranges") {
    std::mt19937_64 rng(314);
    std::vector<AttributeSchema> schemas{range("a", 0, 7), range("b", 2, 6), boolean("c")};
    for (int i = 0; i < 300; ++i) {
        auto q = random_query(rng, schemas, 6);
        INFO(query::to_string(q));
        CHECK(tseitin_mismatches(q, schemas) == 0);
    }
}

TEST_CASE("reduce_to_3sat") {
    SUBCASE("width-3 and unit clauses pass through") {
        CnfFormula f;
        f.add_clause({1, 2, 3});
        f.add_clause({4});
        auto r = reduce_to_3sat(f);
        CHECK(r.clauses == f.clauses);
        CHECK(r.num_vars == 4);
    }
    SUBCASE("width 4 splits into two clauses with one fresh variable") {
        CnfFormula f;
        f.add_clause({1, 2, 3, 4});
        auto r = reduce_to_3sat(f);
        REQUIRE(r.clauses.size() == 2);
        CHECK(r.clauses[0] == Clause{1, 2, 5});
        CHECK(r.clauses[1] == Clause{-5, 3, 4});
        CHECK(r.num_vars == 5);
        CHECK(reduction_mismatches(f) == 0);
    }
    SUBCASE("width w gives w - 2 clauses and w - 3 fresh variables") {
        for (int w = 4; w <= 12; ++w) {
            CnfFormula f;
            Clause c;
            for (int v = 1; v <= w; ++v) c.push_back(v % 2 ? v : -v);
            f.add_clause(c);
            auto r = reduce_to_3sat(f);
            CHECK(r.clauses.size() == static_cast<std::size_t>(w - 2));
            CHECK(r.num_vars == w + w - 3);
        }
    }
    SUBCASE("projection preserved on random formulas up to 12 variables") {
        std::mt19937_64 rng(271);
        for (int i = 0; i < 150; ++i) {
            int n = 4 + i % 9;
            auto f = random_wide_cnf(rng, n, 2 + i % 5, 7);
            CHECK(reduction_mismatches(f) == 0);
        }
    }
    SUBCASE("fresh variables come from the table when given") {
        VarTable t;
        for (int i = 0; i < 4; ++i) t.new_aux();
        CnfFormula f;
        f.add_clause({1, 2, 3, 4});
        f.add_clause({1, 2, 3, -4});
        f.add_clause({-1, -2, -3, 4});
        auto r = reduce_to_3sat(f, &t);
        CHECK(t.num_vars() == r.num_vars);
    }
}

TEST_CASE("catalog model structure") {
    SUBCASE("one provider, one boolean attribute") {
        auto snap = make_snapshot({make_record("H1", {{"b", 1}}, {boolean("b")})}, {boolean("b")});
        auto m = encode_catalog_model(snap);
        int s1 = *m.table.selector("H1");
        int b = (*m.table.bits("b"))[0];
        std::set<Clause> clauses(m.formula.clauses.begin(), m.formula.clauses.end());
        CHECK(clauses == std::set<Clause>{{s1}, {-s1, b}});
    }
    SUBCASE("two providers get one-hot clauses") {
        std::vector<AttributeSchema> s{boolean("b")};
        auto snap = make_snapshot({make_record("H1", {{"b", 1}}, s), make_record("H2", {{"b", 0}}, s)}, s);
        auto m = encode_catalog_model(snap);
        int s1 = *m.table.selector("H1"), s2 = *m.table.selector("H2");
        int b = (*m.table.bits("b"))[0];
        std::set<Clause> clauses(m.formula.clauses.begin(), m.formula.clauses.end());
        CHECK(clauses == std::set<Clause>{{s1, s2}, {-s1, -s2}, {-s1, b}, {-s2, -b}});
    }
    SUBCASE("empty catalog is flagged and unsatisfiable") {
        auto m = encode_catalog_model(make_snapshot({}));
        CHECK(m.empty_catalog);
        sat::Solver solver;
        solver.add_formula(m.formula);
        CHECK_FALSE(solver.solve().is_sat());
    }
    SUBCASE("three providers with the default schema: each model is one provider") {
        std::mt19937_64 rng(17);
        auto schemas = default_schema();
        std::vector<ProviderRecord> recs;
        for (int i = 0; i < 3; ++i) recs.push_back(random_record(rng, "H" + std::to_string(i + 1), schemas));
        auto m = encode_catalog_model(make_snapshot(recs));
        sat::Solver solver;
        solver.add_formula(m.formula);
        std::vector<int> proj;
        for (const auto& [id, v] : m.table.selector_order()) proj.push_back(v);
        for (const auto& s : schemas) {
            for (int b : *m.table.bits(s.name)) proj.push_back(b);
        }
        std::set<std::string> seen;
        std::size_t models = 0;
        sat::enumerate_models(solver, proj, 100, {}, std::nullopt, [&](const sat::SolveOutcome& out) {
            ++models;
            std::vector<std::string> on;
            for (const auto& [id, v] : m.table.selector_order()) {
                if (out.model[static_cast<std::size_t>(v)]) on.push_back(id);
            }
            REQUIRE(on.size() == 1);
            seen.insert(on[0]);
            const auto& rec = *std::find_if(recs.begin(), recs.end(), [&](const auto& r) { return r.provider_id == on[0]; });
            for (const auto& s : schemas) CHECK(decode_value(out.model, *m.table.bits(s.name), s.lo) == rec.values.at(s.name));
        });
        CHECK(models == 3);
        CHECK(seen.size() == 3);
    }
}

TEST_CASE("sequential at-most-one above the pairwise limit") {
    std::vector<AttributeSchema> s{boolean("b")};
    for (std::size_t n : {1u, 2u, 3u, 7u}) {
        std::vector<ProviderRecord> recs;
        for (std::size_t i = 0; i < n; ++i) recs.push_back(make_record("P" + std::to_string(i), {{"b", static_cast<int>(i % 2)}}, s));
        CatalogModelOptions opts;
        opts.pairwise_limit = 0;
        auto m = encode_catalog_model(make_snapshot(recs, s), opts);
        sat::Solver solver;
        solver.add_formula(m.formula);
        std::vector<int> proj;
        for (const auto& [id, v] : m.table.selector_order()) proj.push_back(v);
        auto models = sat::enumerate_models(solver, proj, 100);
        CHECK(models.size() == n);
        for (const auto& model : models) CHECK(std::count_if(model.begin(), model.end(), [](Lit l) { return l > 0; }) == 1);
    }
}

TEST_CASE("variable accounting") {
    std::mt19937_64 rng(5);
    auto schemas = default_schema();
    for (int i = 0; i < 30; ++i) {
        std::vector<ProviderRecord> recs;
        int n = 1 + i;
        for (int p = 0; p < n; ++p) recs.push_back(random_record(rng, "P" + std::to_string(p), schemas));
        auto m = encode_catalog_model(make_snapshot(recs, schemas));
        auto q = random_query(rng, schemas, 8);
        auto t = tseitin_cnf(q, schemas, m.table);
        auto reduced = reduce_to_3sat(t.formula, &m.table);

        std::size_t bits = m.table.entries().size();
        // The true variable, when present, is one of the auxiliaries.
        std::size_t expected = bits + m.table.selectors().size() + m.table.auxiliaries().size();
        CHECK(static_cast<std::size_t>(m.table.num_vars()) == expected);
        auto sidecar = m.table.sidecar();
        CHECK(sidecar["num_vars"] == m.table.num_vars());
        CHECK(sidecar["variables"].size() == expected);
        std::set<int> ids;
        for (const auto& v : sidecar["variables"]) ids.insert(v["id"].get<int>());
        CHECK(ids.size() == expected);
        CHECK(*ids.begin() == 1);
        CHECK(*ids.rbegin() == m.table.num_vars());
        for (const auto* f : {&m.formula, &reduced}) {
            for (const auto& c : f->clauses) {
                for (Lit l : c) CHECK((l != 0 && var_of(l) <= m.table.num_vars()));
            }
            CHECK(f->max_width() <= 3);
        }
    }
}

TEST_CASE("encoding size") {
    SUBCASE("tseitin clause count is linear in node count") {
        std::vector<AttributeSchema> bools;
        for (int i = 0; i < 40; ++i) bools.push_back(boolean("r" + std::to_string(i)));
        for (int n = 1; n <= 40; ++n) {
            query::Ast q;
            for (int i = 0; i < n; ++i) {
                auto a = query::make_atom({"r" + std::to_string(i), Comparison::eq, 1, false, 0});
                q = q ? query::make_and(q, a) : a;
            }
            VarTable t;
            auto r = tseitin_cnf(q, bools, t);
            CHECK(r.formula.clauses.size() == static_cast<std::size_t>(3 * (n - 1)));
        }
        std::mt19937_64 rng(6);
        auto schemas = default_schema();
        for (int i = 0; i < 200; ++i) {
            auto q = random_query(rng, schemas, 12);
            VarTable t;
            auto r = tseitin_cnf(q, schemas, t);
            // Per node: a 7-bit comparator (<= 21 gate clauses + 4 domain) or a 3-clause gate.
            CHECK(r.formula.clauses.size() <= 26 * query::node_count(q) + 1);
        }
    }
    SUBCASE("catalog model clause count before width reduction") {
        std::mt19937_64 rng(7);
        auto schemas = default_schema();
        std::size_t total_bits = 0, domain = 0;
        for (const auto& s : schemas) {
            total_bits += static_cast<std::size_t>(bit_width(s));
            domain += domain_clause_count(s);
        }
        CHECK(total_bits == 10 * 7 + 2);
        for (std::size_t n : {1u, 2u, 5u, 20u, 60u}) {
            std::vector<ProviderRecord> recs;
            for (std::size_t p = 0; p < n; ++p) recs.push_back(random_record(rng, "P" + std::to_string(p), schemas));
            CatalogModelOptions opts;
            opts.reduce_width = false;
            auto m = encode_catalog_model(make_snapshot(recs, schemas), opts);
            CHECK(m.formula.clauses.size() == domain + 1 + n * (n - 1) / 2 + n * total_bits);
        }
    }
}

TEST_CASE("DIMACS export round trip agrees with the reference solver") {
    std::mt19937_64 rng(88);
    std::vector<AttributeSchema> schemas{range("a", 0, 7), boolean("b"), range("c", 0, 3)};
    int compared = 0;
    for (int i = 0; i < 200; ++i) {
        std::vector<ProviderRecord> recs;
        int n = std::uniform_int_distribution<int>(1, 4)(rng);
        for (int p = 0; p < n; ++p) recs.push_back(random_record(rng, "P" + std::to_string(p), schemas));
        auto m = encode_catalog_model(make_snapshot(recs, schemas));
        auto t = tseitin_cnf(random_query(rng, schemas, 3), schemas, m.table);
        CnfFormula full = m.formula;
        for (const auto& c : reduce_to_3sat(t.formula, &m.table).clauses) full.clauses.push_back(c);
        full.clauses.push_back({t.root});
        full.num_vars = m.table.num_vars();
        if (full.num_vars > 30) continue;
        auto text = export_dimacs(full);
        auto back = parse_dimacs(text);
        sat::Solver solver;
        solver.add_formula(back);
        CHECK(solver.solve().verdict == sat::dpll_oracle(back.clauses, back.num_vars).verdict);
        ++compared;
    }
    CHECK(compared > 50);
}
