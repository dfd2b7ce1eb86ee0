#include <algorithm>
#include <cstdio>
#include <random>
#include <sstream>

#include "carematch/error.hpp"
#include "carematch/query.hpp"
#include "carematch/service.hpp"

namespace carematch::service {

namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    auto n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

}  // namespace

std::vector<AttributeSchema> bench_schema(std::int64_t query_size) {
    if (query_size < 1) throw Error("invalid-size", "query size must be positive");
    std::vector<AttributeSchema> out;
    auto add = [&](std::int64_t hi) {
        out.push_back(AttributeSchema{"a" + std::to_string(out.size()), AttributeKind::integer_range, 1, hi, ""});
    };
    for (std::int64_t i = 0; i < query_size / 100; ++i) add(100);
    if (query_size % 100) add(query_size % 100);
    return out;
}

std::vector<BenchRow> run_bench(const std::vector<std::int64_t>& sizes, const BenchOptions& options) {
    if (options.repetitions < 1) throw Error("invalid-reps", "repetitions must be at least 1");
    std::vector<BenchRow> rows;
    for (auto size : sizes) {
        if (size < 100) throw Error("invalid-size", "bench sizes must be at least 100");
        std::mt19937_64 rng(options.seed ^ static_cast<std::uint64_t>(size));
        CatalogSnapshot snap;
        snap.version = 1;
        snap.schemas = bench_schema(size);
        for (std::size_t p = 0; p < options.providers; ++p) {
            ProviderRecord r;
            r.provider_id = "B" + std::to_string(p);
            r.display_name = "Bench provider " + std::to_string(p);
            for (const auto& s : snap.schemas) r.values[s.name] = std::uniform_int_distribution<std::int64_t>(s.lo, s.hi)(rng);
            snap.providers.push_back(std::move(r));
        }
        std::vector<query::Ast> atoms;
        for (const auto& s : snap.schemas) {
            query::AtomConstraint a;
            a.attribute = s.name;
            a.op = query::Comparison::ge;
            a.threshold = std::uniform_int_distribution<std::int64_t>(s.lo, s.hi)(rng);
            atoms.push_back(query::make_atom(a));
        }
        auto ast = query::validate(query::conjoin(atoms), snap.schemas);

        match::MatchOptions mo;
        mo.relax_on_empty = false;
        std::vector<double> translation, solve;
        for (int rep = 0; rep < options.repetitions; ++rep) {
            auto report = match::match_query(ast, snap, mo);
            translation.push_back(report.timings.translation_ms);
            solve.push_back(report.timings.solve_ms);
        }
        rows.push_back(BenchRow{size, median(translation), median(solve)});
    }
    return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
    std::ostringstream out;
    out << "query_size,translation_ms,solve_ms\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.4f,%.4f", r.translation_ms, r.solve_ms);
        out << r.query_size << ',' << buf << '\n';
    }
    return out.str();
}

}  // namespace carematch::service
