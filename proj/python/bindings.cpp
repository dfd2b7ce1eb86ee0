#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "carematch/cnf.hpp"
#include "carematch/error.hpp"
#include "carematch/query.hpp"
#include "carematch/service.hpp"
#include "carematch/solver.hpp"

namespace py = pybind11;
using namespace carematch;
using nlohmann::json;

// JSON crosses the boundary as text; the Python side decodes it.
namespace {

std::string schema_json(const std::vector<AttributeSchema>& schemas) {
    json out = json::array();
    for (const auto& s : schemas) out.push_back(to_json(s));
    return out.dump();
}

std::vector<AttributeSchema> schemas_or_default(const std::optional<std::string>& doc) {
    return doc ? load_schema_text(*doc) : default_schema();
}

}  // namespace

PYBIND11_MODULE(_carematch, m) {
    m.doc() = "Native core of the carematch package";

    static py::handle error_type = py::exception<Error>(m, "Error").release();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const QueryError& e) {
            json detail{{"code", e.code()}, {"message", e.what()}};
            if (e.offset()) detail["offset"] = *e.offset();
            py::set_error(error_type, detail.dump().c_str());
        } catch (const CatalogError& e) {
            json detail{{"code", e.code()}, {"message", e.what()}};
            if (e.row()) detail["row"] = *e.row();
            if (e.column()) detail["column"] = *e.column();
            py::set_error(error_type, detail.dump().c_str());
        } catch (const Error& e) {
            py::set_error(error_type, json{{"code", e.code()}, {"message", e.what()}}.dump().c_str());
        }
    });

    m.def("default_schema", [] { return schema_json(default_schema()); });

    m.def(
        "parse_query",
        [](const std::string& text, std::optional<std::string> schema) {
            auto ast = query::validate(query::parse_query(text), schemas_or_default(schema));
            return json{{"ast", query::to_json(ast)}, {"text", query::to_string(ast)}}.dump();
        },
        py::arg("text"), py::arg("schema") = py::none());

    m.def(
        "match",
        [](const std::string& providers, const std::string& text, std::optional<std::string> schema,
           bool relax, std::uint64_t seed) {
            Catalog catalog(schemas_or_default(schema));
            auto snap = catalog.ingest_text(providers);
            match::MatchOptions options;
            options.relax_on_empty = relax;
            options.solver.seed = seed;
            py::gil_scoped_release release;
            return response::to_json(service::run_query(*snap, text, response::Templates::defaults(), options)).dump();
        },
        py::arg("providers"), py::arg("query"), py::arg("schema") = py::none(), py::arg("relax") = true,
        py::arg("seed") = 0);

    m.def("render_plain", [](const std::string& report) {
        return response::render_plain(match::report_from_json(json::parse(report)));
    });

    m.def("solve_dimacs", [](const std::string& text) {
        auto formula = parse_dimacs(text);
        sat::Solver solver;
        solver.reserve_vars(formula.num_vars);
        solver.add_formula(formula);
        auto outcome = solver.solve();
        std::vector<int> model;
        if (outcome.is_sat()) {
            for (int v = 1; v <= formula.num_vars; ++v) model.push_back(outcome.model[static_cast<std::size_t>(v)] ? v : -v);
        }
        return py::make_tuple(outcome.is_sat(), model);
    });

    m.def(
        "bench",
        [](const std::vector<std::int64_t>& sizes, int reps, std::size_t providers, std::uint64_t seed) {
            service::BenchOptions options{reps, providers, seed};
            std::vector<service::BenchRow> rows;
            {
                py::gil_scoped_release release;
                rows = service::run_bench(sizes, options);
            }
            py::list out;
            for (const auto& r : rows) {
                py::dict d;
                d["query_size"] = r.query_size;
                d["translation_ms"] = r.translation_ms;
                d["solve_ms"] = r.solve_ms;
                out.append(d);
            }
            return out;
        },
        py::arg("sizes"), py::arg("reps") = 5, py::arg("providers") = 20, py::arg("seed") = 7);
}
