#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "carematch/auth.hpp"
#include "carematch/cnf.hpp"
#include "carematch/error.hpp"
#include "carematch/service.hpp"
#include "carematch/solver.hpp"

using namespace carematch;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io-error", "cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

service::HttpServer* active_server = nullptr;

void on_signal(int) {
    if (active_server) active_server->stop();
}

int cmd_serve(const std::string& config_path) {
    auto config = service::ServiceConfig::load(config_path);
    service::Service svc(config);
    service::HttpServer server(svc);
    int port = server.bind(config.host, config.port);
    if (port < 0) {
        std::cerr << "error: cannot bind " << config.host << ":" << config.port << "\n";
        return 1;
    }
    active_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "listening on " << config.host << ":" << port << std::endl;
    server.serve();
    return 0;
}

int cmd_query(const std::string& catalog_path, const std::string& text, const std::string& templates_path,
              bool as_json, std::uint64_t seed) {
    Catalog catalog;
    auto snap = catalog.ingest_text(read_file(catalog_path));
    auto templates = templates_path.empty() ? response::Templates::defaults() : response::Templates::load(templates_path);
    match::MatchOptions options;
    options.solver.seed = seed;
    auto rendered = service::run_query(*snap, text, templates, options);
    if (as_json) {
        std::cout << response::to_json(rendered).dump(2) << "\n";
        return 0;
    }
    std::cout << rendered.summary_text << "\n";
    for (const auto& t : rendered.relaxation_texts) std::cout << "  " << t << "\n";
    std::cout << "\n" << response::render_plain(match::report_from_json(rendered.machine_payload));
    return 0;
}

int cmd_solve(const std::string& path) {
    auto formula = parse_dimacs(read_file(path));
    sat::Solver solver;
    solver.reserve_vars(formula.num_vars);
    solver.add_formula(formula);
    auto outcome = solver.solve();
    if (!outcome.is_sat()) {
        std::cout << "s UNSATISFIABLE\n";
        return 20;
    }
    std::cout << "s SATISFIABLE\n";
    std::ostringstream line;
    line << "v";
    for (int v = 1; v <= formula.num_vars; ++v) {
        line << ' ' << (outcome.model[static_cast<std::size_t>(v)] ? v : -v);
        if (line.tellp() > 70) {
            std::cout << line.str() << "\n";
            line.str("v");
            line.seekp(0, std::ios::end);
        }
    }
    std::cout << line.str() << " 0\n";
    return 10;
}

int cmd_bench(const std::vector<std::int64_t>& sizes, int reps, std::size_t providers, std::uint64_t seed,
              const std::string& out) {
    service::BenchOptions options;
    options.repetitions = reps;
    options.providers = providers;
    options.seed = seed;
    auto csv = service::bench_csv(service::run_bench(sizes, options));
    if (out.empty() || out == "-") {
        std::cout << csv;
    } else {
        std::ofstream f(out);
        if (!f) throw Error("io-error", "cannot write " + out);
        f << csv;
        std::cout << csv;
    }
    return 0;
}

int cmd_ingest(const std::string& file, const std::string& config_path) {
    if (config_path.empty()) {
        Catalog catalog;
        auto snap = catalog.ingest_text(read_file(file));
        std::cout << "valid: " << snap->providers.size() << " providers\n";
        return 0;
    }
    service::Service svc(service::ServiceConfig::load(config_path));
    auto snap = svc.catalog().ingest_text(read_file(file));
    // Offline admin path: no token, written straight into the state dir.
    svc.catalog().save(svc.config().state_dir + "/snapshots/v" + std::to_string(snap->version) + ".json");
    std::cout << "version " << snap->version << "\n";
    return 0;
}

int cmd_add_user(const std::string& credentials, const std::string& username, const std::string& role,
                 std::string password, std::uint32_t iterations) {
    if (password.empty()) std::getline(std::cin, password);
    if (password.empty()) throw Error("invalid-password", "empty password");
    std::ifstream probe(credentials);
    auto store = probe ? auth::CredentialStore::load(credentials) : auth::CredentialStore{};
    store.add_user(username, password, auth::parse_role(role), iterations);
    store.save(credentials);
    std::cout << "added " << username << " (" << role << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Provider matching over a SAT-compiled catalog"};
    app.require_subcommand(1);

    std::string config_path;
    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    serve->add_option("--config", config_path, "Config JSON")->required()->check(CLI::ExistingFile);

    std::string catalog_path, query_text, templates_path;
    bool as_json = false;
    std::uint64_t seed = 0;
    auto* query = app.add_subcommand("query", "Match one query against a provider document");
    query->add_option("--catalog", catalog_path, "Provider CSV or JSON")->required()->check(CLI::ExistingFile);
    query->add_option("--templates", templates_path, "Response templates")->check(CLI::ExistingFile);
    query->add_option("--seed", seed, "Solver seed");
    query->add_flag("--json", as_json, "Print the full JSON response");
    query->add_option("query", query_text, "Query text")->required();

    std::string dimacs;
    auto* solve = app.add_subcommand("solve", "Solve a DIMACS CNF file");
    solve->add_option("file", dimacs)->required()->check(CLI::ExistingFile);

    std::vector<std::int64_t> sizes{200, 350, 1000, 1500, 2300, 3000, 3500, 4000, 5000};
    int reps = 5;
    std::size_t providers = 20;
    std::uint64_t bench_seed = 7;
    std::string out;
    auto* bench = app.add_subcommand("bench", "Time translation and solving over query sizes");
    bench->add_option("--sizes", sizes, "Query sizes")->delimiter(',');
    bench->add_option("--reps", reps, "Repetitions per size")->check(CLI::PositiveNumber);
    bench->add_option("--providers", providers, "Synthetic catalog size");
    bench->add_option("--seed", bench_seed, "Generator seed");
    bench->add_option("--out", out, "CSV output path");

    std::string ingest_file, ingest_config;
    auto* ingest = app.add_subcommand("ingest", "Validate a provider document, or publish it with --config");
    ingest->add_option("file", ingest_file)->required()->check(CLI::ExistingFile);
    ingest->add_option("--config", ingest_config, "Service config")->check(CLI::ExistingFile);

    std::string credentials, username, role = "patient", password;
    std::uint32_t iterations = auth::CredentialStore::default_iterations;
    auto* add_user = app.add_subcommand("add-user", "Add a user to a credentials file");
    add_user->add_option("--credentials", credentials)->required();
    add_user->add_option("--username", username)->required();
    add_user->add_option("--role", role)->check(CLI::IsMember({"patient", "provider_admin", "analyst"}));
    add_user->add_option("--password", password, "Read from stdin when omitted");
    add_user->add_option("--iterations", iterations);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*serve) return cmd_serve(config_path);
        if (*query) return cmd_query(catalog_path, query_text, templates_path, as_json, seed);
        if (*solve) return cmd_solve(dimacs);
        if (*bench) return cmd_bench(sizes, reps, providers, bench_seed, out);
        if (*ingest) return cmd_ingest(ingest_file, ingest_config);
        if (*add_user) return cmd_add_user(credentials, username, role, password, iterations);
    } catch (const QueryError& e) {
        std::cerr << "error [" << e.code() << "]";
        if (e.offset()) std::cerr << " at offset " << *e.offset();
        std::cerr << ": " << e.what() << "\n";
        return 2;
    } catch (const CatalogError& e) {
        std::cerr << "error [" << e.code() << "]";
        if (e.row()) std::cerr << " row " << *e.row();
        if (e.column()) std::cerr << " column " << *e.column();
        std::cerr << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
