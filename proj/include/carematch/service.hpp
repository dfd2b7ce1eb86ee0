#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "carematch/auth.hpp"
#include "carematch/catalog.hpp"
#include "carematch/match.hpp"
#include "carematch/response.hpp"

namespace carematch::service {

/// Paths in the config file are resolved against the file's directory.
struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    /// Provider document ingested as version 1 when the state dir holds no snapshots.
    std::string catalog_path;
    /// Snapshots, the query log and (by default) the credentials live here.
    std::string state_dir = "state";
    std::string credentials_path;
    std::string templates_path;
    std::string token_secret;  // hex; random per process when empty
    std::int64_t token_ttl_seconds = 3600;
    std::vector<std::int64_t> bench_sizes{200, 350, 1000, 1500, 2300, 3000, 3500, 4000, 5000};
    int bench_reps = 5;
    std::uint64_t solver_seed = 0;

    static ServiceConfig from_json(const nlohmann::json& doc, const std::string& base_dir = ".");
    static ServiceConfig load(const std::string& path);
    nlohmann::json to_json() const;
};

struct QueryLogEntry {
    std::uint64_t id = 0;
    std::string username;
    std::string query_text;
    std::uint64_t snapshot_version = 0;
    std::int64_t timestamp = 0;
    std::size_t match_count = 0;
    std::size_t relaxation_count = 0;
    double translation_ms = 0.0;
    double solve_ms = 0.0;

    bool operator==(const QueryLogEntry&) const = default;
};

nlohmann::json to_json(const QueryLogEntry& entry);
QueryLogEntry log_entry_from_json(const nlohmann::json& doc);

/// Append-only JSON-lines file. Ids continue from the last persisted entry.
class QueryLog {
public:
    explicit QueryLog(std::string path);

    /// Assigns the next id and writes the entry through.
    QueryLogEntry append(QueryLogEntry entry);
    std::vector<QueryLogEntry> entries(std::optional<std::size_t> limit = std::nullopt) const;
    std::uint64_t next_id() const;

private:
    std::string path_;
    mutable std::mutex mutex_;
    std::vector<QueryLogEntry> entries_;
};

struct ReplayMismatch {
    std::uint64_t id = 0;
    std::size_t recorded = 0;
    std::size_t replayed = 0;
};

/// Everything behind the HTTP routes. Thread-safe; each query runs its own
/// pipeline against the snapshot current when it starts.
class Service {
public:
    explicit Service(ServiceConfig config, auth::Clock clock = auth::system_seconds);

    std::string login(const std::string& username, const std::string& password) const;
    response::RenderedResponse submit_query(const std::string& token, const std::string& query_text);
    std::uint64_t ingest(const std::string& token, const std::string& document);
    nlohmann::json schema() const;
    std::vector<QueryLogEntry> log(const std::string& token, std::optional<std::size_t> limit) const;
    nlohmann::json health() const;

    /// Re-runs every logged query against its recorded snapshot version.
    std::vector<ReplayMismatch> replay() const;

    Catalog& catalog() { return *catalog_; }
    const ServiceConfig& config() const { return config_; }

private:
    auth::Session require(const std::string& token, std::optional<auth::Role> role) const;
    match::MatchOptions match_options() const;
    void persist(const CatalogSnapshot& snapshot) const;

    ServiceConfig config_;
    std::unique_ptr<Catalog> catalog_;
    auth::CredentialStore credentials_;
    auth::TokenIssuer tokens_;
    response::Templates templates_;
    std::unique_ptr<QueryLog> log_;
    auth::Clock clock_;
};

/// The CLI query path: the same pipeline the service runs, minus auth and log.
response::RenderedResponse run_query(const CatalogSnapshot& snapshot, const std::string& query_text,
                                     const response::Templates& templates = response::Templates::defaults(),
                                     const match::MatchOptions& options = {});

/// HTTP front end. Routes: POST /login, POST /query, POST /providers,
/// GET /schema, GET /log, GET /health.
class HttpServer {
public:
    explicit HttpServer(Service& service);
    ~HttpServer();

    /// Binds and serves until stop(); port 0 picks a free port.
    bool listen(const std::string& host, int port);
    /// Binds without serving; returns the bound port or -1.
    int bind(const std::string& host, int port);
    bool serve();
    void stop();
    bool running() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct BenchRow {
    std::int64_t query_size = 0;
    double translation_ms = 0.0;
    double solve_ms = 0.0;
};

struct BenchOptions {
    int repetitions = 5;
    std::size_t providers = 20;
    std::uint64_t seed = 7;
};

/// Synthetic attributes whose spans sum to `query_size`: full [1,100]
/// attributes plus one remainder attribute.
std::vector<AttributeSchema> bench_schema(std::int64_t query_size);

/// Per size: a seeded catalog and a conjunction of `>=` atoms over every
/// attribute, run `repetitions` times; medians reported. Relaxation is off.
std::vector<BenchRow> run_bench(const std::vector<std::int64_t>& sizes, const BenchOptions& options = {});
std::string bench_csv(const std::vector<BenchRow>& rows);

}  // namespace carematch::service
