#include "carematch/service.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "carematch/error.hpp"
#include "carematch/query.hpp"

namespace carematch::service {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string resolve(const std::string& base, const std::string& path) {
    if (path.empty() || fs::path(path).is_absolute()) return path;
    return (fs::path(base) / path).lexically_normal().string();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io-error", "cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

ServiceConfig ServiceConfig::from_json(const json& doc, const std::string& base_dir) {
    ServiceConfig c;
    c.host = doc.value("host", c.host);
    c.port = doc.value("port", c.port);
    c.catalog_path = resolve(base_dir, doc.value("catalog_path", c.catalog_path));
    c.state_dir = resolve(base_dir, doc.value("state_dir", c.state_dir));
    c.credentials_path = resolve(base_dir, doc.value("credentials_path", c.credentials_path));
    c.templates_path = resolve(base_dir, doc.value("templates_path", c.templates_path));
    c.token_secret = doc.value("token_secret", c.token_secret);
    c.token_ttl_seconds = doc.value("token_ttl_seconds", c.token_ttl_seconds);
    if (doc.contains("bench")) {
        const auto& b = doc.at("bench");
        c.bench_sizes = b.value("sizes", c.bench_sizes);
        c.bench_reps = b.value("reps", c.bench_reps);
    }
    c.solver_seed = doc.value("solver_seed", c.solver_seed);
    if (c.port < 0 || c.port > 65535) throw Error("invalid-config", "port out of range");
    if (c.token_ttl_seconds <= 0) throw Error("invalid-config", "token_ttl_seconds must be positive");
    return c;
}

ServiceConfig ServiceConfig::load(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw Error("invalid-config", path + ": " + e.what());
    }
    auto base = fs::path(path).parent_path().string();
    return from_json(doc, base.empty() ? "." : base);
}

json ServiceConfig::to_json() const {
    return json{{"host", host},
                {"port", port},
                {"catalog_path", catalog_path},
                {"state_dir", state_dir},
                {"credentials_path", credentials_path},
                {"templates_path", templates_path},
                {"token_secret", token_secret},
                {"token_ttl_seconds", token_ttl_seconds},
                {"bench", json{{"sizes", bench_sizes}, {"reps", bench_reps}}},
                {"solver_seed", solver_seed}};
}

json to_json(const QueryLogEntry& e) {
    return json{{"id", e.id},
                {"username", e.username},
                {"query_text", e.query_text},
                {"snapshot_version", e.snapshot_version},
                {"timestamp", e.timestamp},
                {"match_count", e.match_count},
                {"relaxation_count", e.relaxation_count},
                {"translation_ms", e.translation_ms},
                {"solve_ms", e.solve_ms}};
}

QueryLogEntry log_entry_from_json(const json& d) {
    QueryLogEntry e;
    e.id = d.at("id").get<std::uint64_t>();
    e.username = d.at("username").get<std::string>();
    e.query_text = d.at("query_text").get<std::string>();
    e.snapshot_version = d.at("snapshot_version").get<std::uint64_t>();
    e.timestamp = d.at("timestamp").get<std::int64_t>();
    e.match_count = d.at("match_count").get<std::size_t>();
    e.relaxation_count = d.at("relaxation_count").get<std::size_t>();
    e.translation_ms = d.at("translation_ms").get<double>();
    e.solve_ms = d.at("solve_ms").get<double>();
    return e;
}

QueryLog::QueryLog(std::string path) : path_(std::move(path)) {
    std::ifstream in(path_);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            entries_.push_back(log_entry_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            // A torn final line from a crash is dropped; anything else is corruption.
            if (in.peek() == EOF) break;
            throw Error("corrupt-log", path_ + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

QueryLogEntry QueryLog::append(QueryLogEntry entry) {
    std::lock_guard lock(mutex_);
    entry.id = entries_.empty() ? 1 : entries_.back().id + 1;
    std::ofstream out(path_, std::ios::app);
    if (!out) throw Error("io-error", "cannot append to " + path_);
    out << to_json(entry).dump() << '\n';
    out.flush();
    if (!out) throw Error("io-error", "write failed on " + path_);
    entries_.push_back(entry);
    return entry;
}

std::vector<QueryLogEntry> QueryLog::entries(std::optional<std::size_t> limit) const {
    std::lock_guard lock(mutex_);
    std::size_t n = limit ? std::min(*limit, entries_.size()) : entries_.size();
    return {entries_.end() - static_cast<std::ptrdiff_t>(n), entries_.end()};
}

std::uint64_t QueryLog::next_id() const {
    std::lock_guard lock(mutex_);
    return entries_.empty() ? 1 : entries_.back().id + 1;
}

response::RenderedResponse run_query(const CatalogSnapshot& snapshot, const std::string& query_text,
                                     const response::Templates& templates, const match::MatchOptions& options) {
    auto ast = query::validate(query::parse_query(query_text), snapshot.schemas);
    auto report = match::match_query(ast, snapshot, options, query_text);
    return response::render(report, snapshot.schemas, templates);
}

namespace {

std::string make_secret(const std::string& configured) {
    if (configured.empty()) return auth::random_bytes(32);
    return auth::hex_decode(configured);
}

std::vector<CatalogSnapshot> stored_snapshots(const fs::path& dir) {
    static const std::regex name(R"(v([0-9]+)\.json)");
    std::vector<std::pair<std::uint64_t, fs::path>> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::smatch m;
        auto file = entry.path().filename().string();
        if (std::regex_match(file, m, name)) files.emplace_back(std::stoull(m[1].str()), entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<CatalogSnapshot> out;
    for (const auto& [v, p] : files) {
        try {
            out.push_back(snapshot_from_json(json::parse(read_file(p.string()))));
        } catch (const json::exception& e) {
            throw CatalogError("parse-error", p.string() + ": " + e.what());
        }
        if (out.back().version != v) throw CatalogError("corrupt-snapshot", p.string() + ": version mismatch");
    }
    return out;
}

}  // namespace

Service::Service(ServiceConfig config, auth::Clock clock)
    : config_(std::move(config)),
      tokens_(make_secret(config_.token_secret), config_.token_ttl_seconds, clock),
      templates_(config_.templates_path.empty() ? response::Templates::defaults()
                                                : response::Templates::load(config_.templates_path)),
      clock_(std::move(clock)) {
    fs::path state(config_.state_dir);
    fs::create_directories(state / "snapshots");

    auto stored = stored_snapshots(state / "snapshots");
    if (!stored.empty()) {
        catalog_ = std::make_unique<Catalog>(stored.front().schemas);
        for (auto& s : stored) {
            if (s.version > 0) catalog_->restore(std::move(s));
        }
    } else {
        catalog_ = std::make_unique<Catalog>();
        if (!config_.catalog_path.empty()) persist(*catalog_->ingest_text(read_file(config_.catalog_path)));
    }

    if (config_.credentials_path.empty()) config_.credentials_path = (state / "credentials.json").string();
    if (fs::exists(config_.credentials_path)) credentials_ = auth::CredentialStore::load(config_.credentials_path);

    log_ = std::make_unique<QueryLog>((state / "queries.jsonl").string());
}

void Service::persist(const CatalogSnapshot& snapshot) const {
    auto path = fs::path(config_.state_dir) / "snapshots" / ("v" + std::to_string(snapshot.version) + ".json");
    auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw Error("io-error", "cannot write " + tmp);
        out << carematch::to_json(snapshot).dump() << '\n';
    }
    fs::rename(tmp, path);
}

auth::Session Service::require(const std::string& token, std::optional<auth::Role> role) const {
    auto session = tokens_.verify(token);
    if (role && session.role != *role) {
        throw AuthError("forbidden", "role " + std::string(auth::to_string(session.role)) + " may not do this");
    }
    return session;
}

match::MatchOptions Service::match_options() const {
    match::MatchOptions options;
    options.solver.seed = config_.solver_seed;
    return options;
}

std::string Service::login(const std::string& username, const std::string& password) const {
    return tokens_.issue(username, credentials_.verify(username, password));
}

response::RenderedResponse Service::submit_query(const std::string& token, const std::string& query_text) {
    auto session = require(token, std::nullopt);
    auto snapshot = catalog_->snapshot();
    auto rendered = run_query(*snapshot, query_text, templates_, match_options());
    const auto& payload = rendered.machine_payload;
    QueryLogEntry entry;
    entry.username = session.username;
    entry.query_text = query_text;
    entry.snapshot_version = snapshot->version;
    entry.timestamp = clock_();
    entry.match_count = payload.at("matches").size();
    entry.relaxation_count = payload.at("relaxations").size();
    entry.translation_ms = payload.at("timings").at("translation_ms").get<double>();
    entry.solve_ms = payload.at("timings").at("solve_ms").get<double>();
    log_->append(entry);
    return rendered;
}

std::uint64_t Service::ingest(const std::string& token, const std::string& document) {
    require(token, auth::Role::provider_admin);
    auto snapshot = catalog_->ingest_text(document);
    persist(*snapshot);
    return snapshot->version;
}

json Service::schema() const {
    json out = json::array();
    for (const auto& s : catalog_->schemas()) out.push_back(carematch::to_json(s));
    return out;
}

std::vector<QueryLogEntry> Service::log(const std::string& token, std::optional<std::size_t> limit) const {
    require(token, auth::Role::provider_admin);
    return log_->entries(limit);
}

json Service::health() const {
    auto snap = catalog_->snapshot();
    return json{{"status", "ok"}, {"snapshot_version", snap->version}, {"providers", snap->providers.size()}};
}

std::vector<ReplayMismatch> Service::replay() const {
    std::vector<ReplayMismatch> out;
    for (const auto& e : log_->entries()) {
        auto snap = catalog_->snapshot_at(e.snapshot_version);
        if (!snap) {
            throw CatalogError("unknown-version", "snapshot " + std::to_string(e.snapshot_version) + " is not stored");
        }
        auto ast = query::validate(query::parse_query(e.query_text), snap->schemas);
        auto report = match::match_query(ast, *snap, match_options(), e.query_text);
        if (report.matches.size() != e.match_count) out.push_back({e.id, e.match_count, report.matches.size()});
    }
    return out;
}

}  // namespace carematch::service
