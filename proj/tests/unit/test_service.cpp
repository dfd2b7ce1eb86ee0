#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "carematch/auth.hpp"
#include "carematch/error.hpp"
#include "carematch/service.hpp"
#include "fixtures.hpp"

using namespace carematch;
using namespace carematch::service;
using carematch::auth::Role;
using carematch::testing::make_record;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

template <typename F>
std::string error_code(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return "<none>";
}

std::string providers_json(const std::vector<ProviderRecord>& recs) {
    json doc = json::array();
    for (const auto& r : recs) doc.push_back(to_json(r));
    return doc.dump();
}

std::vector<ProviderRecord> demo_records() {
    return {make_record("H1", {{"patient_centered", 100}, {"clinical_standards", 70}, {"tied_up_with_insurance", 1}}),
            make_record("H2", {{"patient_centered", 40}, {"clinical_standards", 90}, {"tied_up_with_insurance", 1}}),
            make_record("H3", {{"patient_centered", 100}, {"clinical_standards", 65}})};
}

struct FakeClock {
    std::shared_ptr<std::int64_t> now = std::make_shared<std::int64_t>(1'000'000);
    auth::Clock fn() const {
        auto p = now;
        return [p] { return *p; };
    }
};

// A state dir with credentials for one user per role and a 3-provider catalog.
struct Env {
    fs::path dir = carematch::testing::scratch_dir("service");
    ServiceConfig config;
    FakeClock clock;

    Env() {
        auth::CredentialStore store;
        store.add_user("pat", "pw-pat", Role::patient, 1000);
        store.add_user("adm", "pw-adm", Role::provider_admin, 1000);
        store.add_user("ana", "pw-ana", Role::analyst, 1000);
        store.save((dir / "creds.json").string());
        std::ofstream((dir / "catalog.json")) << providers_json(demo_records());
        config.catalog_path = (dir / "catalog.json").string();
        config.state_dir = (dir / "state").string();
        config.credentials_path = (dir / "creds.json").string();
        config.token_secret = "00112233445566778899aabbccddeeff";
        config.token_ttl_seconds = 600;
    }
    ~Env() { fs::remove_all(dir); }

    std::unique_ptr<Service> start() const { return std::make_unique<Service>(config, clock.fn()); }
};

json strip_timings(json payload) {
    payload.erase("timings");
    payload.erase("stats");
    return payload;
}

}  // namespace

TEST_CASE("hex helpers") {
    std::string bytes{"\x00\x7f\xff\x10", 4};
    CHECK(auth::hex_encode(bytes) == "007fff10");
    CHECK(auth::hex_decode("007fff10") == bytes);
    CHECK(error_code([] { auth::hex_decode("abc"); }) == "bad-hex");
    CHECK(error_code([] { auth::hex_decode("zz"); }) == "bad-hex");
}

TEST_CASE("credential store") {
    auth::CredentialStore store;
    store.add_user("pat", "secret", Role::patient, 1000);
    store.add_user("adm", "other", Role::provider_admin, 1000);
    CHECK(store.verify("pat", "secret") == Role::patient);
    CHECK(store.verify("adm", "other") == Role::provider_admin);
    CHECK(error_code([&] { store.verify("pat", "wrong"); }) == "invalid-credentials");
    CHECK(error_code([&] { store.verify("nobody", "secret"); }) == "invalid-credentials");
    CHECK(error_code([&] { store.add_user("pat", "x", Role::analyst, 1000); }) == "duplicate-user");

    SUBCASE("persisted file holds no clear passwords and round trips") {
        auto dir = carematch::testing::scratch_dir("creds");
        auto path = (dir / "c.json").string();
        store.save(path);
        std::ifstream in(path);
        std::string text((std::istreambuf_iterator<char>(in)), {});
        CHECK(text.find("secret") == std::string::npos);
        CHECK(text.find("other") == std::string::npos);
        auto loaded = auth::CredentialStore::load(path);
        CHECK(loaded.to_json() == store.to_json());
        CHECK(loaded.verify("pat", "secret") == Role::patient);
        fs::remove_all(dir);
    }
    SUBCASE("same password gets distinct salts") {
        store.add_user("twin", "secret", Role::patient, 1000);
        auto users = store.to_json()["users"];
        std::set<std::string> hashes;
        for (const auto& u : users) hashes.insert(u["hash"].get<std::string>());
        CHECK(hashes.size() == users.size());
    }
}

TEST_CASE("tokens") {
    FakeClock clock;
    auth::TokenIssuer issuer("k3y", 60, clock.fn());
    auto token = issuer.issue("pat", Role::analyst);
    auto s = issuer.verify(token);
    CHECK(s.username == "pat");
    CHECK(s.role == Role::analyst);
    CHECK(s.expires_at == *clock.now + 60);

    SUBCASE("expiry") {
        *clock.now += 59;
        CHECK_NOTHROW(issuer.verify(token));
        *clock.now += 1;
        CHECK(error_code([&] { issuer.verify(token); }) == "token-expired");
    }
    SUBCASE("tampering and garbage") {
        auto forged = token;
        forged[forged.find('.') - 2] ^= 1;
        CHECK(error_code([&] { issuer.verify(forged); }) == "unauthorized");
        CHECK(error_code([&] { issuer.verify(""); }) == "unauthorized");
        CHECK(error_code([&] { issuer.verify("not-a-token"); }) == "unauthorized");
        CHECK(error_code([&] { issuer.verify("zz.zz"); }) == "unauthorized");
        auth::TokenIssuer other("other", 60, clock.fn());
        CHECK(error_code([&] { other.verify(token); }) == "unauthorized");
    }
    SUBCASE("role cannot be swapped without the key") {
        auto dot = token.find('.');
        auto payload = json::parse(auth::hex_decode(token.substr(0, dot)));
        payload["r"] = "provider_admin";
        auto forged = auth::hex_encode(payload.dump()) + token.substr(dot);
        CHECK(error_code([&] { issuer.verify(forged); }) == "unauthorized");
    }
}

TEST_CASE("config") {
    auto c = ServiceConfig::from_json(json{{"catalog_path", "c.csv"}, {"state_dir", "/abs/state"}, {"port", 9000}}, "/etc/cm");
    CHECK(c.catalog_path == "/etc/cm/c.csv");
    CHECK(c.state_dir == "/abs/state");
    CHECK(c.port == 9000);
    CHECK(c.bench_sizes.size() == 9);
    CHECK(error_code([] { ServiceConfig::from_json(json{{"port", 70000}}); }) == "invalid-config");
    CHECK(ServiceConfig::from_json(c.to_json(), "/elsewhere").to_json() == c.to_json());
}

TEST_CASE("service operations") {
    Env env;
    auto svc = env.start();
    CHECK(svc->health()["snapshot_version"] == 1);
    CHECK(svc->schema().size() == 12);

    auto pat = svc->login("pat", "pw-pat");
    auto adm = svc->login("adm", "pw-adm");
    CHECK(error_code([&] { svc->login("pat", "pw-adm"); }) == "invalid-credentials");

    SUBCASE("query") {
        auto r = svc->submit_query(pat, "patient_centered >= 100 & clinical_standards >= 60 & tied_up_with_insurance");
        REQUIRE(r.machine_payload["matches"].size() == 1);
        CHECK(r.machine_payload["matches"][0]["provider_id"] == "H1");
        auto log = svc->log(adm, std::nullopt);
        REQUIRE(log.size() == 1);
        CHECK(log[0].id == 1);
        CHECK(log[0].username == "pat");
        CHECK(log[0].match_count == 1);
        CHECK(log[0].snapshot_version == 1);
        CHECK(log[0].timestamp == *env.clock.now);
    }
    SUBCASE("broken query carries an offset and is not logged") {
        try {
            svc->submit_query(pat, "patient_centered >= 100 &");
            FAIL("expected QueryError");
        } catch (const QueryError& e) {
            CHECK(e.offset().has_value());
        }
        CHECK(svc->log(adm, std::nullopt).empty());
    }
    SUBCASE("contradiction yields relaxations") {
        auto r = svc->submit_query(pat, "tied_up_with_insurance & !tied_up_with_insurance");
        CHECK(r.machine_payload["matches"].empty());
        CHECK(r.machine_payload["relaxations"].size() == 2);
        CHECK(svc->log(adm, std::nullopt)[0].relaxation_count == 2);
    }
    SUBCASE("ingest") {
        auto recs = demo_records();
        recs.push_back(make_record("H4", {{"patient_centered", 100}, {"clinical_standards", 99}, {"tied_up_with_insurance", 1}}));
        CHECK(svc->ingest(adm, providers_json(recs)) == 2);
        CHECK(svc->health()["providers"] == 4);
        CHECK(error_code([&] { svc->ingest(pat, providers_json(recs)); }) == "forbidden");
        recs.back().values["clinical_standards"] = 101;
        try {
            svc->ingest(adm, providers_json(recs));
            FAIL("expected CatalogError");
        } catch (const CatalogError& e) {
            CHECK(e.code() == "out-of-range");
            CHECK(e.row() == 4);
            CHECK(e.column() == "clinical_standards");
        }
        CHECK(svc->health()["snapshot_version"] == 2);
    }
    SUBCASE("expired token") {
        *env.clock.now += env.config.token_ttl_seconds;
        CHECK(error_code([&] { svc->submit_query(pat, "ANY(low_cost)"); }) == "token-expired");
    }
    SUBCASE("log limit and monotonic ids") {
        for (int i = 0; i < 5; ++i) svc->submit_query(pat, "low_cost >= " + std::to_string(i));
        auto all = svc->log(adm, std::nullopt);
        REQUIRE(all.size() == 5);
        for (std::size_t i = 1; i < all.size(); ++i) CHECK(all[i].id == all[i - 1].id + 1);
        auto last2 = svc->log(adm, 2);
        REQUIRE(last2.size() == 2);
        CHECK(last2[1].id == 5);
        CHECK(svc->log(adm, 0).empty());
    }
}

TEST_CASE("role matrix over random operation sequences") {
    Env env;
    auto svc = env.start();
    std::map<Role, std::string> tokens{{Role::patient, svc->login("pat", "pw-pat")},
                                       {Role::provider_admin, svc->login("adm", "pw-adm")},
                                       {Role::analyst, svc->login("ana", "pw-ana")}};
    const std::vector<Role> roles{Role::patient, Role::provider_admin, Role::analyst};
    std::mt19937_64 rng(5);
    std::uint64_t version = 1;
    for (int step = 0; step < 60; ++step) {
        auto role = roles[rng() % roles.size()];
        const auto& token = tokens[role];
        bool admin = role == Role::provider_admin;
        switch (rng() % 3) {
            case 0: {
                auto code = error_code([&] { svc->ingest(token, providers_json(demo_records())); });
                if (admin) {
                    CHECK(code == "<none>");
                    ++version;
                } else {
                    CHECK(code == "forbidden");
                }
                break;
            }
            case 1:
                CHECK(error_code([&] { svc->log(token, 1); }) == (admin ? "<none>" : "forbidden"));
                break;
            default:
                CHECK(error_code([&] { svc->submit_query(token, "ANY(low_cost)"); }) == "<none>");
        }
        CHECK(svc->health()["snapshot_version"] == version);
    }
}

TEST_CASE("log replay and restart persistence") {
    Env env;
    std::mt19937_64 rng(17);
    const auto schemas = default_schema();
    std::vector<std::string> queries;
    json last_payload;
    {
        auto svc = env.start();
        auto pat = svc->login("pat", "pw-pat");
        auto adm = svc->login("adm", "pw-adm");
        for (int round = 0; round < 6; ++round) {
            std::vector<ProviderRecord> recs;
            for (int p = 0; p < 6; ++p) recs.push_back(carematch::testing::random_record(rng, "P" + std::to_string(p), schemas));
            svc->ingest(adm, providers_json(recs));
            for (int q = 0; q < 4; ++q) {
                auto text = "patient_centered >= " + std::to_string(rng() % 101) + " & (clinical_standards >= " +
                            std::to_string(rng() % 101) + " | tied_up_with_insurance)";
                queries.push_back(text);
                last_payload = svc->submit_query(pat, text).machine_payload;
            }
        }
        CHECK(svc->replay().empty());
    }
    auto again = env.start();
    CHECK(again->health()["snapshot_version"] == 7);
    auto adm = again->login("adm", "pw-adm");
    auto log = again->log(adm, std::nullopt);
    REQUIRE(log.size() == queries.size());
    for (std::size_t i = 0; i < log.size(); ++i) {
        CHECK(log[i].id == i + 1);
        CHECK(log[i].query_text == queries[i]);
    }
    CHECK(again->replay().empty());
    for (std::uint64_t v = 0; v <= 7; ++v) CHECK(again->catalog().snapshot_at(v) != nullptr);

    auto pat = again->login("pat", "pw-pat");
    auto payload = again->submit_query(pat, queries.back()).machine_payload;
    CHECK(strip_timings(payload) == strip_timings(last_payload));
    CHECK(again->log(adm, 1)[0].id == queries.size() + 1);
}

TEST_CASE("replay detects a doctored count") {
    Env env;
    {
        auto svc = env.start();
        svc->submit_query(svc->login("pat", "pw-pat"), "patient_centered >= 100");
    }
    auto path = fs::path(env.config.state_dir) / "queries.jsonl";
    std::ifstream in(path);
    auto entry = json::parse(std::string((std::istreambuf_iterator<char>(in)), {}));
    in.close();
    entry["match_count"] = 7;
    std::ofstream(path) << entry.dump() << "\n";
    auto mismatches = env.start()->replay();
    REQUIRE(mismatches.size() == 1);
    CHECK(mismatches[0].recorded == 7);
    CHECK(mismatches[0].replayed == 2);
}

TEST_CASE("query log tolerates a torn final line only") {
    auto dir = carematch::testing::scratch_dir("log");
    auto path = (dir / "q.jsonl").string();
    {
        QueryLog log(path);
        log.append(QueryLogEntry{0, "u", "ANY(low_cost)", 1, 5, 3, 0, 0.1, 0.2});
        log.append(QueryLogEntry{0, "u", "ANY(low_cost)", 1, 6, 3, 0, 0.1, 0.2});
    }
    std::ofstream(path, std::ios::app) << "{\"id\": 3, \"userna";
    {
        QueryLog log(path);
        CHECK(log.entries().size() == 2);
        CHECK(log.next_id() == 3);
    }
    std::ofstream(path, std::ios::app) << "\ngarbage\n{}\n";
    CHECK(error_code([&] { QueryLog log(path); }) == "corrupt-log");
    fs::remove_all(dir);
}

TEST_CASE("HTTP API") {
    Env env;
    auto svc = env.start();
    HttpServer server(*svc);
    int port = server.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    std::thread loop([&] { server.serve(); });
    while (!server.running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));

    httplib::Client client("127.0.0.1", port);
    auto login = [&](const std::string& u, const std::string& p) {
        return client.Post("/login", json{{"username", u}, {"password", p}}.dump(), "application/json");
    };
    auto res = login("pat", "pw-pat");
    REQUIRE(res);
    CHECK(res->status == 200);
    auto pat = json::parse(res->body)["token"].get<std::string>();
    auto adm = json::parse(login("adm", "pw-adm")->body)["token"].get<std::string>();
    httplib::Headers pat_h{{"Authorization", "Bearer " + pat}}, adm_h{{"Authorization", "Bearer " + adm}};

    CHECK(login("pat", "nope")->status == 401);
    CHECK(json::parse(login("ghost", "nope")->body)["error"] == "invalid-credentials");

    res = client.Post("/query", pat_h, json{{"query", "patient_centered >= 100"}}.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    auto body = json::parse(res->body);
    CHECK(body["machine_payload"]["matches"].size() == 2);
    CHECK(body["summary_text"].get<std::string>().rfind("2 providers", 0) == 0);

    res = client.Post("/query", pat_h, json{{"query", "patient_centered >= 1000"}}.dump(), "application/json");
    CHECK(res->status == 400);
    CHECK(json::parse(res->body)["error"] == "threshold-out-of-range");
    res = client.Post("/query", pat_h, json{{"query", "low_cost >= 5 $"}}.dump(), "application/json");
    CHECK(res->status == 400);
    CHECK(json::parse(res->body)["offset"] == 14);
    CHECK(client.Post("/query", json{{"query", "ANY(low_cost)"}}.dump(), "application/json")->status == 401);
    CHECK(client.Post("/query", pat_h, "not json", "application/json")->status == 400);

    auto csv_header = std::string("provider_id,display_name,kind");
    for (const auto& s : default_schema()) csv_header += "," + s.name;
    std::string row = "Z1,Zed,hospital";
    for (std::size_t i = 0; i < 12; ++i) row += ",1";
    CHECK(client.Post("/providers", pat_h, csv_header + "\n" + row + "\n", "text/csv")->status == 403);
    res = client.Post("/providers", adm_h, csv_header + "\n" + row + "\n", "text/csv");
    CHECK(res->status == 200);
    CHECK(json::parse(res->body)["version"] == 2);
    res = client.Post("/providers", adm_h, csv_header + "\n" + row + "\n" + "Z2,Y,hospital" + std::string(12, ',') + "\n", "text/csv");
    CHECK(res->status == 400);
    CHECK(json::parse(res->body)["row"] == 2);

    res = client.Get("/log?limit=1", adm_h);
    CHECK(res->status == 200);
    CHECK(json::parse(res->body)["entries"].size() == 1);
    CHECK(client.Get("/log", pat_h)->status == 403);
    CHECK(client.Get("/log?limit=x", adm_h)->status == 400);
    CHECK(json::parse(client.Get("/schema")->body).size() == 12);
    CHECK(json::parse(client.Get("/health")->body)["snapshot_version"] == 2);

    server.stop();
    loop.join();
}

TEST_CASE("bench harness") {
    SUBCASE("schema spans sum to the query size") {
        for (std::int64_t size : {100, 150, 200, 350, 1000, 2300, 4999, 5000}) {
            std::int64_t total = 0;
            for (const auto& s : bench_schema(size)) total += static_cast<std::int64_t>(s.span());
            CHECK(total == size);
            CHECK_NOTHROW(validate_schemas(bench_schema(size)));
        }
    }
    SUBCASE("single size, one repetition") {
        auto rows = run_bench({100}, BenchOptions{1, 5, 1});
        REQUIRE(rows.size() == 1);
        CHECK(rows[0].query_size == 100);
        CHECK(rows[0].translation_ms >= 0.0);
        CHECK(rows[0].solve_ms >= 0.0);
    }
    SUBCASE("the nine table sizes") {
        std::vector<std::int64_t> sizes{200, 350, 1000, 1500, 2300, 3000, 3500, 4000, 5000};
        auto rows = run_bench(sizes, BenchOptions{1, 5, 1});
        REQUIRE(rows.size() == 9);
        for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].query_size == sizes[i]);
        auto csv = bench_csv(rows);
        CHECK(csv.rfind("query_size,translation_ms,solve_ms\n", 0) == 0);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 10);
    }
    SUBCASE("sizes below 100 are rejected") { CHECK(error_code([] { run_bench({99}); }) == "invalid-size"); }
}
