#include "carematch/auth.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>
#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>

#include "carematch/error.hpp"

namespace carematch::auth {

using nlohmann::json;

std::string_view to_string(Role role) {
    switch (role) {
        case Role::patient: return "patient";
        case Role::provider_admin: return "provider_admin";
        case Role::analyst: return "analyst";
    }
    return "patient";
}

Role parse_role(std::string_view text) {
    if (text == "patient") return Role::patient;
    if (text == "provider_admin") return Role::provider_admin;
    if (text == "analyst") return Role::analyst;
    throw AuthError("unknown-role", "unknown role '" + std::string(text) + "'");
}

std::int64_t system_seconds() {
    return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

std::string hex_encode(std::string_view bytes) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (unsigned char c : bytes) {
        out.push_back(digits[c >> 4]);
        out.push_back(digits[c & 15]);
    }
    return out;
}

std::string hex_decode(std::string_view hex) {
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        return -1;
    };
    if (hex.size() % 2 != 0) throw AuthError("bad-hex", "odd-length hex string");
    std::string out;
    out.reserve(hex.size() / 2);
    for (std::size_t i = 0; i < hex.size(); i += 2) {
        int hi = nibble(hex[i]), lo = nibble(hex[i + 1]);
        if (hi < 0 || lo < 0) throw AuthError("bad-hex", "invalid hex digit");
        out.push_back(static_cast<char>(hi * 16 + lo));
    }
    return out;
}

std::string random_bytes(std::size_t n) {
    std::string out(n, '\0');
    if (RAND_bytes(reinterpret_cast<unsigned char*>(out.data()), static_cast<int>(n)) != 1) {
        throw AuthError("rng-failure", "RAND_bytes failed");
    }
    return out;
}

namespace {

std::string pbkdf2(const std::string& password, const std::string& salt, std::uint32_t iterations) {
    std::string out(32, '\0');
    if (PKCS5_PBKDF2_HMAC(password.data(), static_cast<int>(password.size()),
                          reinterpret_cast<const unsigned char*>(salt.data()), static_cast<int>(salt.size()),
                          static_cast<int>(iterations), EVP_sha256(), static_cast<int>(out.size()),
                          reinterpret_cast<unsigned char*>(out.data())) != 1) {
        throw AuthError("kdf-failure", "PBKDF2 failed");
    }
    return out;
}

bool same_bytes(std::string_view a, std::string_view b) {
    return a.size() == b.size() && CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

AuthError invalid_credentials() { return AuthError("invalid-credentials", "invalid username or password"); }

}  // namespace

CredentialStore CredentialStore::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw AuthError("io-error", "cannot read " + path);
    try {
        return from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw AuthError("parse-error", path + ": " + e.what());
    }
}

CredentialStore CredentialStore::from_json(const json& doc) {
    CredentialStore store;
    for (const auto& u : doc.at("users")) {
        UserCredential c{u.at("username").get<std::string>(), u.at("salt").get<std::string>(),
                         u.at("hash").get<std::string>(), u.at("iterations").get<std::uint32_t>(),
                         parse_role(u.at("role").get<std::string>())};
        if (!store.users_.emplace(c.username, c).second) {
            throw AuthError("duplicate-user", "duplicate user '" + c.username + "'");
        }
    }
    return store;
}

json CredentialStore::to_json() const {
    json users = json::array();
    for (const auto& [name, c] : users_) {
        users.push_back(json{{"username", c.username},
                             {"salt", c.salt},
                             {"hash", c.hash},
                             {"iterations", c.iterations},
                             {"role", to_string(c.role)}});
    }
    return json{{"users", users}};
}

void CredentialStore::save(const std::string& path) const {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw AuthError("io-error", "cannot write " + tmp);
        out << to_json().dump(2) << '\n';
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw AuthError("io-error", "cannot move " + tmp);
}

void CredentialStore::add_user(const std::string& username, const std::string& password, Role role,
                               std::uint32_t iterations) {
    if (username.empty()) throw AuthError("invalid-username", "empty username");
    if (users_.count(username)) throw AuthError("duplicate-user", "user '" + username + "' exists");
    auto salt = random_bytes(16);
    users_[username] = UserCredential{username, hex_encode(salt), hex_encode(pbkdf2(password, salt, iterations)),
                                      iterations, role};
}

Role CredentialStore::verify(const std::string& username, const std::string& password) const {
    auto it = users_.find(username);
    if (it == users_.end()) {
        // Burn the same work so unknown names are not distinguishable by time.
        pbkdf2(password, std::string(16, '\0'), default_iterations);
        throw invalid_credentials();
    }
    const auto& c = it->second;
    auto expected = hex_decode(c.hash);
    if (!same_bytes(pbkdf2(password, hex_decode(c.salt), c.iterations), expected)) throw invalid_credentials();
    return c.role;
}

TokenIssuer::TokenIssuer(std::string secret, std::int64_t ttl_seconds, Clock clock)
    : secret_(std::move(secret)), ttl_(ttl_seconds), clock_(std::move(clock)) {
    if (secret_.empty()) throw AuthError("invalid-secret", "token secret must not be empty");
}

std::string TokenIssuer::mac(std::string_view payload) const {
    unsigned char out[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    HMAC(EVP_sha256(), secret_.data(), static_cast<int>(secret_.size()),
         reinterpret_cast<const unsigned char*>(payload.data()), payload.size(), out, &len);
    return std::string(reinterpret_cast<char*>(out), len);
}

std::string TokenIssuer::issue(const std::string& username, Role role) const {
    auto payload = json{{"u", username}, {"r", to_string(role)}, {"exp", clock_() + ttl_}}.dump();
    return hex_encode(payload) + "." + hex_encode(mac(payload));
}

Session TokenIssuer::verify(std::string_view token) const {
    auto unauthorized = [] { return AuthError("unauthorized", "missing or invalid token"); };
    auto dot = token.find('.');
    if (dot == std::string_view::npos) throw unauthorized();
    std::string payload, tag;
    try {
        payload = hex_decode(token.substr(0, dot));
        tag = hex_decode(token.substr(dot + 1));
    } catch (const AuthError&) {
        throw unauthorized();
    }
    if (!same_bytes(tag, mac(payload))) throw unauthorized();
    Session s;
    try {
        auto doc = json::parse(payload);
        s.username = doc.at("u").get<std::string>();
        s.role = parse_role(doc.at("r").get<std::string>());
        s.expires_at = doc.at("exp").get<std::int64_t>();
    } catch (const std::exception&) {
        throw unauthorized();
    }
    if (clock_() >= s.expires_at) throw AuthError("token-expired", "token expired");
    return s;
}

}  // namespace carematch::auth
