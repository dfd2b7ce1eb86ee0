#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace carematch::auth {

enum class Role { patient, provider_admin, analyst };

std::string_view to_string(Role role);
Role parse_role(std::string_view text);

struct UserCredential {
    std::string username;
    std::string salt;  // hex
    std::string hash;  // hex, PBKDF2-HMAC-SHA256
    std::uint32_t iterations = 0;
    Role role = Role::patient;

    bool operator==(const UserCredential&) const = default;
};

/// Seconds since the epoch. Injectable so expiry can be tested.
using Clock = std::function<std::int64_t()>;
std::int64_t system_seconds();

std::string hex_encode(std::string_view bytes);
std::string hex_decode(std::string_view hex);
std::string random_bytes(std::size_t n);

class CredentialStore {
public:
    static constexpr std::uint32_t default_iterations = 60000;

    static CredentialStore load(const std::string& path);
    static CredentialStore from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;
    void save(const std::string& path) const;

    /// Throws AuthError("duplicate-user") when the name is taken.
    void add_user(const std::string& username, const std::string& password, Role role,
                  std::uint32_t iterations = default_iterations);

    /// Role on success; throws AuthError("invalid-credentials") otherwise,
    /// with the same error and comparable work for unknown users.
    Role verify(const std::string& username, const std::string& password) const;

    std::size_t size() const { return users_.size(); }

private:
    std::map<std::string, UserCredential> users_;
};

struct Session {
    std::string username;
    Role role = Role::patient;
    std::int64_t expires_at = 0;
};

/// Stateless bearer tokens: hex(payload) "." hex(HMAC-SHA256(secret, payload)).
class TokenIssuer {
public:
    TokenIssuer(std::string secret, std::int64_t ttl_seconds, Clock clock = system_seconds);

    std::string issue(const std::string& username, Role role) const;
    /// Throws AuthError "unauthorized" (malformed or forged) or "token-expired".
    Session verify(std::string_view token) const;

private:
    std::string mac(std::string_view payload) const;

    std::string secret_;
    std::int64_t ttl_;
    Clock clock_;
};

}  // namespace carematch::auth
