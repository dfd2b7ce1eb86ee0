#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "carematch/catalog.hpp"

namespace carematch::testing {

/// A record with every attribute of `schemas` set to its lower bound, then
/// patched by `values`.
inline ProviderRecord make_record(const std::string& id, const std::map<std::string, std::int64_t>& values,
                                  const std::vector<AttributeSchema>& schemas = default_schema(),
                                  ProviderKind kind = ProviderKind::hospital) {
    ProviderRecord r;
    r.provider_id = id;
    r.display_name = "Provider " + id;
    r.kind = kind;
    for (const auto& s : schemas) r.values[s.name] = s.lo;
    for (const auto& [k, v] : values) r.values[k] = v;
    return r;
}

inline CatalogSnapshot make_snapshot(std::vector<ProviderRecord> providers,
                                     std::vector<AttributeSchema> schemas = default_schema(),
                                     std::uint64_t version = 1) {
    CatalogSnapshot s;
    s.version = version;
    s.schemas = std::move(schemas);
    s.providers = std::move(providers);
    return s;
}

inline ProviderRecord random_record(std::mt19937_64& rng, const std::string& id,
                                    const std::vector<AttributeSchema>& schemas) {
    ProviderRecord r;
    r.provider_id = id;
    r.display_name = "Provider " + id;
    for (const auto& s : schemas) r.values[s.name] = std::uniform_int_distribution<std::int64_t>(s.lo, s.hi)(rng);
    return r;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() /
               ("carematch-" + tag + "-" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace carematch::testing
