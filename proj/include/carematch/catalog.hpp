#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace carematch {

enum class AttributeKind { boolean, integer_range };

/// One requirement attribute. Boolean attributes are encoded exactly like
/// an integer range [0, 1].
struct AttributeSchema {
    std::string name;
    AttributeKind kind = AttributeKind::integer_range;
    std::int64_t lo = 0;
    std::int64_t hi = 0;
    std::string description;

    /// Number of distinct values, hi - lo + 1.
    std::uint64_t span() const { return static_cast<std::uint64_t>(hi - lo) + 1; }

    bool operator==(const AttributeSchema&) const = default;
};

enum class ProviderKind { hospital, diagnostic_center, insurance_org };

struct ProviderRecord {
    std::string provider_id;
    std::string display_name;
    ProviderKind kind = ProviderKind::hospital;
    std::map<std::string, std::int64_t> values;

    bool operator==(const ProviderRecord&) const = default;
};

struct CatalogSnapshot {
    std::uint64_t version = 0;
    std::vector<AttributeSchema> schemas;
    std::vector<ProviderRecord> providers;

    const AttributeSchema* find_schema(std::string_view name) const;
    const ProviderRecord* find_provider(std::string_view id) const;
};

using SnapshotPtr = std::shared_ptr<const CatalogSnapshot>;

struct Violation {
    std::string attribute;
    std::string reason;  // "missing", "out-of-range", "unknown-attribute"

    bool operator==(const Violation&) const = default;
};

std::string_view to_string(AttributeKind kind);
std::string_view to_string(ProviderKind kind);
AttributeKind parse_attribute_kind(std::string_view text);
ProviderKind parse_provider_kind(std::string_view text);

/// The twelve requirement attributes. Percent-style attributes are
/// [0,100]; the insurance tie-up and IT-tool attributes are boolean.
std::vector<AttributeSchema> default_schema();

/// Parses and validates a schema document (JSON array of
/// {"name","kind","lo","hi","description"}).
std::vector<AttributeSchema> load_schema(const nlohmann::json& doc);
std::vector<AttributeSchema> load_schema_text(std::string_view text);
void validate_schemas(const std::vector<AttributeSchema>& schemas);

/// Violations are returned, never thrown. Empty result means the record is valid.
std::vector<Violation> validate_record(const ProviderRecord& record,
                                       const std::vector<AttributeSchema>& schemas);

/// Provider documents. Neither parser validates values against the schema;
/// that happens in Catalog::ingest. The CSV parser needs the schema only to
/// reject unknown columns.
std::vector<ProviderRecord> parse_providers_json(const nlohmann::json& doc);
std::vector<ProviderRecord> parse_providers_csv(std::string_view text,
                                                const std::vector<AttributeSchema>& schemas);
/// Sniffs JSON (leading '[' or '{') vs CSV.
std::vector<ProviderRecord> parse_providers(std::string_view text,
                                            const std::vector<AttributeSchema>& schemas);

nlohmann::json to_json(const AttributeSchema& schema);
nlohmann::json to_json(const ProviderRecord& record);
nlohmann::json to_json(const CatalogSnapshot& snapshot);
CatalogSnapshot snapshot_from_json(const nlohmann::json& doc);

/// Versioned, copy-on-write provider catalog. Readers grab an immutable
/// snapshot; a single writer publishes new versions.
class Catalog {
public:
    explicit Catalog(std::vector<AttributeSchema> schemas = default_schema());

    /// Validates every record and publishes a snapshot with version + 1 that
    /// replaces the provider set. Throws CatalogError on the first violation.
    SnapshotPtr ingest(std::vector<ProviderRecord> records);
    SnapshotPtr ingest_text(std::string_view document);

    SnapshotPtr snapshot() const;
    /// Earlier versions stay addressable so logged queries can be replayed.
    SnapshotPtr snapshot_at(std::uint64_t version) const;

    const std::vector<AttributeSchema>& schemas() const { return schemas_; }

    void save(const std::string& path) const;
    /// Restores a persisted snapshot, keeping its version number.
    static std::unique_ptr<Catalog> load(const std::string& path);
    /// Republishes a persisted snapshot under its own version, which must be
    /// newer than the current one.
    SnapshotPtr restore(CatalogSnapshot snapshot);

private:
    void validate_batch(const std::vector<ProviderRecord>& records) const;
    SnapshotPtr publish(std::vector<ProviderRecord> records, std::uint64_t version);

    std::vector<AttributeSchema> schemas_;
    mutable std::mutex publish_mutex_;
    std::mutex writer_mutex_;
    SnapshotPtr current_;
    std::map<std::uint64_t, SnapshotPtr> history_;
};

}  // namespace carematch
