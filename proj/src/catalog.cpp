#include "carematch/catalog.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <charconv>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "carematch/error.hpp"

namespace carematch {

using nlohmann::json;

const AttributeSchema* CatalogSnapshot::find_schema(std::string_view name) const {
    for (const auto& s : schemas) {
        if (s.name == name) return &s;
    }
    return nullptr;
}

const ProviderRecord* CatalogSnapshot::find_provider(std::string_view id) const {
    for (const auto& p : providers) {
        if (p.provider_id == id) return &p;
    }
    return nullptr;
}

std::string_view to_string(AttributeKind kind) {
    return kind == AttributeKind::boolean ? "boolean" : "integer-range";
}

std::string_view to_string(ProviderKind kind) {
    switch (kind) {
        case ProviderKind::hospital: return "hospital";
        case ProviderKind::diagnostic_center: return "diagnostic_center";
        case ProviderKind::insurance_org: return "insurance_org";
    }
    return "hospital";
}

AttributeKind parse_attribute_kind(std::string_view text) {
    if (text == "boolean") return AttributeKind::boolean;
    if (text == "integer-range" || text == "integer_range") return AttributeKind::integer_range;
    throw CatalogError("unknown-kind", "unknown attribute kind '" + std::string(text) + "'");
}

ProviderKind parse_provider_kind(std::string_view text) {
    if (text == "hospital") return ProviderKind::hospital;
    if (text == "diagnostic_center") return ProviderKind::diagnostic_center;
    if (text == "insurance_org") return ProviderKind::insurance_org;
    throw CatalogError("unknown-provider-kind", "unknown provider kind '" + std::string(text) + "'");
}

std::vector<AttributeSchema> default_schema() {
    auto pct = [](std::string name, std::string description) {
        return AttributeSchema{std::move(name), AttributeKind::integer_range, 0, 100,
                               std::move(description)};
    };
    auto flag = [](std::string name, std::string description) {
        return AttributeSchema{std::move(name), AttributeKind::boolean, 0, 1,
                               std::move(description)};
    };
    return {
        pct("high_quality_care", "High quality care score (%)"),
        pct("patient_centered", "Patient centered service (%)"),
        pct("min_length_of_stay", "Minimum length of stay at hospital (days)"),
        pct("low_readmission", "Low readmission statistics score (%)"),
        pct("adequate_staff", "Adequate staff as per the need (%)"),
        pct("low_cost", "Low cost score (%)"),
        pct("available_medical_services", "Available medical services (%)"),
        pct("reputed_physician", "Reputed physician score (%)"),
        pct("clinical_standards", "Clinical standards (%)"),
        flag("modern_it_tools", "Uses modern IT tools"),
        flag("tied_up_with_insurance", "Tied up with a good insurance agency"),
        pct("better_treatment_plan", "Better treatment plan score (%)"),
    };
}

namespace {

bool valid_identifier(const std::string& name) {
    static const std::regex pattern("[a-z][a-z0-9_]*");
    return std::regex_match(name, pattern);
}

std::int64_t parse_int_cell(std::string_view cell, std::size_t row, const std::string& column) {
    auto trimmed = cell;
    while (!trimmed.empty() && (trimmed.front() == ' ' || trimmed.front() == '\t')) trimmed.remove_prefix(1);
    while (!trimmed.empty() && (trimmed.back() == ' ' || trimmed.back() == '\t' || trimmed.back() == '\r'))
        trimmed.remove_suffix(1);
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(trimmed.data(), trimmed.data() + trimmed.size(), value);
    if (trimmed.empty() || ec != std::errc() || ptr != trimmed.data() + trimmed.size()) {
        throw CatalogError("not-an-integer",
                           "row " + std::to_string(row) + ", column '" + column +
                               "': expected integer, got '" + std::string(cell) + "'",
                           row, column);
    }
    return value;
}

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    cells.push_back(std::move(cur));
    return cells;
}

std::string trim(std::string s) {
    auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
    s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
    s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
    return s;
}

}  // namespace

void validate_schemas(const std::vector<AttributeSchema>& schemas) {
    std::set<std::string> seen;
    for (const auto& s : schemas) {
        if (!valid_identifier(s.name)) {
            throw CatalogError("invalid-name", "attribute name '" + s.name +
                                                   "' must match [a-z][a-z0-9_]*");
        }
        if (!seen.insert(s.name).second) {
            throw CatalogError("duplicate-name", "duplicate attribute '" + s.name + "'");
        }
        if (s.lo > s.hi) {
            throw CatalogError("malformed-range", "attribute '" + s.name + "' has lo " +
                                                      std::to_string(s.lo) + " > hi " +
                                                      std::to_string(s.hi));
        }
        if (s.kind == AttributeKind::boolean && (s.lo != 0 || s.hi != 1)) {
            throw CatalogError("malformed-range",
                               "boolean attribute '" + s.name + "' must have range [0,1]");
        }
    }
}

std::vector<AttributeSchema> load_schema(const json& doc) {
    if (!doc.is_array()) throw CatalogError("parse-error", "schema document must be a JSON array");
    std::vector<AttributeSchema> out;
    for (const auto& item : doc) {
        if (!item.is_object() || !item.contains("name") || !item.contains("kind")) {
            throw CatalogError("parse-error", "schema entries need \"name\" and \"kind\"");
        }
        AttributeSchema s;
        s.name = item.at("name").get<std::string>();
        s.kind = parse_attribute_kind(item.at("kind").get<std::string>());
        if (s.kind == AttributeKind::boolean) {
            s.lo = item.value("lo", std::int64_t{0});
            s.hi = item.value("hi", std::int64_t{1});
        } else {
            if (!item.contains("lo") || !item.contains("hi") || !item["lo"].is_number_integer() ||
                !item["hi"].is_number_integer()) {
                throw CatalogError("malformed-range",
                                   "integer-range attribute '" + s.name + "' needs integer lo/hi");
            }
            s.lo = item["lo"].get<std::int64_t>();
            s.hi = item["hi"].get<std::int64_t>();
        }
        s.description = item.value("description", std::string{});
        out.push_back(std::move(s));
    }
    validate_schemas(out);
    return out;
}

std::vector<AttributeSchema> load_schema_text(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw CatalogError("parse-error", e.what());
    }
    return load_schema(doc);
}

std::vector<Violation> validate_record(const ProviderRecord& record,
                                       const std::vector<AttributeSchema>& schemas) {
    std::vector<Violation> out;
    for (const auto& s : schemas) {
        auto it = record.values.find(s.name);
        if (it == record.values.end()) {
            out.push_back({s.name, "missing"});
        } else if (it->second < s.lo || it->second > s.hi) {
            out.push_back({s.name, "out-of-range"});
        }
    }
    for (const auto& [name, value] : record.values) {
        bool known = std::any_of(schemas.begin(), schemas.end(),
                                 [&](const AttributeSchema& s) { return s.name == name; });
        if (!known) out.push_back({name, "unknown-attribute"});
    }
    return out;
}

std::vector<ProviderRecord> parse_providers_json(const json& doc) {
    if (!doc.is_array()) throw CatalogError("parse-error", "provider document must be a JSON array");
    std::vector<ProviderRecord> out;
    std::size_t row = 0;
    for (const auto& item : doc) {
        ++row;
        if (!item.is_object() || !item.contains("provider_id")) {
            throw CatalogError("parse-error", "provider entries need \"provider_id\"", row);
        }
        ProviderRecord r;
        r.provider_id = item["provider_id"].get<std::string>();
        r.display_name = item.value("display_name", r.provider_id);
        r.kind = parse_provider_kind(item.value("kind", std::string("hospital")));
        // Values either nested under "values" or inlined beside the identity fields.
        const json* values = item.contains("values") ? &item["values"] : &item;
        for (const auto& [key, val] : values->items()) {
            if (key == "provider_id" || key == "display_name" || key == "kind") continue;
            if (!val.is_number_integer()) {
                throw CatalogError("not-an-integer", "row " + std::to_string(row) + ", attribute '" +
                                                         key + "' must be an integer",
                                   row, key);
            }
            r.values[key] = val.get<std::int64_t>();
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<ProviderRecord> parse_providers_csv(std::string_view text,
                                                const std::vector<AttributeSchema>& schemas) {
    std::vector<std::string> lines;
    {
        std::istringstream in{std::string(text)};
        std::string line;
        while (std::getline(in, line)) {
            if (!trim(line).empty()) lines.push_back(line);
        }
    }
    if (lines.empty()) throw CatalogError("parse-error", "CSV document has no header row");
    auto header = split_csv_line(lines.front());
    for (auto& h : header) h = trim(h);
    if (header.size() < 3 || header[0] != "provider_id" || header[1] != "display_name" ||
        header[2] != "kind") {
        throw CatalogError("parse-error",
                           "CSV header must start with provider_id,display_name,kind");
    }
    for (std::size_t c = 3; c < header.size(); ++c) {
        bool known = std::any_of(schemas.begin(), schemas.end(),
                                 [&](const AttributeSchema& s) { return s.name == header[c]; });
        if (!known) {
            throw CatalogError("unknown-attribute", "CSV column '" + header[c] +
                                                        "' is not a schema attribute",
                               std::nullopt, header[c]);
        }
    }
    std::vector<ProviderRecord> out;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        auto cells = split_csv_line(lines[i]);
        if (cells.size() != header.size()) {
            throw CatalogError("parse-error",
                               "row " + std::to_string(i) + " has " + std::to_string(cells.size()) +
                                   " cells, header has " + std::to_string(header.size()),
                               i);
        }
        ProviderRecord r;
        r.provider_id = trim(cells[0]);
        r.display_name = trim(cells[1]);
        try {
            r.kind = parse_provider_kind(trim(cells[2]));
        } catch (const CatalogError& e) {
            throw CatalogError(e.code(), "row " + std::to_string(i) + ": " + e.what(), i, "kind");
        }
        for (std::size_t c = 3; c < header.size(); ++c) {
            r.values[header[c]] = parse_int_cell(cells[c], i, header[c]);
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<ProviderRecord> parse_providers(std::string_view text,
                                            const std::vector<AttributeSchema>& schemas) {
    auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string_view::npos && (text[first] == '[' || text[first] == '{')) {
        json doc;
        try {
            doc = json::parse(text);
        } catch (const json::parse_error& e) {
            throw CatalogError("parse-error", e.what());
        }
        // A full snapshot document is accepted too.
        if (doc.is_object() && doc.contains("providers")) return parse_providers_json(doc["providers"]);
        return parse_providers_json(doc);
    }
    return parse_providers_csv(text, schemas);
}

json to_json(const AttributeSchema& s) {
    return json{{"name", s.name},
                {"kind", to_string(s.kind)},
                {"lo", s.lo},
                {"hi", s.hi},
                {"description", s.description}};
}

json to_json(const ProviderRecord& r) {
    json values = json::object();
    for (const auto& [k, v] : r.values) values[k] = v;
    return json{{"provider_id", r.provider_id},
                {"display_name", r.display_name},
                {"kind", to_string(r.kind)},
                {"values", values}};
}

json to_json(const CatalogSnapshot& snap) {
    json schemas = json::array();
    for (const auto& s : snap.schemas) schemas.push_back(to_json(s));
    json providers = json::array();
    for (const auto& p : snap.providers) providers.push_back(to_json(p));
    return json{{"version", snap.version}, {"schemas", schemas}, {"providers", providers}};
}

CatalogSnapshot snapshot_from_json(const json& doc) {
    if (!doc.is_object() || !doc.contains("schemas") || !doc.contains("providers")) {
        throw CatalogError("parse-error", "snapshot document needs \"schemas\" and \"providers\"");
    }
    CatalogSnapshot snap;
    snap.version = doc.value("version", std::uint64_t{0});
    snap.schemas = load_schema(doc["schemas"]);
    snap.providers = parse_providers_json(doc["providers"]);
    return snap;
}

Catalog::Catalog(std::vector<AttributeSchema> schemas) : schemas_(std::move(schemas)) {
    validate_schemas(schemas_);
    auto empty = std::make_shared<CatalogSnapshot>();
    empty->schemas = schemas_;
    current_ = empty;
    history_[0] = current_;
}

SnapshotPtr Catalog::ingest(std::vector<ProviderRecord> records) {
    std::lock_guard writer(writer_mutex_);
    validate_batch(records);
    std::uint64_t version = 0;
    {
        std::lock_guard lock(publish_mutex_);
        version = current_->version + 1;
    }
    return publish(std::move(records), version);
}

void Catalog::validate_batch(const std::vector<ProviderRecord>& records) const {
    if (schemas_.empty()) throw CatalogError("empty-schema", "cannot ingest without attributes");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.provider_id.empty()) {
            throw CatalogError("missing-id", "row " + std::to_string(i + 1) + " has empty provider_id",
                               i + 1, "provider_id");
        }
        if (!ids.insert(r.provider_id).second) {
            throw CatalogError("duplicate-id", "duplicate provider_id '" + r.provider_id + "'",
                               i + 1, "provider_id");
        }
        auto violations = validate_record(r, schemas_);
        if (!violations.empty()) {
            const auto& v = violations.front();
            std::string code = v.reason == "missing" ? "missing-attribute" : v.reason;
            std::string detail;
            if (v.reason == "out-of-range") {
                const auto* s = &*std::find_if(schemas_.begin(), schemas_.end(),
                                               [&](const auto& x) { return x.name == v.attribute; });
                detail = " (value " + std::to_string(r.values.at(v.attribute)) + " outside [" +
                         std::to_string(s->lo) + "," + std::to_string(s->hi) + "])";
            }
            throw CatalogError(code,
                               "row " + std::to_string(i + 1) + ", provider '" + r.provider_id +
                                   "', attribute '" + v.attribute + "': " + v.reason + detail,
                               i + 1, v.attribute);
        }
    }
}

SnapshotPtr Catalog::publish(std::vector<ProviderRecord> records, std::uint64_t version) {
    auto next = std::make_shared<CatalogSnapshot>();
    next->schemas = schemas_;
    next->providers = std::move(records);
    next->version = version;
    std::lock_guard lock(publish_mutex_);
    current_ = next;
    history_[version] = current_;
    return next;
}

SnapshotPtr Catalog::ingest_text(std::string_view document) {
    return ingest(parse_providers(document, schemas_));
}

SnapshotPtr Catalog::snapshot() const {
    std::lock_guard lock(publish_mutex_);
    return current_;
}

SnapshotPtr Catalog::snapshot_at(std::uint64_t version) const {
    std::lock_guard lock(publish_mutex_);
    auto it = history_.find(version);
    return it == history_.end() ? nullptr : it->second;
}

void Catalog::save(const std::string& path) const {
    auto snap = snapshot();
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw CatalogError("io-error", "cannot write " + tmp);
        out << to_json(*snap).dump(2) << '\n';
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw CatalogError("io-error", "cannot move " + tmp + " to " + path);
    }
}

std::unique_ptr<Catalog> Catalog::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CatalogError("io-error", "cannot read " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw CatalogError("parse-error", path + ": " + e.what());
    }
    auto snap = snapshot_from_json(doc);
    auto catalog = std::make_unique<Catalog>(snap.schemas);
    if (snap.version > 0) catalog->restore(std::move(snap));
    return catalog;
}

SnapshotPtr Catalog::restore(CatalogSnapshot snap) {
    if (snap.schemas != schemas_) throw CatalogError("schema-mismatch", "snapshot schema differs from the catalog's");
    std::lock_guard writer(writer_mutex_);
    if (snap.version <= snapshot()->version) {
        throw CatalogError("stale-version", "snapshot version " + std::to_string(snap.version) + " is not newer");
    }
    validate_batch(snap.providers);
    return publish(std::move(snap.providers), snap.version);
}

}  // namespace carematch
