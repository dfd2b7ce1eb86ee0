#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "carematch/catalog.hpp"
#include "carematch/match.hpp"

namespace carematch::response {

/// Named text templates with `{placeholder}` slots. The file format is one
/// `key = text` per line; blank lines and lines starting with '#' are skipped.
class Templates {
public:
    static Templates defaults();
    static Templates parse(std::string_view text);
    static Templates load(const std::string& path);

    /// Missing keys fall back to the built-in defaults.
    std::string fill(const std::string& key, const std::map<std::string, std::string>& vars) const;

    const std::map<std::string, std::string>& entries() const { return entries_; }

private:
    std::map<std::string, std::string> entries_;
};

struct AttributeHighlight {
    std::string attribute;
    std::int64_t value = 0;
    std::string display;               // value with unit, e.g. "100%"
    std::vector<std::string> required;  // e.g. ">= 60", one per constraint on the attribute

    bool operator==(const AttributeHighlight&) const = default;
};

struct ProviderCard {
    std::string provider_id;
    std::string display_name;
    std::string kind;
    std::vector<AttributeHighlight> highlights;

    bool operator==(const ProviderCard&) const = default;
};

struct RenderedResponse {
    std::string summary_text;
    std::vector<ProviderCard> provider_cards;
    std::vector<std::string> relaxation_texts;
    nlohmann::json machine_payload;
};

/// Unit taken from the trailing parenthesized part of a description,
/// e.g. "Clinical standards (%)" -> "%". Empty when absent.
std::string unit_of(const AttributeSchema& schema);

/// Deterministic templated rendering. Throws ResponseError("version-skew")
/// when the report mentions an attribute missing from `schemas`.
RenderedResponse render(const match::MatchReport& report, const std::vector<AttributeSchema>& schemas,
                        const Templates& templates = Templates::defaults());

/// Fixed-width table: provider_id, display_name, then the queried attributes.
std::string render_plain(const match::MatchReport& report);

nlohmann::json to_json(const RenderedResponse& response);

}  // namespace carematch::response
