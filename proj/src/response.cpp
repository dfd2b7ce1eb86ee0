#include "carematch/response.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "carematch/error.hpp"

namespace carematch::response {

using nlohmann::json;

namespace {

constexpr std::string_view kDefaultTemplates = R"(# Response templates. Placeholders are written {name}.
summary.one = 1 provider satisfies all requirements: {providers}.
summary.many = {count} providers satisfy all requirements: {providers}.
summary.relaxed = No provider satisfies all requirements; {relaxations}.
summary.unrelaxable = No provider satisfies all requirements, and no relaxation within the search limits yields a match.
summary.empty_catalog = The catalog is empty; there are no providers to match.
relaxation.clause = dropping {conjuncts} yields {count} {noun}
relaxation.text = Dropping {conjuncts} yields {count} {noun}: {providers}.
provider.entry = {display_name} ({provider_id})
)";

std::string trim(std::string s) {
    auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
    s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
    s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
    return s;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep, std::string_view last_sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) out += (i + 1 == parts.size()) ? last_sep : sep;
        out += parts[i];
    }
    return out;
}

std::string quoted_conjuncts(const std::vector<std::string>& texts) {
    std::vector<std::string> q;
    for (const auto& t : texts) q.push_back("`" + t + "`");
    return join(q, ", ", " and ");
}

const AttributeSchema& require_schema(const std::vector<AttributeSchema>& schemas, const std::string& name) {
    auto it = std::find_if(schemas.begin(), schemas.end(), [&](const auto& s) { return s.name == name; });
    if (it == schemas.end()) {
        throw ResponseError("version-skew", "report mentions attribute '" + name + "' unknown to the schema");
    }
    return *it;
}

std::string format_value(const AttributeSchema& schema, std::int64_t value) {
    if (schema.kind == AttributeKind::boolean) return value != 0 ? "yes" : "no";
    auto unit = unit_of(schema);
    if (unit.empty()) return std::to_string(value);
    if (unit == "%") return std::to_string(value) + "%";
    return std::to_string(value) + " " + unit;
}

}  // namespace

Templates Templates::defaults() { return parse(kDefaultTemplates); }

Templates Templates::parse(std::string_view text) {
    Templates t;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        auto stripped = trim(line);
        if (stripped.empty() || stripped.front() == '#') continue;
        auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ResponseError("template-parse", "template line without '=': " + stripped);
        }
        t.entries_[trim(stripped.substr(0, eq))] = trim(stripped.substr(eq + 1));
    }
    return t;
}

Templates Templates::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ResponseError("io-error", "cannot read template file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

std::string Templates::fill(const std::string& key, const std::map<std::string, std::string>& vars) const {
    std::string pattern;
    if (auto it = entries_.find(key); it != entries_.end()) {
        pattern = it->second;
    } else {
        static const Templates builtin = parse(kDefaultTemplates);
        auto fallback = builtin.entries_.find(key);
        if (fallback == builtin.entries_.end()) throw ResponseError("template-missing", "no template '" + key + "'");
        pattern = fallback->second;
    }
    std::string out;
    for (std::size_t i = 0; i < pattern.size(); ++i) {
        if (pattern[i] == '{') {
            auto close = pattern.find('}', i);
            if (close != std::string::npos) {
                auto name = pattern.substr(i + 1, close - i - 1);
                if (auto v = vars.find(name); v != vars.end()) {
                    out += v->second;
                    i = close;
                    continue;
                }
            }
        }
        out += pattern[i];
    }
    return out;
}

std::string unit_of(const AttributeSchema& schema) {
    const auto& d = schema.description;
    if (d.empty() || d.back() != ')') return {};
    auto open = d.rfind('(');
    if (open == std::string::npos) return {};
    return trim(d.substr(open + 1, d.size() - open - 2));
}

RenderedResponse render(const match::MatchReport& report, const std::vector<AttributeSchema>& schemas,
                        const Templates& templates) {
    for (const auto& name : report.queried_attributes) require_schema(schemas, name);
    for (const auto& c : report.constraints) require_schema(schemas, c.attribute);

    RenderedResponse out;
    out.machine_payload = match::to_json(report);

    std::vector<std::string> entries;
    for (const auto& m : report.matches) {
        for (const auto& [name, value] : m.assignment) require_schema(schemas, name);
        ProviderCard card{m.provider_id, m.display_name, std::string(to_string(m.kind)), {}};
        for (const auto& name : report.queried_attributes) {
            const auto& schema = require_schema(schemas, name);
            auto it = m.assignment.find(name);
            if (it == m.assignment.end()) continue;
            AttributeHighlight h{name, it->second, format_value(schema, it->second), {}};
            for (const auto& c : report.constraints) {
                if (c.attribute == name) {
                    h.required.push_back(std::string(query::to_string(c.op)) + " " + std::to_string(c.threshold));
                }
            }
            card.highlights.push_back(std::move(h));
        }
        out.provider_cards.push_back(std::move(card));
        entries.push_back(templates.fill("provider.entry", {{"display_name", m.display_name}, {"provider_id", m.provider_id}}));
    }

    std::vector<std::string> clauses;
    for (const auto& s : report.relaxations) {
        auto count = std::to_string(s.resulting_matches.size());
        auto noun = s.resulting_matches.size() == 1 ? "provider" : "providers";
        auto conjuncts = quoted_conjuncts(s.dropped_text);
        clauses.push_back(templates.fill("relaxation.clause", {{"conjuncts", conjuncts}, {"count", count}, {"noun", noun}}));
        out.relaxation_texts.push_back(templates.fill(
            "relaxation.text",
            {{"conjuncts", conjuncts}, {"count", count}, {"noun", noun}, {"providers", join(s.resulting_matches, ", ", ", ")}}));
    }

    if (!report.matches.empty()) {
        auto providers = join(entries, ", ", " and ");
        out.summary_text = report.matches.size() == 1
                               ? templates.fill("summary.one", {{"providers", providers}})
                               : templates.fill("summary.many", {{"count", std::to_string(report.matches.size())},
                                                                 {"providers", providers}});
    } else if (report.empty_catalog) {
        out.summary_text = templates.fill("summary.empty_catalog", {});
    } else if (!clauses.empty()) {
        out.summary_text = templates.fill("summary.relaxed", {{"relaxations", join(clauses, "; ", "; ")}});
    } else {
        out.summary_text = templates.fill("summary.unrelaxable", {});
    }
    return out;
}

std::string render_plain(const match::MatchReport& report) {
    std::vector<std::string> header{"provider_id", "display_name"};
    for (const auto& a : report.queried_attributes) header.push_back(a);

    std::vector<std::vector<std::string>> rows;
    for (const auto& m : report.matches) {
        std::vector<std::string> row{m.provider_id, m.display_name};
        for (const auto& a : report.queried_attributes) {
            auto it = m.assignment.find(a);
            row.push_back(it == m.assignment.end() ? "-" : std::to_string(it->second));
        }
        rows.push_back(std::move(row));
    }

    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    }

    auto line = [&](const std::vector<std::string>& cells) {
        std::ostringstream os;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c > 0) os << "  ";
            if (c + 1 == cells.size()) {
                os << cells[c];
            } else {
                os << std::left << std::setw(static_cast<int>(width[c])) << cells[c];
            }
        }
        return os.str() + "\n";
    };

    std::string out = line(header);
    if (rows.empty()) {
        out += "(no matches)\n";
    } else {
        for (const auto& row : rows) out += line(row);
    }
    return out;
}

json to_json(const RenderedResponse& r) {
    json cards = json::array();
    for (const auto& c : r.provider_cards) {
        json highlights = json::array();
        for (const auto& h : c.highlights) {
            highlights.push_back(json{{"attribute", h.attribute}, {"value", h.value}, {"display", h.display}, {"required", h.required}});
        }
        cards.push_back(json{{"provider_id", c.provider_id},
                             {"display_name", c.display_name},
                             {"kind", c.kind},
                             {"highlights", highlights}});
    }
    return json{{"summary_text", r.summary_text},
                {"provider_cards", cards},
                {"relaxation_texts", r.relaxation_texts},
                {"machine_payload", r.machine_payload}};
}

}  // namespace carematch::response
