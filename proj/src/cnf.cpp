#include "carematch/cnf.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>
#include <unordered_set>

#include "carematch/error.hpp"

namespace carematch {

bool normalize_clause(Clause& clause) {
    std::unordered_set<Lit> seen;
    Clause out;
    out.reserve(clause.size());
    for (Lit l : clause) {
        if (seen.count(-l)) return false;
        if (seen.insert(l).second) out.push_back(l);
    }
    clause = std::move(out);
    return true;
}

bool CnfFormula::add_clause(Clause clause) {
    if (!normalize_clause(clause)) return false;
    for (Lit l : clause) num_vars = std::max(num_vars, var_of(l));
    clauses.push_back(std::move(clause));
    return true;
}

std::size_t CnfFormula::max_width() const {
    std::size_t w = 0;
    for (const auto& c : clauses) w = std::max(w, c.size());
    return w;
}

bool satisfies(const CnfFormula& formula, const std::vector<bool>& assignment) {
    for (const auto& clause : formula.clauses) {
        bool sat = std::any_of(clause.begin(), clause.end(), [&](Lit l) {
            auto v = static_cast<std::size_t>(var_of(l));
            return v < assignment.size() && assignment[v] == (l > 0);
        });
        if (!sat) return false;
    }
    return true;
}

std::string export_dimacs(const CnfFormula& formula) {
    std::string out = "p cnf " + std::to_string(formula.num_vars) + " " +
                      std::to_string(formula.clauses.size()) + "\n";
    for (const auto& clause : formula.clauses) {
        for (Lit l : clause) {
            out += std::to_string(l);
            out += ' ';
        }
        out += "0\n";
    }
    return out;
}

CnfFormula parse_dimacs(std::string_view text) {
    CnfFormula formula;
    bool have_header = false;
    std::size_t declared_clauses = 0;
    Clause current;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        char c = line[first];
        if (c == 'c') continue;
        if (c == '%') break;
        if (c == 'p') {
            std::istringstream header(line.substr(first));
            std::string p, fmt;
            long long vars = -1, clauses = -1;
            header >> p >> fmt >> vars >> clauses;
            if (fmt != "cnf" || vars < 0 || clauses < 0 || have_header) {
                throw SolverError("dimacs-parse", "line " + std::to_string(line_no) + ": bad header");
            }
            have_header = true;
            formula.num_vars = static_cast<int>(vars);
            declared_clauses = static_cast<std::size_t>(clauses);
            continue;
        }
        if (!have_header) {
            throw SolverError("dimacs-parse", "line " + std::to_string(line_no) + ": clause before header");
        }
        std::istringstream body(line);
        std::string tok;
        while (body >> tok) {
            long long value = 0;
            auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
            if (ec != std::errc() || ptr != tok.data() + tok.size()) {
                throw SolverError("dimacs-parse", "line " + std::to_string(line_no) + ": bad literal '" + tok + "'");
            }
            if (value == 0) {
                formula.clauses.push_back(std::move(current));
                current.clear();
                continue;
            }
            if (std::llabs(value) > formula.num_vars) {
                throw SolverError("dimacs-parse", "line " + std::to_string(line_no) + ": literal " + tok +
                                                      " exceeds declared variable count");
            }
            current.push_back(static_cast<Lit>(value));
        }
    }
    if (!have_header) throw SolverError("dimacs-parse", "missing 'p cnf' header");
    if (!current.empty()) formula.clauses.push_back(std::move(current));
    if (formula.clauses.size() != declared_clauses) {
        throw SolverError("dimacs-parse", "header declares " + std::to_string(declared_clauses) +
                                              " clauses, found " + std::to_string(formula.clauses.size()));
    }
    return formula;
}

}  // namespace carematch
