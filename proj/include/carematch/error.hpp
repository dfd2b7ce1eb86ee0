#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace carematch {

/// Base class for every error raised by the library. `code()` is a short
/// machine-readable tag (e.g. "duplicate-id") that the service forwards to
/// clients verbatim.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

class CatalogError : public Error {
public:
    CatalogError(std::string code, const std::string& message,
                 std::optional<std::size_t> row = std::nullopt,
                 std::optional<std::string> column = std::nullopt)
        : Error(std::move(code), message), row_(row), column_(std::move(column)) {}

    /// 1-based data row (CSV header excluded) or array index + 1 for JSON.
    std::optional<std::size_t> row() const { return row_; }
    std::optional<std::string> column() const { return column_; }

private:
    std::optional<std::size_t> row_;
    std::optional<std::string> column_;
};

/// Syntax or semantic error in query text. `offset` is a byte offset into
/// the query string when the error can be pinned to a position.
class QueryError : public Error {
public:
    QueryError(std::string code, const std::string& message,
               std::optional<std::size_t> offset = std::nullopt)
        : Error(std::move(code), message), offset_(offset) {}

    std::optional<std::size_t> offset() const { return offset_; }

private:
    std::optional<std::size_t> offset_;
};

class SolverError : public Error {
public:
    using Error::Error;
};

class ResponseError : public Error {
public:
    using Error::Error;
};

class AuthError : public Error {
public:
    using Error::Error;
};

}  // namespace carematch
