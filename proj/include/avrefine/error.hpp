#ifndef AVREFINE_ERROR_HPP
#define AVREFINE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace avrefine
{

/// Base of every error thrown by the library.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Malformed scalar field (timestamp, enum, integer).
class ParseError : public Error
{
public:
    ParseError(std::string field, const std::string& what)
        : Error(field + ": " + what), field_(std::move(field))
    {
    }

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Input structure does not match the expected layout (missing column, bad header).
class SchemaError : public Error
{
public:
    using Error::Error;
};

class RangeError : public Error
{
public:
    using Error::Error;
};

/// Transcript cannot be placed in the available frames.
class InfeasibleAlignment : public Error
{
public:
    using Error::Error;
};

/// Cross-file consistency failure (array lengths, vocabularies, track ids).
class ValidationError : public Error
{
public:
    using Error::Error;
};

} // namespace avrefine

#endif // AVREFINE_ERROR_HPP
