#pragma once

#include <stdexcept>
#include <string>

namespace commit
{
// Precondition or argument violation.
class InputError : public std::invalid_argument
{
  public:
    using std::invalid_argument::invalid_argument;
};

// Math function evaluated outside its domain.
class DomainError : public InputError
{
  public:
    using InputError::InputError;
};

// Malformed file or message.
class ParseError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

class DetectorError : public std::runtime_error
{
  public:
    enum class Kind
    {
        protocol,
        timeout,
        process_died,
        unusable,
    };

    DetectorError(Kind kind, std::string const& what)
        : std::runtime_error(what), kind_(kind)
    {
    }

    Kind kind() const noexcept { return kind_; }

  private:
    Kind kind_;
};

// Rethrows the exception in flight as the same library error type with
// `context` prepended to its message. Call only from inside a catch block.
[[noreturn]] inline void rethrow_with_context(std::string const& context)
{
    try
    {
        throw;
    }
    catch (DetectorError const& e)
    {
        throw DetectorError(e.kind(), context + ": " + e.what());
    }
    catch (DomainError const& e)
    {
        throw DomainError(context + ": " + e.what());
    }
    catch (InputError const& e)
    {
        throw InputError(context + ": " + e.what());
    }
    catch (ParseError const& e)
    {
        throw ParseError(context + ": " + e.what());
    }
    catch (IoError const& e)
    {
        throw IoError(context + ": " + e.what());
    }
    catch (std::exception const& e)
    {
        throw std::runtime_error(context + ": " + e.what());
    }
}
}  // namespace commit
