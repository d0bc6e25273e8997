#ifndef PEGAN_ERRORS_HPP
#define PEGAN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace pegan {

/// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind {
  usage,
  configuration,
  shape,
  lookup,
  domain,
  numeric,
  dataset,
  io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define PEGAN_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

PEGAN_DEFINE_ERROR(UsageError, usage)
PEGAN_DEFINE_ERROR(ConfigError, configuration)
PEGAN_DEFINE_ERROR(ShapeError, shape)
PEGAN_DEFINE_ERROR(LookupError, lookup)
PEGAN_DEFINE_ERROR(DomainError, domain)
PEGAN_DEFINE_ERROR(NumericError, numeric)
PEGAN_DEFINE_ERROR(DatasetError, dataset)
PEGAN_DEFINE_ERROR(IoError, io)

#undef PEGAN_DEFINE_ERROR

}  // namespace pegan

#endif  // PEGAN_ERRORS_HPP
