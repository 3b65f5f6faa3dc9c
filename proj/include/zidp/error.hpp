#ifndef ZIDP_ERROR_HPP
#define ZIDP_ERROR_HPP

#include <stdexcept>
#include <string>

namespace zidp {

// Broad failure classes. The CLI maps each to its own exit status.
enum class ErrorKind {
  schema,      // data does not conform to the covariate schema
  config,      // invalid or inconsistent configuration
  usage,       // operation called on input it does not accept (e.g. empty trace)
  data,        // malformed input file contents
  io,          // filesystem problems, missing trace
  resume,      // checkpoint/manifest verification failure
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace zidp

#endif  // ZIDP_ERROR_HPP
