#pragma once

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace blinksim {

/// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition or argument violation.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Binary or text file that does not match its format. Carries every problem found,
/// each with the byte offset it was detected at.
class FormatError : public Error {
 public:
  struct Issue {
    std::size_t offset;
    std::string message;
  };

  FormatError(std::string what, std::vector<Issue> issues)
      : Error(compose(what, issues)), issues_(std::move(issues)) {}

  const std::vector<Issue>& issues() const noexcept { return issues_; }

 private:
  static std::string compose(const std::string& what, const std::vector<Issue>& issues) {
    std::ostringstream os;
    os << what;
    for (const auto& issue : issues) os << "\n  at byte " << issue.offset << ": " << issue.message;
    return os.str();
  }

  std::vector<Issue> issues_;
};

namespace detail {

template <typename... Parts>
std::string concat(Parts&&... parts) {
  std::ostringstream os;
  (os << ... << std::forward<Parts>(parts));
  return os.str();
}

template <typename... Parts>
void require(bool condition, Parts&&... parts) {
  if (!condition) throw InvalidArgument(concat(std::forward<Parts>(parts)...));
}

}  // namespace detail
}  // namespace blinksim
