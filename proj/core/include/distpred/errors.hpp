#ifndef DISTPRED_ERRORS_HPP
#define DISTPRED_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace distpred {

// Malformed or inconsistent user input (files, schemas, parameter values).
// The CLI maps this to exit code 2.
class input_error : public std::runtime_error {
 public:
  explicit input_error(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure (singular covariance, non-finite values mid-computation).
// The CLI maps this to exit code 3.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace distpred

#endif
