/* Copyright 2026 The DCML Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef DCML_ERRORS_HPP_
#define DCML_ERRORS_HPP_

#include <stdexcept>
#include <string>

#include "dcml/tensor.hpp"

namespace dcml {

// Operand shapes are incompatible for the named op.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(std::string op, Shape lhs, Shape rhs)
      : std::invalid_argument("op '" + op + "': incompatible shapes " +
                              lhs.str() + " and " + rhs.str()),
        op_(std::move(op)),
        lhs_(lhs),
        rhs_(rhs) {}

  const std::string& op() const { return op_; }
  Shape lhs() const { return lhs_; }
  Shape rhs() const { return rhs_; }

 private:
  std::string op_;
  Shape lhs_;
  Shape rhs_;
};

// Input lies outside the op's mathematical domain (log of a non-positive
// value, division by zero).
class DomainError : public std::domain_error {
 public:
  DomainError(std::string op, const std::string& what)
      : std::domain_error("op '" + op + "': " + what), op_(std::move(op)) {}

  const std::string& op() const { return op_; }

 private:
  std::string op_;
};

// Misuse of the graph API, e.g. backward from a non-scalar root.
class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid configuration or argument value.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A loss or gradient became NaN/Inf.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dcml

#endif  // DCML_ERRORS_HPP_
