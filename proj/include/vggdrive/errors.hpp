// Copyright 2026 The vggdrive-toy Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef VGGDRIVE__ERRORS_HPP_
#define VGGDRIVE__ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace vggdrive
{

/// Root of every error thrown by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents that do not fit the operation.
class DimensionError : public Error
{
public:
  using Error::Error;
};

/// Invalid hyper-parameters, schemes, sizes or missing configuration.
class ConfigError : public Error
{
public:
  using Error::Error;
};

/// A caller broke an operation precondition (wrong layout, non-scalar loss, ...).
class ContractError : public Error
{
public:
  using Error::Error;
};

/// Singular or ill-conditioned numerics.
class NumericError : public Error
{
public:
  using Error::Error;
};

/// Scene generation could not satisfy its constraints.
class GenerationError : public Error
{
public:
  using Error::Error;
};

/// Metric inputs that fail range or presence checks.
class ValidationError : public Error
{
public:
  using Error::Error;
};

/// File format and filesystem problems.
class IoError : public Error
{
public:
  using Error::Error;
};

}  // namespace vggdrive

#endif  // VGGDRIVE__ERRORS_HPP_
