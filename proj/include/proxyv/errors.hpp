// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace proxyv {

/// Shapes of two operands are incompatible.
class DimensionError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// A caller-supplied value is outside the operation's domain.
class InputError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// An object was used in the wrong lifecycle state (e.g. backward before forward).
class StateError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

/// Inconsistent model or experiment configuration.
class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Training diverged (non-finite loss) or otherwise cannot continue.
class TrainingError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace proxyv
