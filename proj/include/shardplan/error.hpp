// Copyright (c) 2026, the shardplan authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace shardplan {

enum class ErrorKind {
  infeasible,        // no device can hold the next table / no legal placement
  memory_violation,  // an explicit assignment exceeds a device memory cap
  malformed_batch,   // lookup batch offsets violate the format invariants
  bad_spec,          // pool generator spec has empty or inverted ranges
  unknown_table,     // table id outside the pool / feature matrix
  too_large,         // exhaustive search above the evaluation cap
  illegal_action,    // action outside the legal set of the current step
  shape_mismatch,    // tensor shapes do not line up
  no_legal_action,   // masked softmax over an empty legal set
  bad_input,         // anything else wrong with user-provided data
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// Process exit code used by the CLI: 2 for infeasible placements,
  /// 3 for bad input.
  int exit_code() const noexcept {
    switch (kind_) {
      case ErrorKind::infeasible:
      case ErrorKind::memory_violation:
        return 2;
      default:
        return 3;
    }
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

}  // namespace shardplan
