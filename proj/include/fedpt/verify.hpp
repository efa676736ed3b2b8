#pragma once

#include <iosfwd>

namespace fedpt {

struct VerifyOptions {
    // Test hook: offset added to the Adam epsilon used by the implementation
    // under check. Nonzero values must make the trace check fail.
    double adam_eps_perturbation = 0.0;
};

// Built-in oracle suite behind the `verify` subcommand: Adam trace,
// eigensolver vs characteristic polynomial, analytic gradient vs finite
// differences, control-variate bookkeeping and partition conservation.
// Prints one PASS/FAIL line per check; returns true when all pass.
bool run_verify(std::ostream& out, const VerifyOptions& opt = {});

}  // namespace fedpt
