#pragma once

#include <ostream>

namespace sagda {

// Exit codes of run_cli.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;  // bad flags, config, input files, or contracts
inline constexpr int kExitNumeric = 2;  // non-finite training loss or solver failure

// Entry point behind the `sagda` executable. Subcommands: train, eval,
// spectra, verify-lemma, gen-synth, ablate. Every run writes
// <out>/resolved-config.json before doing any work.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sagda
