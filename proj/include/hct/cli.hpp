#pragma once

// Command-line front end. Subcommands: train, eval, gradcheck, dump-attn,
// synth and oracle. Exit codes are part of the contract: 0 on success
// (including a passing gradcheck or oracle run), 1 for runtime failures
// and for gradcheck/oracle mismatches, 2 for usage problems and invalid
// configuration.

namespace hct {

int cli_main(int argc, const char* const* argv);

}  // namespace hct
