#pragma once

#include "fido/run_config.hpp"

namespace fido {

// Workflow entry points. Each validates its inputs, runs, writes artifacts
// under the configured output directory and returns 0. Configuration and
// path problems throw ConfigError (exit 2), numeric failures NumericError
// (exit 3); the CLI main maps exceptions to exit codes.
int cmd_train(const RunConfig& cfg);
int cmd_explain(const RunConfig& cfg);
int cmd_evaluate(const RunConfig& cfg);
int cmd_ablate(const RunConfig& cfg);
int cmd_flip(const RunConfig& cfg);

}  // namespace fido
