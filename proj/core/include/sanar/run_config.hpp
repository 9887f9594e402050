#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sanar/model.hpp"
#include "sanar/model_config.hpp"
#include "sanar/training.hpp"

namespace sanar {

/// Flat bag of every tunable the command-line tool accepts: architecture
/// hyperparameters, training schedule, and the model variant to build.
/// Every field has a default; a config file overrides defaults and flag
/// values override file values.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  ModelKind kind = ModelKind::Nar;
};

/// Every key understood by load_config, in documentation order.  The CLI
/// exposes one override flag per key under the same name.
const std::vector<std::string>& run_config_keys();

/// Parses `value` according to `key`'s type and stores it in `rc`.
/// Throws UnknownKey for unrecognized keys (typo guard) and ParseError when
/// the value does not parse as the key's type.
void set_config_field(RunConfig& rc, const std::string& key,
                      const std::string& value);

/// Merged configuration: defaults, then the JSON file at `path` (skipped
/// when `path` is empty; an empty or whitespace-only file means "all
/// defaults"), then `overrides` in order.  The file must hold one flat JSON
/// object of scalar values.  Throws IoError when the file cannot be read,
/// ParseError on malformed JSON or wrongly typed values, and UnknownKey for
/// unrecognized keys.
RunConfig load_config(
    const std::string& path,
    const std::vector<std::pair<std::string, std::string>>& overrides = {});

}  // namespace sanar
