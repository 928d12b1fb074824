#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sagda/data_io.hpp"
#include "sagda/theory.hpp"
#include "sagda/trainer.hpp"

namespace sagda {

/// Every tunable of every subcommand. Defaults live in the member structs.
struct RunConfig {
  TrainConfig train;
  SbmSpec sbm;
  SweepConfig sweep;
  int ablate_seeds = 1;
  int zero_case_pairs = 10;
};

enum class ValueKind { Number, Integer, Boolean, Text };

struct ConfigKey {
  std::string name;
  ValueKind kind;
  std::string help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

const std::vector<ConfigKey>& config_keys();

// Unknown keys and unparsable values throw ValidationError naming the key.
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);
std::string get_config_value(const RunConfig& cfg, std::string_view key);

// Lines "key = value"; '#' starts a comment; blank lines ignored.
// Throws ParseError with the line number on malformed lines.
std::vector<std::pair<std::string, std::string>> parse_key_value_text(std::string_view text,
                                                                      const std::string& origin);
std::vector<std::pair<std::string, std::string>> parse_key_value_file(
    const std::filesystem::path& path);

// One line per key: name, default, help.
std::string describe_config_keys();

}  // namespace sagda
