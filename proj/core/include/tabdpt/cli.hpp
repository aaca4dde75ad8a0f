#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "tabdpt/common.hpp"

namespace tabdpt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

int exit_code(ErrorKind kind);

/// Flat `key = value` lines; '#' starts a comment. Duplicate keys are an error.
std::map<std::string, std::string> parse_config(const std::string& text);

/// Keys accepted by a subcommand, with their defaults ("" means required or unset).
const std::map<std::string, std::string>& default_config(const std::string& subcommand);

/// Merges file values and overrides over the subcommand defaults. Unknown keys are rejected.
std::map<std::string, std::string> resolve_config(const std::string& subcommand,
                                                  const std::map<std::string, std::string>& file_values,
                                                  const std::map<std::string, std::string>& overrides);

/// Runs one subcommand; reports failures as a single `error[kind]: message` line on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int main(int argc, char** argv);

}  // namespace tabdpt::cli
