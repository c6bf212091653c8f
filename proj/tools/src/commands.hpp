#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "config.hpp"

namespace vigil::cli {

const std::vector<std::string>& subcommands();

// Throws ValidationError for an unknown name.
void run_subcommand(std::string_view name, const RunConfig& config);

}  // namespace vigil::cli
