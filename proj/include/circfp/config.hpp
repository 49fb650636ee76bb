#pragma once
/** @file config.hpp
 *  @brief YAML run configuration; every key and default is listed in docs/config.md. */

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "circfp/experiment.hpp"

namespace circfp {

/// Invalid configuration; the message carries "source:line:column" when a node is at fault.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Applies the YAML text over the preset named by `experiment` (or by the file's own
/// `experiment` key, or exp1). Throws ConfigError.
ExperimentSpec parse_config(const std::string& text, const std::string& source,
                            std::optional<ExperimentId> experiment = std::nullopt);

ExperimentSpec load_config(const std::filesystem::path& path,
                           std::optional<ExperimentId> experiment = std::nullopt);

/// Machine specs in the same YAML dialect; machine_from_yaml(machine_to_yaml(m)) == m.
std::string machine_to_yaml(const MachineSpec& machine);
MachineSpec machine_from_yaml(const std::string& text, const std::string& source);

/// Canonical JSON rendering of the effective configuration, used for hashing and manifests.
std::string canonical_config(const ExperimentSpec& spec);

}  // namespace circfp
