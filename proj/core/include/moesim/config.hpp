#ifndef MOESIM_CONFIG_HPP
#define MOESIM_CONFIG_HPP

// Flat sectioned key-value experiment configs with strict unknown-key
// rejection (silent typos corrupt sweeps). The fully-resolved config can
// be echoed back out and re-parsed to reproduce a run exactly.

#include <iosfwd>
#include <string>
#include <vector>

#include "moesim/sim_core.hpp"

namespace moesim {

// Default hyperparameters (gamma=8, lambda=0.1, K=4, 17% cache,
// 512-token budget) over a PCIe-4.0-like hardware profile.
SimConfig default_sim_config();

// Overrides take "section.key=value" form and are applied after the file.
SimConfig parse_config_text(const std::string& text,
                            const std::vector<std::string>& overrides = {});
SimConfig load_config(const std::string& path,
                      const std::vector<std::string>& overrides = {});

// Emits every key of the resolved config; re-parsing the echo yields the
// same configuration.
void echo_config(const SimConfig& config, std::ostream& out);
std::string echo_config_string(const SimConfig& config);

} // namespace moesim

#endif
