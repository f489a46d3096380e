#pragma once

#include <map>
#include <string>

#include "groundpoint/trainer.hpp"

namespace gp {

/// Plain-text "key = value" lines; '#' starts a comment.
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::map<std::string, std::string> read_key_value_file(const std::string& path);

/// Applies known keys on top of `base`; unknown keys are an error.
TrainConfig apply_config(const TrainConfig& base, const std::map<std::string, std::string>& kv);
std::string to_key_values(const TrainConfig& cfg);

} // namespace gp
