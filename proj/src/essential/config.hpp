#pragma once

// Plain-text `key = value` configuration for RunConfig.
//
// Lines are `key = value`; `#` starts a comment. Nested fields use dotted
// keys (`schedule.memory_size`, `synthetic.noise`). `dataset` and
// `composition` select a preset first; every other key then overrides it,
// so the order of lines does not matter.

#include "essential/datamodel.hpp"

#include <string>
#include <utility>
#include <vector>

namespace essential {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

KeyValues parse_key_values(const std::string& text);

// Parses `key=value` (the command-line override form).
std::pair<std::string, std::string> parse_override(const std::string& assignment);

RunConfig config_from_key_values(const KeyValues& kv);
RunConfig load_config_file(const std::string& path);
RunConfig load_config_text(const std::string& text, const KeyValues& overrides = {});

// Applies one key to an existing config. Throws Error(Config) for unknown keys
// or unparsable values, naming the key.
void apply_config_key(RunConfig& cfg, const std::string& key, const std::string& value);

// Canonical snapshot: every key, sorted, `key = value` per line. Round-trips
// through load_config_text.
std::string config_to_text(const RunConfig& cfg);

// Git-style blob hash (SHA-1 over "blob <len>\0" + canonical text), hex encoded.
std::string config_hash(const RunConfig& cfg);
std::string git_blob_sha1(const std::string& content);

struct ConfigKeyDoc {
  const char* key;
  const char* description;
};
const std::vector<ConfigKeyDoc>& config_key_docs();

}  // namespace essential
