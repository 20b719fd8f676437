#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace nfp {

// `key = value` per line, '#' starts a comment, blank lines ignored.
// Later occurrences of a key override earlier ones.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(const std::string& text);
ConfigMap parse_config_file(const std::filesystem::path& path);

// Typed getters; throw with the key name on malformed values.
double config_get_double(const ConfigMap& m, const std::string& key, double fallback);
std::size_t config_get_size(const ConfigMap& m, const std::string& key,
                            std::size_t fallback);
std::uint64_t config_get_u64(const ConfigMap& m, const std::string& key,
                             std::uint64_t fallback);
bool config_get_bool(const ConfigMap& m, const std::string& key, bool fallback);
// Comma-separated word list.
std::vector<std::string> config_get_words(const ConfigMap& m, const std::string& key,
                                          std::vector<std::string> fallback);

// FNV-1a 64-bit, used for the artifact checksums in run manifests.
std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64_file(const std::filesystem::path& path);
std::string fnv1a64_hex(std::uint64_t h);

}  // namespace nfp
