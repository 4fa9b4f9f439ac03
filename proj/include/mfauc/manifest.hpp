#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mfauc {

/// 64-bit FNV-1a of a file's bytes, as 16 lowercase hex digits.
std::string file_digest(const std::filesystem::path& path);
std::uint64_t fnv1a64(const void* data, std::size_t size,
                      std::uint64_t state = 0xcbf29ce484222325ull);

/// Record of one CLI run: the argument vector, resolved parameters, seeds,
/// input / output digests and timing. Stored as "key=value" lines.
struct ExperimentManifest {
  std::string command;
  std::vector<std::string> args;  ///< argument vector after the program name
  std::vector<std::pair<std::string, std::string>> params;
  std::vector<std::pair<std::string, std::uint64_t>> seeds;
  std::vector<std::pair<std::string, std::string>> inputs;   ///< path, digest
  std::vector<std::pair<std::string, std::string>> outputs;  ///< path, digest
  double wall_clock_seconds = 0.0;
  std::vector<std::pair<std::string, std::string>> versions;

  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);
  std::optional<std::string> param(const std::string& key) const;

  void save(const std::filesystem::path& path) const;
  static ExperimentManifest load(const std::filesystem::path& path);
};

}  // namespace mfauc
