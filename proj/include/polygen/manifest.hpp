#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace polygen {

inline constexpr const char* kToolkitVersion = "0.1.0";

// Provenance record written next to every command's outputs. The argv list
// is sufficient to replay the run: all randomness flows from recorded seeds
// and all file references are recorded as given on the command line.
struct RunManifest {
    std::string subcommand;
    std::vector<std::string> argv;  // arguments as typed, program name excluded
    std::map<std::string, std::string> flags;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;  // primary outputs, relative to the out dir
    std::string version = kToolkitVersion;
    double wall_clock_seconds = 0.0;
};

void save_manifest(const RunManifest& m, const std::filesystem::path& path);
RunManifest load_manifest(const std::filesystem::path& path);

}  // namespace polygen
