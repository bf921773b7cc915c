#include "polygen/manifest.hpp"

#include <fstream>

#include <json.hpp>

#include "polygen/errors.hpp"

namespace polygen {

using nlohmann::json;

void save_manifest(const RunManifest& m, const std::filesystem::path& path) {
    json j;
    j["subcommand"] = m.subcommand;
    j["argv"] = m.argv;
    j["flags"] = m.flags;
    j["seeds"] = m.seeds;
    j["inputs"] = m.inputs;
    j["outputs"] = m.outputs;
    j["version"] = m.version;
    j["wall_clock_seconds"] = m.wall_clock_seconds;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f << j.dump(2) << '\n';
    f.flush();
    if (!f) throw IoError("failed writing " + path.string());
}

RunManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    json j;
    try {
        f >> j;
    } catch (const json::parse_error& e) {
        throw ValidationError("manifest " + path.string() + " is not valid JSON: " + e.what());
    }
    RunManifest m;
    try {
        j.at("subcommand").get_to(m.subcommand);
        j.at("argv").get_to(m.argv);
        j.at("flags").get_to(m.flags);
        j.at("seeds").get_to(m.seeds);
        j.at("inputs").get_to(m.inputs);
        j.at("outputs").get_to(m.outputs);
        j.at("version").get_to(m.version);
        j.at("wall_clock_seconds").get_to(m.wall_clock_seconds);
    } catch (const json::exception& e) {
        throw ValidationError("manifest " + path.string() + " is missing fields: " + e.what());
    }
    return m;
}

}  // namespace polygen
