#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ctxmeter {

// Record of one CLI run. The config hash covers command, resolved options and
// seeds, so identical manifests imply byte-identical artifacts; wall time and
// the timestamp are informational only and excluded from the hash.
class RunManifest {
public:
    RunManifest(std::string command, std::string options_json);

    void add_input(const std::string& path);
    void add_output(const std::string& path);
    void set_wall_time(double seconds) { wall_time_s_ = seconds; }

    // Hash of {tool version, command, options}; stable across reruns.
    const std::string& config_hash() const { return config_hash_; }

    std::string to_json() const;
    // Writes <artifact_path>.manifest.json next to the artifact.
    void write(const std::string& artifact_path) const;

private:
    std::string command_;
    std::string options_json_;
    std::string config_hash_;
    std::vector<std::string> inputs_;
    std::vector<std::string> outputs_;
    double wall_time_s_ = 0.0;
};

extern const char* kToolVersion;

}  // namespace ctxmeter
