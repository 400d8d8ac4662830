#include "ctxmeter/manifest.hpp"

#include <chrono>

#include <json.hpp>

#include "ctxmeter/io_util.hpp"

namespace ctxmeter {

using nlohmann::json;

const char* kToolVersion = "0.1.0";

RunManifest::RunManifest(std::string command, std::string options_json)
    : command_(std::move(command)), options_json_(std::move(options_json)) {
    const std::string hashed = std::string(kToolVersion) + "\n" + command_ + "\n" + options_json_;
    config_hash_ = to_hex(fnv1a64(hashed));
}

void RunManifest::add_input(const std::string& path) { inputs_.push_back(path); }
void RunManifest::add_output(const std::string& path) { outputs_.push_back(path); }

std::string RunManifest::to_json() const {
    json j;
    j["tool"] = "ctxmeter";
    j["version"] = kToolVersion;
    j["command"] = command_;
    j["options"] = json::parse(options_json_);
    j["config_hash"] = config_hash_;
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    j["wall_time_s"] = wall_time_s_;
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    j["created_unix_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
    return j.dump(2) + "\n";
}

void RunManifest::write(const std::string& artifact_path) const {
    atomic_write_file(artifact_path + ".manifest.json", to_json());
}

}  // namespace ctxmeter
