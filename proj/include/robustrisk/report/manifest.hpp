#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "robustrisk/error.hpp"
#include "robustrisk/version.hpp"

namespace robustrisk::report {

inline std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xF];
    }
    return out;
}

/// UTC time as ISO 8601 with second resolution.
inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct Headline {
    double theta = 0.0;
    double c = 0.0;
    double U0 = 0.0;
    double V0 = 0.0;
    double eta0 = 0.0;
};

/// What one command produced: files (relative to the output directory),
/// headline numbers and command-specific details.
struct CommandRecord {
    std::string command;
    std::vector<std::string> files;
    std::vector<Headline> headline;
    nlohmann::ordered_json details = nlohmann::ordered_json::object();
};

struct ResultManifest {
    std::string config_digest;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::string started;
    std::string finished;
    std::vector<CommandRecord> commands;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["config_sha256"] = config_digest;
        j["seed"] = seed;
        j["threads"] = threads;
        j["started"] = started;
        j["finished"] = finished;
        j["versions"] = {{"robustrisk", kVersion}};
        auto& cmds = j["commands"] = nlohmann::ordered_json::array();
        for (const auto& c : commands) {
            nlohmann::ordered_json e;
            e["command"] = c.command;
            e["files"] = c.files;
            auto& h = e["headline"] = nlohmann::ordered_json::array();
            for (const auto& x : c.headline)
                h.push_back({{"theta", x.theta}, {"c", x.c}, {"U0", x.U0}, {"V0", x.V0}, {"eta0", x.eta0}});
            e["details"] = c.details;
            cmds.push_back(std::move(e));
        }
        return j;
    }
};

} // namespace robustrisk::report
