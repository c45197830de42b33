#pragma once

#include <filesystem>
#include <initializer_list>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ornatag/cli.hpp"
#include "ornatag/score_model.hpp"

namespace ornatag::testing {

struct CliRun {
    int code;
    std::string out;
    std::string err;
};

inline CliRun run_tool(std::vector<std::string> args) {
    args.insert(args.begin(), "ornatag");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("ornatag-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path_ / name).string(); }
    std::string write(const std::string& name, std::string_view contents) const {
        write_file(file(name), contents);
        return file(name);
    }
    std::string read(const std::string& name) const { return read_file(file(name)); }

private:
    std::filesystem::path path_;
};

}  // namespace ornatag::testing
