#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "qdiv/error.hpp"

namespace fixtures {

class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("qdiv_test_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << text;
}

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace fixtures

// Passes when `stmt` throws qdiv::Error carrying `expected`.
#define EXPECT_QDIV_ERROR(stmt, expected)                                                            \
    do {                                                                                             \
        try {                                                                                        \
            stmt;                                                                                    \
            ADD_FAILURE() << #stmt " did not throw";                                                 \
        } catch (const qdiv::Error& e_) {                                                            \
            EXPECT_EQ(qdiv::to_string(e_.code()), qdiv::to_string(expected)) << e_.what();           \
        }                                                                                            \
    } while (0)
