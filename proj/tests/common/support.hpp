#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <unistd.h>

#include "rffi/random.hpp"
#include "rffi/signal.hpp"

namespace testing {

// Scratch directory removed on scope exit.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag = "t")
    {
        static std::atomic<int> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("rffi_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

inline std::string read_file(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Relative path -> contents for every regular file below `root`.
inline std::map<std::string, std::string> read_tree(const std::filesystem::path& root)
{
    std::map<std::string, std::string> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(root))
        if (e.is_regular_file()) files[std::filesystem::relative(e.path(), root).string()] = read_file(e.path());
    return files;
}

inline rffi::ComplexSignal gaussian_signal(std::size_t n, std::uint64_t seed, double sigma = 1.0)
{
    rffi::Rng rng(seed);
    rffi::ComplexSignal s;
    s.sample_rate_hz = 1e6;
    s.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) s.samples.emplace_back(sigma * rng.normal(), sigma * rng.normal());
    return s;
}

}  // namespace testing
