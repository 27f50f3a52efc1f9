#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fpuq {

/// Input rejected by a precondition check. The CLI maps this to exit status 1.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Failure while reading or writing a file; the message carries the path.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// SplitMix64 finalizer. Used to derive independent seeds from (seed, index) pairs.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Number of worker threads, capped by FOOTPRINT_UQ_THREADS when set.
unsigned worker_count();

/// Runs fn(i) for i in [0, n). Every index is visited exactly once; callers
/// write results into pre-sized slots so output never depends on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  unsigned max_workers = 0);

// Little-endian binary helpers. Host byte order is checked at compile time.
namespace bin {

void write_bytes(std::ostream& os, const void* data, std::size_t n);
void read_bytes(std::istream& is, void* data, std::size_t n, const std::string& what);

template <typename T>
void put(std::ostream& os, T value) {
    write_bytes(os, &value, sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& what) {
    T value{};
    read_bytes(is, &value, sizeof(T), what);
    return value;
}

void pad(std::ostream& os, std::size_t n);
void skip(std::istream& is, std::size_t n, const std::string& what);

}  // namespace bin

std::vector<char> read_file(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace fpuq
