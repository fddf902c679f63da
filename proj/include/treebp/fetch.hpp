#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace treebp {

struct FetchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Lowercase MD5 hex digest.
std::string md5_hex(const void* data, std::size_t size);
std::string md5_hex_file(const std::filesystem::path& path);

// gzip (RFC 1952) wrapping of zlib's DEFLATE. Compression exists so the pair
// can be round-trip tested without canned fixtures.
std::vector<std::uint8_t> gzip_decompress(const std::uint8_t* data, std::size_t size);
std::vector<std::uint8_t> gzip_compress(const std::uint8_t* data, std::size_t size);

struct TarEntry {
  std::string name;
  std::vector<std::uint8_t> data;
};

// Minimal ustar reader/writer: regular files only; other entry types are
// skipped on read and rejected on write.
std::vector<TarEntry> untar(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> make_tar(const std::vector<TarEntry>& entries);

// HTTPS GET with redirects via libcurl. Throws FetchError on any failure.
std::vector<std::uint8_t> http_get(const std::string& url, std::ostream* log = nullptr);

// Download + verify + unpack into dir/cifar10 and dir/mnist. Files already
// present and passing verification are not re-downloaded.
void fetch_cifar10(const std::filesystem::path& dir, std::ostream* log = nullptr);
void fetch_mnist(const std::filesystem::path& dir, std::ostream* log = nullptr);

}  // namespace treebp
