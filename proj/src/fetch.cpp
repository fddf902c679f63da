#include "treebp/fetch.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <curl/curl.h>
#include <openssl/evp.h>
#include <zlib.h>

namespace treebp {

std::string md5_hex(const void* data, std::size_t size) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (!EVP_Digest(data, size, digest.data(), &len, EVP_md5(), nullptr)) {
    throw FetchError("md5 digest failed");
  }
  std::string hex(2 * len, '0');
  static const char* kDigits = "0123456789abcdef";
  for (unsigned int i = 0; i < len; ++i) {
    hex[2 * i] = kDigits[digest[i] >> 4];
    hex[2 * i + 1] = kDigits[digest[i] & 0xf];
  }
  return hex;
}

std::string md5_hex_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FetchError("cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || !EVP_DigestInit_ex(ctx, EVP_md5(), nullptr)) {
    EVP_MD_CTX_free(ctx);
    throw FetchError("md5 init failed");
  }
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    const auto got = in.gcount();
    if (got > 0) EVP_DigestUpdate(ctx, buf.data(), std::size_t(got));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest.data(), &len);
  EVP_MD_CTX_free(ctx);
  std::string hex(2 * len, '0');
  static const char* kDigits = "0123456789abcdef";
  for (unsigned int i = 0; i < len; ++i) {
    hex[2 * i] = kDigits[digest[i] >> 4];
    hex[2 * i + 1] = kDigits[digest[i] & 0xf];
  }
  return hex;
}

std::vector<std::uint8_t> gzip_decompress(const std::uint8_t* data, std::size_t size) {
  z_stream zs{};
  // 15 window bits + 16 selects gzip framing.
  if (inflateInit2(&zs, 15 + 16) != Z_OK) throw FetchError("inflateInit failed");
  std::vector<std::uint8_t> out;
  std::array<std::uint8_t, 1 << 16> buf;
  zs.next_in = const_cast<std::uint8_t*>(data);
  zs.avail_in = uInt(size);
  int rc = Z_OK;
  do {
    zs.next_out = buf.data();
    zs.avail_out = uInt(buf.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw FetchError("gzip decompress failed: " +
                       std::string(zs.msg ? zs.msg : zError(rc)));
    }
    out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
  } while (rc != Z_STREAM_END);
  inflateEnd(&zs);
  return out;
}

std::vector<std::uint8_t> gzip_compress(const std::uint8_t* data, std::size_t size) {
  z_stream zs{};
  if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 15 + 16, 8,
                   Z_DEFAULT_STRATEGY) != Z_OK) {
    throw FetchError("deflateInit failed");
  }
  std::vector<std::uint8_t> out;
  std::array<std::uint8_t, 1 << 16> buf;
  zs.next_in = const_cast<std::uint8_t*>(data);
  zs.avail_in = uInt(size);
  int rc = Z_OK;
  do {
    zs.next_out = buf.data();
    zs.avail_out = uInt(buf.size());
    rc = deflate(&zs, Z_FINISH);
    if (rc == Z_STREAM_ERROR) {
      deflateEnd(&zs);
      throw FetchError("gzip compress failed");
    }
    out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
  } while (rc != Z_STREAM_END);
  deflateEnd(&zs);
  return out;
}

namespace {

constexpr std::size_t kTarBlock = 512;

std::uint64_t parse_octal(const char* field, std::size_t len) {
  std::uint64_t value = 0;
  for (std::size_t i = 0; i < len && field[i]; ++i) {
    const char c = field[i];
    if (c == ' ') continue;
    if (c < '0' || c > '7') throw FetchError("tar: bad octal size field");
    value = value * 8 + std::uint64_t(c - '0');
  }
  return value;
}

void write_octal(char* field, std::size_t len, std::uint64_t value) {
  // len-1 digits plus NUL, zero-padded.
  for (std::size_t i = len - 1; i-- > 0;) {
    field[i] = char('0' + (value & 7));
    value >>= 3;
  }
  field[len - 1] = '\0';
}

}  // namespace

std::vector<TarEntry> untar(const std::vector<std::uint8_t>& bytes) {
  std::vector<TarEntry> entries;
  std::size_t off = 0;
  while (off + kTarBlock <= bytes.size()) {
    const char* hdr = reinterpret_cast<const char*>(bytes.data() + off);
    bool all_zero = true;
    for (std::size_t i = 0; i < kTarBlock && all_zero; ++i) all_zero = (hdr[i] == 0);
    if (all_zero) break;  // end-of-archive marker

    char name[101] = {};
    std::memcpy(name, hdr, 100);
    const std::uint64_t size = parse_octal(hdr + 124, 12);
    const char type = hdr[156];
    const std::size_t blocks = std::size_t((size + kTarBlock - 1) / kTarBlock);
    if (off + kTarBlock + blocks * kTarBlock > bytes.size()) {
      throw FetchError("tar: truncated archive at entry " + std::string(name));
    }
    if (type == '0' || type == '\0') {  // regular file
      TarEntry e;
      e.name = name;
      e.data.assign(bytes.begin() + long(off + kTarBlock),
                    bytes.begin() + long(off + kTarBlock + size));
      entries.push_back(std::move(e));
    }
    off += kTarBlock + blocks * kTarBlock;
  }
  return entries;
}

std::vector<std::uint8_t> make_tar(const std::vector<TarEntry>& entries) {
  std::vector<std::uint8_t> out;
  for (const auto& e : entries) {
    if (e.name.size() > 99) throw FetchError("tar: name too long: " + e.name);
    std::array<char, kTarBlock> hdr{};
    std::memcpy(hdr.data(), e.name.c_str(), e.name.size());
    write_octal(hdr.data() + 100, 8, 0644);       // mode
    write_octal(hdr.data() + 108, 8, 0);          // uid
    write_octal(hdr.data() + 116, 8, 0);          // gid
    write_octal(hdr.data() + 124, 12, e.data.size());
    write_octal(hdr.data() + 136, 12, 0);         // mtime
    std::memset(hdr.data() + 148, ' ', 8);        // checksum placeholder
    hdr[156] = '0';
    std::memcpy(hdr.data() + 257, "ustar", 6);
    std::memcpy(hdr.data() + 263, "00", 2);
    std::uint64_t sum = 0;
    for (unsigned char c : hdr) sum += c;
    // Checksum field is 6 octal digits, NUL, space.
    char chk[8] = {};
    std::snprintf(chk, sizeof(chk), "%06o", unsigned(sum));
    std::memcpy(hdr.data() + 148, chk, 6);
    hdr[154] = '\0';
    hdr[155] = ' ';

    out.insert(out.end(), hdr.begin(), hdr.end());
    out.insert(out.end(), e.data.begin(), e.data.end());
    const std::size_t pad = (kTarBlock - e.data.size() % kTarBlock) % kTarBlock;
    out.insert(out.end(), pad, 0);
  }
  out.insert(out.end(), 2 * kTarBlock, 0);  // end-of-archive
  return out;
}

namespace {

std::size_t curl_sink(char* ptr, std::size_t size, std::size_t nmemb, void* userdata) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(userdata);
  out->insert(out->end(), reinterpret_cast<std::uint8_t*>(ptr),
              reinterpret_cast<std::uint8_t*>(ptr) + size * nmemb);
  return size * nmemb;
}

struct CurlGlobal {
  CurlGlobal() { curl_global_init(CURL_GLOBAL_DEFAULT); }
  ~CurlGlobal() { curl_global_cleanup(); }
};

void write_file(const std::filesystem::path& path, const std::uint8_t* data,
                std::size_t size) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FetchError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data), std::streamsize(size));
  if (!out) throw FetchError("write failed: " + path.string());
}

}  // namespace

std::vector<std::uint8_t> http_get(const std::string& url, std::ostream* log) {
  static CurlGlobal global;
  if (log) *log << "fetching " << url << std::endl;
  CURL* curl = curl_easy_init();
  if (!curl) throw FetchError("curl init failed");
  std::vector<std::uint8_t> body;
  char errbuf[CURL_ERROR_SIZE] = {};
  curl_easy_setopt(curl, CURLOPT_URL, url.c_str());
  curl_easy_setopt(curl, CURLOPT_FOLLOWLOCATION, 1L);
  curl_easy_setopt(curl, CURLOPT_MAXREDIRS, 5L);
  curl_easy_setopt(curl, CURLOPT_WRITEFUNCTION, curl_sink);
  curl_easy_setopt(curl, CURLOPT_WRITEDATA, &body);
  curl_easy_setopt(curl, CURLOPT_ERRORBUFFER, errbuf);
  curl_easy_setopt(curl, CURLOPT_CONNECTTIMEOUT, 30L);
  curl_easy_setopt(curl, CURLOPT_LOW_SPEED_LIMIT, 1024L);
  curl_easy_setopt(curl, CURLOPT_LOW_SPEED_TIME, 60L);
  curl_easy_setopt(curl, CURLOPT_USERAGENT, "treebp-fetch/1.0");
  const CURLcode rc = curl_easy_perform(curl);
  long status = 0;
  curl_easy_getinfo(curl, CURLINFO_RESPONSE_CODE, &status);
  curl_easy_cleanup(curl);
  if (rc != CURLE_OK) {
    throw FetchError("download failed: " + url + " (" +
                     (errbuf[0] ? errbuf : curl_easy_strerror(rc)) + ")");
  }
  if (status >= 400) {
    throw FetchError("download failed: " + url + " (HTTP " + std::to_string(status) +
                     ")");
  }
  return body;
}

namespace {

std::vector<std::uint8_t> http_get_any(const std::vector<std::string>& urls,
                                       std::ostream* log) {
  std::string errors;
  for (const auto& url : urls) {
    try {
      return http_get(url, log);
    } catch (const FetchError& e) {
      if (log) *log << "  " << e.what() << std::endl;
      if (!errors.empty()) errors += "; ";
      errors += e.what();
    }
  }
  throw FetchError("all mirrors failed: " + errors);
}

}  // namespace

void fetch_cifar10(const std::filesystem::path& dir, std::ostream* log) {
  const auto out_dir = dir / "cifar10";
  std::filesystem::create_directories(out_dir);

  const std::array<const char*, 6> files = {"data_batch_1.bin", "data_batch_2.bin",
                                            "data_batch_3.bin", "data_batch_4.bin",
                                            "data_batch_5.bin", "test_batch.bin"};
  constexpr std::uintmax_t kBatchBytes = 30730000;  // 10000 x 3073
  bool have_all = true;
  for (const char* f : files) {
    std::error_code ec;
    if (std::filesystem::file_size(out_dir / f, ec) != kBatchBytes || ec) {
      have_all = false;
      break;
    }
  }
  if (have_all) {
    if (log) *log << "cifar10: already present in " << out_dir.string() << std::endl;
    return;
  }

  const auto targz = http_get_any(
      {"https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz"}, log);
  const std::string digest = md5_hex(targz.data(), targz.size());
  const std::string expect = "c32a1d4ab5d03f1284b67883e8d87530";
  if (digest != expect) {
    throw FetchError("cifar-10-binary.tar.gz md5 " + digest + ", expected " + expect);
  }
  const auto tar = gzip_decompress(targz.data(), targz.size());
  std::size_t written = 0;
  for (const auto& entry : untar(tar)) {
    const std::string base = std::filesystem::path(entry.name).filename().string();
    if (std::find_if(files.begin(), files.end(), [&](const char* f) {
          return base == f;
        }) == files.end()) {
      continue;
    }
    write_file(out_dir / base, entry.data.data(), entry.data.size());
    if (log) {
      *log << "  wrote " << (out_dir / base).string() << " (" << entry.data.size()
           << " bytes)" << std::endl;
    }
    ++written;
  }
  if (written != files.size()) {
    throw FetchError("cifar archive held " + std::to_string(written) +
                     " of 6 expected batch files");
  }
}

void fetch_mnist(const std::filesystem::path& dir, std::ostream* log) {
  const auto out_dir = dir / "mnist";
  std::filesystem::create_directories(out_dir);

  struct Item {
    const char* name;
    const char* md5;  // of the decompressed file
  };
  const std::array<Item, 4> items = {{
      {"train-images-idx3-ubyte", "6bbc9ace898e44ae57da46a324031adb"},
      {"train-labels-idx1-ubyte", "a25bea736e30d166cdddb491f175f624"},
      {"t10k-images-idx3-ubyte", "2646ac647ad5339dbf082846283269ea"},
      {"t10k-labels-idx1-ubyte", "27ae3e4e09519cfbb04c329615203637"},
  }};

  for (const auto& item : items) {
    const auto path = out_dir / item.name;
    if (std::filesystem::exists(path) && md5_hex_file(path) == item.md5) {
      if (log) *log << "mnist: " << item.name << " already present" << std::endl;
      continue;
    }
    const std::string gz = std::string(item.name) + ".gz";
    const auto body = http_get_any(
        {"https://ossci-datasets.s3.amazonaws.com/mnist/" + gz,
         "https://storage.googleapis.com/cvdf-datasets/mnist/" + gz},
        log);
    const auto raw = gzip_decompress(body.data(), body.size());
    const std::string digest = md5_hex(raw.data(), raw.size());
    if (digest != item.md5) {
      throw FetchError(std::string(item.name) + " md5 " + digest + ", expected " +
                       item.md5);
    }
    write_file(path, raw.data(), raw.size());
    if (log) {
      *log << "  wrote " << path.string() << " (" << raw.size() << " bytes)"
           << std::endl;
    }
  }
}

}  // namespace treebp
