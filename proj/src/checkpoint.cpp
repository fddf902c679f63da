#include "treebp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace treebp {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'T', 'R', 'B', 'P', 'C', 'K', '0', '1'};

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw FormatError("checkpoint not writable: " + path.string());
  }
  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), std::streamsize(n));
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void tensor(const Tensor<float>& t) {
    u32(std::uint32_t(t.rank()));
    for (std::size_t d = 0; d < t.rank(); ++d) u64(t.extent(d));
    bytes(t.data(), t.size() * sizeof(float));
  }
  void finish(const std::filesystem::path& path) {
    out_.flush();
    if (!out_) throw FormatError("checkpoint write failed: " + path.string());
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path)
      : in_(path, std::ios::binary), path_(path.string()) {
    if (!in_) throw FormatError("checkpoint not readable: " + path_);
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), std::streamsize(n));
    if (std::size_t(in_.gcount()) != n) {
      throw FormatError("checkpoint truncated: " + path_);
    }
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  Tensor<float> tensor() {
    const std::uint32_t rank = u32();
    if (rank == 0 || rank > 8) {
      throw FormatError("checkpoint corrupt: tensor rank " + std::to_string(rank) +
                        " in " + path_);
    }
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (auto& e : shape) {
      const std::uint64_t ext = u64();
      if (ext == 0 || ext > (1ull << 32) || n > (1ull << 32)) {
        throw FormatError("checkpoint corrupt: tensor extents in " + path_);
      }
      e = std::size_t(ext);
      n *= e;
    }
    Tensor<float> t(shape);
    bytes(t.data(), t.size() * sizeof(float));
    return t;
  }
  const std::string& path() const { return path_; }

 private:
  std::ifstream in_;
  std::string path_;
};

void write_header(Writer& w, Arch arch) {
  w.bytes(kMagic, sizeof(kMagic));
  w.u8(std::uint8_t(arch));
}

void write_tree_cfg(Writer& w, const Tree3Config& cfg) {
  w.u32(std::uint32_t(cfg.k));
  w.u32(std::uint32_t(cfg.m));
  w.u8(cfg.geometry == Geometry::CIFAR ? 0 : 1);
  w.u8(cfg.activation == Activation::ReLU ? 0 : 1);
  w.u32(std::uint32_t(cfg.outputs));
}

Tree3Config read_tree_cfg(Reader& r) {
  Tree3Config cfg;
  cfg.k = r.u32();
  cfg.m = r.u32();
  cfg.geometry = r.u8() == 0 ? Geometry::CIFAR : Geometry::MNIST;
  cfg.activation = r.u8() == 0 ? Activation::ReLU : Activation::Sigmoid;
  cfg.outputs = r.u32();
  cfg.validate();
  return cfg;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Tree3Params<float>& params,
                     const Tree3Config& cfg) {
  check_tree3_shapes(params, cfg);
  Writer w(path);
  write_header(w, Arch::Tree3);
  write_tree_cfg(w, cfg);
  w.u32(3);
  w.tensor(params.w_conv);
  w.tensor(params.w_tree);
  w.tensor(params.w_fc);
  w.finish(path);
}

void save_checkpoint(const std::filesystem::path& path, const LeNet5Params<float>& params,
                     const LeNet5Config& cfg) {
  Writer w(path);
  write_header(w, Arch::LeNet5);
  w.u32(std::uint32_t(cfg.c1));
  w.u32(std::uint32_t(cfg.c2));
  w.u32(std::uint32_t(cfg.f1));
  w.u32(std::uint32_t(cfg.f2));
  w.u8(cfg.activation == Activation::ReLU ? 0 : 1);
  w.u8(cfg.bias ? 1 : 0);
  w.u32(10);
  for (const auto* t : params.tensors()) w.tensor(*t);
  w.finish(path);
}

void save_checkpoint(const std::filesystem::path& path, const TenTreeParams<float>& params,
                     const Tree3Config& cfg) {
  Writer w(path);
  write_header(w, Arch::TenTree);
  write_tree_cfg(w, cfg);
  w.u32(21);
  w.tensor(params.w_conv);
  for (const auto& h : params.heads) {
    w.tensor(h.w_tree);
    w.tensor(h.w_fc);
  }
  w.finish(path);
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, 6) != 0) {
    throw FormatError("not a checkpoint file (bad magic): " + r.path());
  }
  if (std::memcmp(magic, kMagic, 8) != 0) {
    throw FormatError("unsupported checkpoint version in " + r.path());
  }
  const std::uint8_t arch_tag = r.u8();
  CheckpointData data;
  if (arch_tag == std::uint8_t(Arch::Tree3)) {
    data.arch = Arch::Tree3;
    data.tree_cfg = read_tree_cfg(r);
    if (r.u32() != 3) throw FormatError("checkpoint corrupt: tensor count in " + r.path());
    Tree3Params<float> p;
    p.w_conv = r.tensor();
    p.w_tree = r.tensor();
    p.w_fc = r.tensor();
    check_tree3_shapes(p, data.tree_cfg);
    data.params = std::move(p);
  } else if (arch_tag == std::uint8_t(Arch::LeNet5)) {
    data.arch = Arch::LeNet5;
    LeNet5Config cfg;
    cfg.c1 = r.u32();
    cfg.c2 = r.u32();
    cfg.f1 = r.u32();
    cfg.f2 = r.u32();
    cfg.activation = r.u8() == 0 ? Activation::ReLU : Activation::Sigmoid;
    cfg.bias = r.u8() != 0;
    cfg.validate();
    data.lenet_cfg = cfg;
    if (r.u32() != 10) {
      throw FormatError("checkpoint corrupt: tensor count in " + r.path());
    }
    LeNet5Params<float> p;
    for (auto* t : p.tensors()) *t = r.tensor();
    const auto expect = zero_lenet5_params<float>(cfg);
    auto have = p.tensors();
    auto want = expect.tensors();
    for (std::size_t i = 0; i < have.size(); ++i) {
      if (!have[i]->same_shape(*want[i])) {
        throw FormatError("checkpoint corrupt: tensor " + std::to_string(i) +
                          " shape " + shape_string(have[i]->shape()) +
                          " does not match config in " + r.path());
      }
    }
    data.params = std::move(p);
  } else if (arch_tag == std::uint8_t(Arch::TenTree)) {
    data.arch = Arch::TenTree;
    data.tree_cfg = read_tree_cfg(r);
    if (r.u32() != 21) {
      throw FormatError("checkpoint corrupt: tensor count in " + r.path());
    }
    TenTreeParams<float> p;
    p.w_conv = r.tensor();
    for (auto& h : p.heads) {
      h.w_tree = r.tensor();
      h.w_fc = r.tensor();
    }
    data.params = std::move(p);
  } else {
    throw FormatError("checkpoint corrupt: unknown architecture tag " +
                      std::to_string(arch_tag) + " in " + r.path());
  }
  return data;
}

std::pair<Tree3Params<float>, Tree3Config> load_tree3_checkpoint(
    const std::filesystem::path& path) {
  auto data = load_checkpoint(path);
  if (data.arch != Arch::Tree3) {
    throw ConfigError("checkpoint " + path.string() + " holds a " +
                      std::string(arch_name(data.arch)) + " model, expected tree3");
  }
  return {std::get<Tree3Params<float>>(std::move(data.params)), data.tree_cfg};
}

void require_same_config(const Tree3Config& expected, const Tree3Config& actual) {
  std::string diffs;
  auto add = [&](const std::string& d) {
    if (!diffs.empty()) diffs += ", ";
    diffs += d;
  };
  if (expected.k != actual.k) {
    add("K " + std::to_string(actual.k) + " != " + std::to_string(expected.k));
  }
  if (expected.m != actual.m) {
    add("M " + std::to_string(actual.m) + " != " + std::to_string(expected.m));
  }
  if (expected.geometry != actual.geometry) {
    add(std::string("geometry ") + geometry_name(actual.geometry) + " != " +
        geometry_name(expected.geometry));
  }
  if (expected.activation != actual.activation) {
    add(std::string("activation ") + activation_name(actual.activation) + " != " +
        activation_name(expected.activation));
  }
  if (expected.outputs != actual.outputs) {
    add("outputs " + std::to_string(actual.outputs) + " != " +
        std::to_string(expected.outputs));
  }
  if (!diffs.empty()) throw ConfigError("config mismatch: " + diffs);
}

}  // namespace treebp
