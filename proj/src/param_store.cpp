#include "ftlab/param_store.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace ftlab {

namespace {

constexpr char kMagic[8] = {'F', 'T', 'C', 'K', 'P', 'T', '0', '1'};

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (v >> (8 * i)) & 0xFF;
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  check(bool(is), "checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

void write_f64(std::ostream& os, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  write_u64(os, bits);
}

double read_f64(std::istream& is) {
  std::uint64_t bits = read_u64(is);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace

void ParamStore::set_trainable_only(const std::vector<std::string>& names) {
  for (auto& [name, e] : entries_) e.trainable = false;
  for (const auto& n : names) set_trainable(n, true);
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

std::vector<std::string> ParamStore::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& [name, e] : entries_)
    if (e.trainable) out.push_back(name);
  return out;
}

std::size_t ParamStore::total_values() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += e.tensor.numel();
  return n;
}

bool ParamStore::same_shapes(const ParamStore& other) const {
  if (size() != other.size()) return false;
  auto it = other.entries_.begin();
  for (const auto& [name, e] : entries_) {
    if (it->first != name || it->second.tensor.shape != e.tensor.shape)
      return false;
    ++it;
  }
  return true;
}

void ParamStore::save(const std::string& path) const {
  namespace fs = std::filesystem;
  fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    check(bool(os), "checkpoint: cannot open '" + tmp.string() + "' for write");
    os.write(kMagic, 8);
    write_u64(os, entries_.size());
    for (const auto& [name, e] : entries_) {
      write_u64(os, name.size());
      os.write(name.data(), std::streamsize(name.size()));
      write_u64(os, e.tensor.shape.size());
      for (std::size_t d : e.tensor.shape) write_u64(os, d);
      write_u64(os, e.trainable ? 1 : 0);
      for (double v : e.tensor.values) write_f64(os, v);
    }
    check(bool(os), "checkpoint: write failure on '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);  // atomic publish
}

ParamStore ParamStore::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(bool(is), "checkpoint: cannot open '" + path + "'");
  char magic[8];
  is.read(magic, 8);
  check(bool(is) && std::memcmp(magic, kMagic, 8) == 0,
        "checkpoint: bad magic in '" + path + "'");
  ParamStore ps;
  std::uint64_t count = read_u64(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint64_t nlen = read_u64(is);
    std::string name(nlen, '\0');
    is.read(name.data(), std::streamsize(nlen));
    check(bool(is), "checkpoint: truncated name");
    std::uint64_t ndim = read_u64(is);
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = read_u64(is);
    bool trainable = read_u64(is) != 0;
    Tensor t(shape);
    for (double& v : t.values) v = read_f64(is);
    ps.add(name, std::move(t), trainable);
  }
  return ps;
}

}  // namespace ftlab
