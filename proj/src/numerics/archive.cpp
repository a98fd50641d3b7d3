#include "ssr/numerics/archive.hpp"

#include "ssr/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ssr {
namespace {

constexpr const char* kMagic = "ssr-tensors";
constexpr int kVersion = 1;

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
  }
}

}  // namespace

const Tensor* TensorArchive::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void write_f64(std::ostream& os, const Scalar* data, std::size_t count) {
  static_assert(sizeof(Scalar) == 8);
  std::vector<std::uint64_t> buf(count);
  for (std::size_t i = 0; i < count; ++i) buf[i] = to_le(std::bit_cast<std::uint64_t>(data[i]));
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(count * 8));
}

void read_f64(std::istream& is, Scalar* data, std::size_t count) {
  std::vector<std::uint64_t> buf(count);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count * 8));
  if (static_cast<std::size_t>(is.gcount()) != count * 8) throw FormatError("blob truncated");
  for (std::size_t i = 0; i < count; ++i) data[i] = std::bit_cast<Scalar>(to_le(buf[i]));
}

void write_archive(const std::filesystem::path& dir, const TensorArchive& archive) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt", std::ios::trunc);
  std::ofstream blob(dir / "tensors.bin", std::ios::binary | std::ios::trunc);
  if (!manifest || !blob) throw FormatError("cannot write archive in " + dir.string());
  manifest << kMagic << ' ' << kVersion << '\n';
  for (const auto& [key, value] : archive.meta) {
    if (key.find_first_of(" \n") != std::string::npos || value.find('\n') != std::string::npos) {
      throw FormatError("archive meta key/value not representable: " + key);
    }
    manifest << "meta " << key << ' ' << value << '\n';
  }
  std::uint64_t offset = 0;
  for (const auto& [name, t] : archive.tensors) {
    if (name.find_first_of(" \n") != std::string::npos) throw FormatError("tensor name with whitespace: " + name);
    manifest << "tensor " << name << ' ' << offset << ' ' << t.rank();
    for (Index d : t.shape()) manifest << ' ' << d;
    manifest << '\n';
    write_f64(blob, t.value().data(), static_cast<std::size_t>(t.size()));
    offset += static_cast<std::uint64_t>(t.size()) * 8;
  }
  if (!manifest || !blob) throw FormatError("write failed in " + dir.string());
}

TensorArchive read_archive(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw FormatError("missing manifest.txt in " + dir.string());
  std::string line;
  std::getline(manifest, line);
  {
    std::istringstream head(line);
    std::string magic;
    int version = 0;
    head >> magic >> version;
    if (magic != kMagic || version != kVersion) throw FormatError("manifest header: expected '" + std::string(kMagic) +
                                                                  " 1', got '" + line + "'");
  }

  struct Entry {
    std::string name;
    std::uint64_t offset;
    Shape shape;
  };
  std::vector<Entry> entries;
  TensorArchive archive;
  std::size_t lineno = 1;
  while (std::getline(manifest, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string kind;
    is >> kind;
    if (kind == "meta") {
      std::string key;
      is >> key;
      std::string value;
      std::getline(is, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      archive.meta[key] = value;
    } else if (kind == "tensor") {
      Entry e;
      Index rank = -1;
      is >> e.name >> e.offset >> rank;
      if (!is || rank < 0) throw FormatError("manifest line " + std::to_string(lineno) + ": bad tensor record");
      for (Index r = 0; r < rank; ++r) {
        Index d = 0;
        is >> d;
        if (!is || d <= 0) {
          throw FormatError("manifest line " + std::to_string(lineno) + ": bad dimension for tensor " + e.name);
        }
        e.shape.push_back(d);
      }
      entries.push_back(std::move(e));
    } else {
      throw FormatError("manifest line " + std::to_string(lineno) + ": unknown record '" + kind + "'");
    }
  }

  std::ifstream blob(dir / "tensors.bin", std::ios::binary);
  if (!blob) throw FormatError("missing tensors.bin in " + dir.string());
  blob.seekg(0, std::ios::end);
  const auto blob_size = static_cast<std::uint64_t>(blob.tellg());
  std::uint64_t expected = 0;
  for (const auto& e : entries) {
    if (e.offset != expected) {
      throw FormatError("tensor " + e.name + ": offset " + std::to_string(e.offset) + " != expected " +
                        std::to_string(expected));
    }
    expected += static_cast<std::uint64_t>(shape_size(e.shape)) * 8;
  }
  if (expected != blob_size) {
    throw FormatError("tensors.bin size " + std::to_string(blob_size) + " != manifest total " +
                      std::to_string(expected));
  }
  blob.seekg(0);
  for (auto& e : entries) {
    Vector v(shape_size(e.shape));
    read_f64(blob, v.data(), static_cast<std::size_t>(v.size()));
    archive.tensors.emplace_back(e.name, Tensor(e.shape, std::move(v)));
  }
  return archive;
}

}  // namespace ssr
