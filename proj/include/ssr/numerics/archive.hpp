#pragma once

#include "ssr/numerics/tensor.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace ssr {

// On-disk tensor archive shared by checkpoints:
//
//   <dir>/manifest.txt   text, one record per line
//       ssr-tensors 1
//       meta <key> <value to end of line>
//       tensor <name> <byte offset> <rank> <dim0> ... <dimN-1>
//   <dir>/tensors.bin    concatenated little-endian IEEE-754 float64 values
//
// Tensor records appear in blob order; offsets are absolute byte positions.
struct TensorArchive {
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::map<std::string, std::string> meta;

  const Tensor* find(const std::string& name) const;
};

void write_archive(const std::filesystem::path& dir, const TensorArchive& archive);
// Throws FormatError on any manifest/blob inconsistency.
TensorArchive read_archive(const std::filesystem::path& dir);

// Little-endian float64 helpers (also used by the dataset blob).
void write_f64(std::ostream& os, const Scalar* data, std::size_t count);
void read_f64(std::istream& is, Scalar* data, std::size_t count);

}  // namespace ssr
