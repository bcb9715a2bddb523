#pragma once

// Versioned binary archive of named float64 tensors.
//
//   "GLIANCKP"                       8-byte magic
//   u32 version
//   u32 n, n bytes                   metadata: "key=value\n" lines, values escaped
//   u32 count
//   count x { u32 len, name, u8 dtype (1 = float64), u32 rank, u64 dims[rank],
//             little-endian payload }
//
// All integers are little-endian.

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "glian/tensor.hpp"

namespace glian::ckpt {

inline constexpr std::uint32_t kVersion = 1;

enum class ErrorKind { kIo, kFormat, kVersion, kTruncated, kNameMismatch, kShapeMismatch };

const char* to_string(ErrorKind kind);

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

struct Archive {
  std::map<std::string, std::string> metadata;
  std::vector<std::pair<std::string, Tensor>> tensors;  // written in this order

  const Tensor* find(const std::string& name) const;
};

std::vector<unsigned char> serialize(const Archive& archive);
Archive deserialize(const std::vector<unsigned char>& bytes);

void write_archive(const std::filesystem::path& path, const Archive& archive);
Archive read_archive(const std::filesystem::path& path);

}  // namespace glian::ckpt
