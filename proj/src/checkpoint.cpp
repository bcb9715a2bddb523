#include "glian/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace glian::ckpt {
namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

constexpr char kMagic[8] = {'G', 'L', 'I', 'A', 'N', 'C', 'K', 'P'};
constexpr std::uint8_t kFloat64 = 1;

template <class T>
void put(std::vector<unsigned char>& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.insert(out.end(), b, b + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  template <class T>
  T get(const char* what) {
    T v;
    std::memcpy(&v, take(sizeof(T), what), sizeof(T));
    return v;
  }

  const unsigned char* take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(ErrorKind::kTruncated, std::string("file ends inside ") + what);
    }
    const unsigned char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '\\') out += "\\\\";
    else if (c == '\n') out += "\\n";
    else out += c;
  }
  return out;
}

std::string unescape(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      out += s[i + 1] == 'n' ? '\n' : s[i + 1];
      ++i;
    } else {
      out += s[i];
    }
  }
  return out;
}

}  // namespace

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo: return "io error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kVersion: return "version mismatch";
    case ErrorKind::kTruncated: return "truncated checkpoint";
    case ErrorKind::kNameMismatch: return "tensor name mismatch";
    case ErrorKind::kShapeMismatch: return "tensor shape mismatch";
  }
  return "checkpoint error";
}

const Tensor* Archive::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

std::vector<unsigned char> serialize(const Archive& archive) {
  std::vector<unsigned char> out(kMagic, kMagic + 8);
  put<std::uint32_t>(out, kVersion);
  std::string meta;
  for (const auto& [k, v] : archive.metadata) {
    if (k.empty() || k.find_first_of("=\n") != std::string::npos) {
      throw std::invalid_argument("invalid metadata key '" + k + "'");
    }
    meta += k + "=" + escape(v) + "\n";
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(archive.tensors.size()));
  for (const auto& [name, t] : archive.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put<std::uint8_t>(out, kFloat64);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
    for (double v : t.data()) put<double>(out, v);
  }
  return out;
}

Archive deserialize(const std::vector<unsigned char>& bytes) {
  Reader in(bytes);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw CheckpointError(ErrorKind::kFormat, "bad magic bytes");
  }
  in.take(8, "magic");
  const auto version = in.get<std::uint32_t>("version");
  if (version != kVersion) {
    throw CheckpointError(ErrorKind::kVersion, "file version " + std::to_string(version) +
                                                   ", reader version " + std::to_string(kVersion));
  }
  Archive a;
  const auto meta_len = in.get<std::uint32_t>("metadata length");
  const auto* meta = in.take(meta_len, "metadata");
  std::istringstream lines(std::string(meta, meta + meta_len));
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError(ErrorKind::kFormat, "malformed metadata line");
    a.metadata[line.substr(0, eq)] = unescape(line.substr(eq + 1));
  }
  const auto count = in.get<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = in.get<std::uint32_t>("tensor name length");
    const auto* name = in.take(len, "tensor name");
    std::string n(name, name + len);
    if (in.get<std::uint8_t>("dtype") != kFloat64) {
      throw CheckpointError(ErrorKind::kFormat, "tensor '" + n + "' has an unknown dtype");
    }
    const auto rank = in.get<std::uint32_t>("rank");
    Shape shape;
    std::uint64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(in.get<std::uint64_t>("dims"));
      if (shape.back() == 0 || numel > (bytes.size() / 8) / shape.back()) {
        throw CheckpointError(ErrorKind::kTruncated, "tensor '" + n + "' is larger than the file");
      }
      numel *= shape.back();
    }
    std::vector<double> data(numel);
    std::memcpy(data.data(), in.take(numel * sizeof(double), "tensor payload"), numel * sizeof(double));
    a.tensors.emplace_back(std::move(n), Tensor(std::move(shape), std::move(data)));
  }
  if (!in.done()) throw CheckpointError(ErrorKind::kFormat, "trailing bytes after the last tensor");
  return a;
}

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  const auto bytes = serialize(archive);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(ErrorKind::kIo, "cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(ErrorKind::kIo, "write failed for " + path.string());
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace glian::ckpt
