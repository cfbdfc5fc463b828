#include "viapt/training/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

namespace viapt {
namespace {

constexpr char kMagic[6] = {'V', 'I', 'A', 'P', 'T', '\x01'};

class Writer {
 public:
  std::vector<std::uint8_t> out;
  template <typename U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& b, std::size_t limit) : buf_(b), limit_(limit) {}
  template <typename U>
  U le(const char* field) {
    need(sizeof(U), field);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  void raw(void* dst, std::size_t n, const char* field) {
    need(n, field);
    if (n) std::memcpy(dst, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* field) {
    if (n > limit_ - pos_) throw FormatError(std::string("truncated archive while reading ") + field);
  }
  const std::vector<std::uint8_t>& buf_;
  std::size_t limit_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(const std::uint8_t* p, std::size_t n) {
  uLong c = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    c = crc32(c, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

std::size_t dtype_size(DType d) { return d == DType::f32 ? 4 : 8; }

}  // namespace

const ArchiveEntry* Archive::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

template <typename T>
ArchiveEntry make_entry(const std::string& name, const Tensor<T>& t) {
  static_assert(std::endian::native == std::endian::little, "archive payloads are little-endian");
  ArchiveEntry e;
  e.name = name;
  e.dtype = dtype_of<T>();
  e.shape = t.shape();
  e.payload.resize(t.size() * sizeof(T));
  if (t.size()) std::memcpy(e.payload.data(), t.ptr(), e.payload.size());
  return e;
}

template <typename T>
Tensor<T> entry_tensor(const ArchiveEntry& e) {
  if (e.dtype != dtype_of<T>()) {
    throw FormatError("entry '" + e.name + "' holds " + to_string(e.dtype) + " data but a " +
                      to_string(dtype_of<T>()) + " tensor was requested");
  }
  Tensor<T> t(e.shape);
  if (e.payload.size() != t.size() * sizeof(T))
    throw FormatError("entry '" + e.name + "' payload size does not match its dims");
  if (t.size()) std::memcpy(t.ptr(), e.payload.data(), e.payload.size());
  return t;
}

std::vector<std::uint8_t> serialize_archive(const Archive& a) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.le<std::uint16_t>(kCheckpointVersion);
  const std::string meta = a.metadata.dump();
  w.le<std::uint32_t>(static_cast<std::uint32_t>(meta.size()));
  w.raw(meta.data(), meta.size());
  w.le<std::uint32_t>(static_cast<std::uint32_t>(a.entries.size()));
  for (const auto& e : a.entries) {
    if (e.name.size() > 0xffff) throw FormatError("entry name too long: " + e.name);
    if (e.shape.size() > 0xff) throw FormatError("entry rank too large: " + e.name);
    w.le<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
    w.raw(e.name.data(), e.name.size());
    w.le<std::uint8_t>(static_cast<std::uint8_t>(e.dtype));
    w.le<std::uint8_t>(static_cast<std::uint8_t>(e.shape.size()));
    for (auto dim : e.shape) w.le<std::uint64_t>(dim);
    w.raw(e.payload.data(), e.payload.size());
  }
  w.le<std::uint32_t>(crc32_of(w.out.data(), w.out.size()));
  return std::move(w.out);
}

Archive parse_archive(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof(kMagic) + 2 + 4 + 4 + 4) throw FormatError("truncated archive: header");
  const std::size_t body = bytes.size() - 4;
  Reader r(bytes, body);
  char magic[sizeof(kMagic)];
  r.raw(magic, sizeof(magic), "magic");
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw FormatError("bad magic");
  const auto version = r.le<std::uint16_t>("version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported version " + std::to_string(version));

  std::uint32_t stored_crc = 0;
  for (int i = 0; i < 4; ++i) stored_crc |= std::uint32_t{bytes[body + i]} << (8 * i);
  if (crc32_of(bytes.data(), body) != stored_crc) throw FormatError("CRC32 mismatch");

  Archive a;
  const auto meta_len = r.le<std::uint32_t>("metadata length");
  std::string meta(meta_len, '\0');
  r.raw(meta.data(), meta_len, "metadata");
  try {
    a.metadata = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metadata is not valid JSON: ") + e.what());
  }
  const auto count = r.le<std::uint32_t>("entry count");
  for (std::uint32_t i = 0; i < count; ++i) {
    ArchiveEntry e;
    const auto name_len = r.le<std::uint16_t>("entry name length");
    e.name.resize(name_len);
    r.raw(e.name.data(), name_len, "entry name");
    const auto code = r.le<std::uint8_t>("dtype");
    if (code != 1 && code != 2)
      throw FormatError("entry '" + e.name + "' has unknown dtype code " + std::to_string(code));
    e.dtype = static_cast<DType>(code);
    const auto rank = r.le<std::uint8_t>("rank");
    std::uint64_t numel = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      const auto dim = r.le<std::uint64_t>("dims");
      if (dim != 0 && numel > (std::uint64_t{1} << 40) / dim)
        throw FormatError("entry '" + e.name + "' dims overflow");
      numel *= dim;
      e.shape.push_back(static_cast<std::size_t>(dim));
    }
    const std::uint64_t nbytes = numel * dtype_size(e.dtype);
    if (nbytes > body - r.pos()) throw FormatError("truncated archive while reading payload of '" + e.name + "'");
    e.payload.resize(static_cast<std::size_t>(nbytes));
    r.raw(e.payload.data(), e.payload.size(), "payload");
    a.entries.push_back(std::move(e));
  }
  if (r.pos() != body) throw FormatError("trailing bytes before CRC");
  return a;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed for " + path.string());
}

void write_archive(const Archive& a, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_archive(a));
}

Archive read_archive(const std::filesystem::path& path) { return parse_archive(read_file_bytes(path)); }

template ArchiveEntry make_entry(const std::string&, const Tensor<float>&);
template ArchiveEntry make_entry(const std::string&, const Tensor<double>&);
template Tensor<float> entry_tensor(const ArchiveEntry&);
template Tensor<double> entry_tensor(const ArchiveEntry&);

}  // namespace viapt
