#include "aeforge/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <unordered_set>

#include "aeforge/error.hpp"
#include "aeforge/util.hpp"

namespace aeforge {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'A', 'E', 'F', 'G'};

template <typename U>
void put(std::vector<std::uint8_t>& out, U value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(U));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return value;
  }

  void read(void* dst, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw ParseError(std::string("checkpoint truncated while reading ") + what + ": need " +
                           std::to_string(n) + " bytes, have " + std::to_string(bytes_.size() - pos_),
                       pos_);
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

const CheckpointEntry& Checkpoint::at(const std::string& name) const {
  if (const auto* e = find(name)) return *e;
  throw ValidationError("checkpoint has no entry '" + name + "'");
}

void Checkpoint::add(std::string name, std::vector<std::uint64_t> dims, std::vector<float> data) {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  if (n != data.size()) throw ShapeError("checkpoint entry '" + name + "': dims do not match data length");
  if (find(name)) throw ValidationError("duplicate checkpoint entry '" + name + "'");
  entries.push_back({std::move(name), std::move(dims), std::move(data)});
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put<std::uint32_t>(out, Checkpoint::kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.entries.size()));
  for (const auto& e : ckpt.entries) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.dims.size()));
    for (auto d : e.dims) put<std::uint64_t>(out, d);
    const auto* p = reinterpret_cast<const std::uint8_t*>(e.data.data());
    out.insert(out.end(), p, p + e.data.size() * sizeof(float));
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[4];
  r.read(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw ParseError("not an AEFG checkpoint (bad magic)", 0);
  const auto version = r.get<std::uint32_t>("version");
  if (version != Checkpoint::kVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version), 4);
  }
  const auto count = r.get<std::uint32_t>("entry count");
  Checkpoint ckpt;
  std::unordered_set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const auto name_len = r.get<std::uint32_t>("name length");
    const auto name_pos = r.pos();
    e.name.resize(name_len);
    r.read(e.name.data(), name_len, "name");
    if (!names.insert(e.name).second) throw ParseError("duplicate entry name '" + e.name + "'", name_pos);
    const auto rank = r.get<std::uint32_t>("rank");
    std::uint64_t numel = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      e.dims.push_back(r.get<std::uint64_t>("dims"));
      numel *= e.dims.back();
    }
    if (numel > bytes.size()) throw ParseError("entry '" + e.name + "' claims more data than the file holds", r.pos());
    e.data.resize(numel);
    r.read(e.data.data(), numel * sizeof(float), "tensor data");
    ckpt.entries.push_back(std::move(e));
  }
  if (!r.done()) throw ParseError("trailing bytes after last checkpoint entry", r.pos());
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

std::string checkpoint_hash(const Checkpoint& ckpt) { return hex64(fnv1a64(encode_checkpoint(ckpt))); }

}  // namespace aeforge
