#include "posefuse/checkpoint.hpp"

#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "posefuse/errors.hpp"

namespace posefuse::cli {

namespace {

constexpr char kMagic[4] = {'P', 'F', 'C', 'K'};

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int b = 0; b < 8; ++b) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    table[i] = c;
  }
  return table;
}

const std::array<std::uint32_t, 256>& crc_table() {
  static const auto table = make_crc_table();
  return table;
}

class Writer {
 public:
  void bytes(const void* data, std::size_t len) {
    const auto* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + len);
  }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(const double* data, std::size_t count) { bytes(data, count * sizeof(double)); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  const std::vector<char>& data() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> buf) : buf_(std::move(buf)) {}

  void bytes(void* out, std::size_t len) {
    if (pos_ + len > buf_.size()) throw CorruptCheckpoint("checkpoint truncated");
    std::memcpy(out, buf_.data() + pos_, len);
    pos_ += len;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str() {
    const std::uint64_t len = u64();
    if (len > remaining()) throw CorruptCheckpoint("checkpoint truncated (string)");
    std::string s(len, '\0');
    bytes(s.data(), len);
    return s;
  }
  std::size_t remaining() const { return buf_.size() - pos_; }
  std::size_t pos() const { return pos_; }
  const std::vector<char>& raw() const { return buf_; }

 private:
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

void write_record(Writer& w, const std::string& name, const std::vector<std::uint64_t>& dims,
                  const Eigen::VectorXd& values) {
  w.str(name);
  w.u64(dims.size());
  for (auto d : dims) w.u64(d);
  w.f64(values.data(), static_cast<std::size_t>(values.size()));
}

}  // namespace

std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed) {
  const auto& table = crc_table();
  std::uint32_t c = seed ^ 0xFFFFFFFFu;
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) c = table[(c ^ p[i]) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(ckpt.version);
  w.u32(crc32(ckpt.model_config.data(), ckpt.model_config.size()));
  w.str(ckpt.model_config);
  w.str(ckpt.rng_state);
  w.u64(ckpt.phase_cursor);

  w.u64(4 * static_cast<std::uint64_t>(ckpt.params.size()));
  for (const auto& [name, p] : ckpt.params) {
    write_record(w, name, p.dims, p.value);
    write_record(w, name + "!m", p.dims, p.adam_m);
    write_record(w, name + "!v", p.dims, p.adam_v);
    Eigen::VectorXd step(1);
    step[0] = static_cast<double>(p.step);
    write_record(w, name + "!t", {1}, step);
  }
  const std::uint32_t crc = crc32(w.data().data(), w.data().size());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("save_checkpoint: cannot open " + tmp);
    out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
    out.write(reinterpret_cast<const char*>(&crc), sizeof crc);
    if (!out) throw IoError("save_checkpoint: write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("save_checkpoint: rename to " + path + " failed: " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path);
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (buf.size() < 4 + sizeof(std::uint32_t) * 2) throw CorruptCheckpoint("checkpoint too short");
  if (std::memcmp(buf.data(), kMagic, 4) != 0) throw CorruptCheckpoint("bad magic");
  std::uint32_t version;
  std::memcpy(&version, buf.data() + 4, sizeof version);
  if (version != kCheckpointVersion) {
    throw VersionMismatch("checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }

  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, buf.data() + buf.size() - sizeof stored_crc, sizeof stored_crc);
  const std::uint32_t actual_crc = crc32(buf.data(), buf.size() - sizeof stored_crc);
  if (stored_crc != actual_crc) throw CorruptCheckpoint("CRC mismatch");
  buf.resize(buf.size() - sizeof stored_crc);

  Reader r(std::move(buf));
  char magic[4];
  r.bytes(magic, 4);
  Checkpoint ckpt;
  ckpt.version = r.u32();
  const std::uint32_t digest = r.u32();
  ckpt.model_config = r.str();
  if (digest != crc32(ckpt.model_config.data(), ckpt.model_config.size())) {
    throw CorruptCheckpoint("config digest mismatch");
  }
  ckpt.rng_state = r.str();
  ckpt.phase_cursor = r.u64();

  const std::uint64_t n_records = r.u64();
  for (std::uint64_t rec = 0; rec < n_records; ++rec) {
    const std::string name = r.str();
    const std::uint64_t rank = r.u64();
    if (rank > 8) throw CorruptCheckpoint("implausible tensor rank");
    std::vector<std::uint64_t> dims(rank);
    std::uint64_t count = 1;
    for (auto& d : dims) {
      d = r.u64();
      count *= d;
    }
    if (count * sizeof(double) > r.remaining()) throw CorruptCheckpoint("checkpoint truncated (values)");
    Eigen::VectorXd values(static_cast<Eigen::Index>(count));
    r.bytes(values.data(), count * sizeof(double));

    const auto bang = name.find('!');
    if (bang == std::string::npos) {
      nn::Param& p = ckpt.params.add(name, dims);
      p.value = values;
    } else {
      const std::string base = name.substr(0, bang);
      const std::string kind = name.substr(bang + 1);
      if (!ckpt.params.has(base)) throw CorruptCheckpoint("moment record before value: " + name);
      nn::Param& p = ckpt.params.at(base);
      if (kind == "m") {
        if (dims != p.dims) throw CorruptCheckpoint("moment shape mismatch: " + name);
        p.adam_m = values;
      } else if (kind == "v") {
        if (dims != p.dims) throw CorruptCheckpoint("moment shape mismatch: " + name);
        p.adam_v = values;
      } else if (kind == "t") {
        if (count != 1) throw CorruptCheckpoint("step record must hold one value: " + name);
        p.step = static_cast<std::uint64_t>(values[0]);
      } else {
        throw CorruptCheckpoint("unknown record suffix: " + name);
      }
    }
  }
  if (r.remaining() != 0) throw CorruptCheckpoint("trailing bytes after records");
  return ckpt;
}

}  // namespace posefuse::cli
