#include "ssdkit/weights.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ssdkit/error.hpp"

namespace ssdkit {

static_assert(sizeof(float) == 4);

std::size_t Tensor::numel() const {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string bias_key(const std::string& layer) { return layer + "/bias"; }

namespace {

constexpr char kMagic[4] = {'S', 'S', 'D', 'W'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ValidationError("weights: truncated file");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_weights(const WeightStore& w) {
  std::string out(kMagic, 4);
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(w.size()));
  for (const auto& [name, t] : w) {
    if (t.data.size() != t.numel()) throw ValidationError("weights: tensor '" + name + "' data/shape mismatch");
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (float f : t.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

WeightStore deserialize_weights(const std::string& bytes) {
  Reader r(bytes);
  if (r.str(4) != std::string(kMagic, 4)) throw ValidationError("weights: bad magic");
  if (r.u32() != 1) throw ValidationError("weights: unsupported version");
  const std::uint32_t count = r.u32();
  WeightStore w;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str(r.u32());
    Tensor t;
    const std::uint32_t ndim = r.u32();
    if (ndim > 8) throw ValidationError("weights: tensor '" + name + "' has too many dims");
    for (std::uint32_t d = 0; d < ndim; ++d) t.shape.push_back(static_cast<int>(r.u32()));
    const std::size_t n = t.numel();
    if (n > bytes.size()) throw ValidationError("weights: truncated file");
    t.data.resize(n);
    for (std::size_t k = 0; k < n; ++k) t.data[k] = std::bit_cast<float>(r.u32());
    if (!w.emplace(name, std::move(t)).second) throw ValidationError("weights: duplicate tensor '" + name + "'");
  }
  if (!r.done()) throw ValidationError("weights: trailing bytes");
  return w;
}

void save_weights(const WeightStore& w, const std::filesystem::path& path) {
  const std::string bytes = serialize_weights(w);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

WeightStore load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_weights(ss.str());
}

}  // namespace ssdkit
