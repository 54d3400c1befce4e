#include "rcnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

namespace rcnet {
namespace {

constexpr char kMagic[4] = {'R', 'C', 'N', '1'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    out_.append(static_cast<const char*>(data), n);
  }
  template <typename U>
  void le(U value) {
    static_assert(std::is_integral_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i)
      out_.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
  }
  void str32(const std::string& s) {
    le<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  template <typename T>
  void values(std::span<const T> v) {
    using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    for (T x : v) le<Bits>(std::bit_cast<Bits>(x));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& data) : data_(data) {}

  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw IoError("checkpoint is truncated");
  }
  template <typename U>
  U le() {
    need(sizeof(U));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename T>
  void values(std::span<T> out) {
    using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    need(out.size() * sizeof(T));
    for (auto& x : out) x = std::bit_cast<T>(le<Bits>());
  }
  template <typename T>
  void skip_values(std::size_t count) {
    need(count * sizeof(T));
    pos_ += count * sizeof(T);
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  const std::string& data_;
  std::size_t pos_ = 0;
};

template <typename T>
void write_record(Writer& w, const std::string& name, const std::vector<std::size_t>& dims,
                  std::span<const T> values) {
  w.str32(name);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) w.le<std::uint64_t>(d);
  w.le<std::uint8_t>(static_cast<std::uint8_t>(precision_of<T>()));
  w.values<T>(values);
}

struct RawRecord {
  std::vector<std::size_t> dims;
  Precision precision;
  std::string payload;
};

template <typename T>
Checkpoint<T> restore(RunConfig config, std::size_t iteration,
                      std::map<std::string, RawRecord>& records) {
  Checkpoint<T> ck{config, iteration, Network<T>::build(config.net, config.seed), std::nullopt};
  auto fill = [&](const std::string& name, const std::vector<std::size_t>& dims, std::span<T> dst) {
    auto it = records.find(name);
    if (it == records.end()) throw IoError("checkpoint is missing buffer " + name);
    if (it->second.dims != dims) throw IoError("checkpoint buffer " + name + " has the wrong shape");
    if (it->second.precision != precision_of<T>())
      throw IoError("checkpoint buffer " + name + " has the wrong precision");
    Reader r(it->second.payload);
    r.values<T>(dst);
    records.erase(it);
  };
  for (auto& b : ck.net.buffers()) fill(b.name, b.dims, b.value);
  auto params = ck.net.parameters();
  if (records.count("velocity/" + params.front().name)) {
    SGDState<T> state;
    state.iteration = iteration;
    for (auto& p : params) {
      state.velocity.emplace_back(p.value.size(), T(0));
      fill("velocity/" + p.name, p.dims, state.velocity.back());
    }
    ck.optimizer = std::move(state);
  }
  if (!records.empty()) throw IoError("checkpoint has unexpected buffer " + records.begin()->first);
  return ck;
}

}  // namespace

template <typename T>
std::string encode_checkpoint(const RunConfig& config, std::size_t iteration, Network<T>& net,
                              const SGDState<T>* optimizer) {
  if (config.precision != precision_of<T>())
    throw Error("checkpoint config precision does not match the network");
  if (!(config.net == net.config())) throw Error("checkpoint config does not match the network");
  Writer w;
  w.bytes(kMagic, 4);
  w.le<std::uint32_t>(kCheckpointVersion);
  const std::string text = serialize_config(config);
  w.le<std::uint64_t>(text.size());
  w.bytes(text.data(), text.size());
  w.le<std::uint64_t>(iteration);

  auto buffers = net.buffers();
  auto params = net.parameters();
  const bool with_velocity = optimizer != nullptr && !optimizer->velocity.empty();
  if (with_velocity && optimizer->velocity.size() != params.size())
    throw ShapeError("optimizer state does not match the network parameters");
  w.le<std::uint32_t>(
      static_cast<std::uint32_t>(buffers.size() + (with_velocity ? params.size() : 0)));
  for (const auto& b : buffers) write_record<T>(w, b.name, b.dims, b.value);
  if (with_velocity)
    for (std::size_t i = 0; i < params.size(); ++i)
      write_record<T>(w, "velocity/" + params[i].name, params[i].dims, optimizer->velocity[i]);
  return w.take();
}

AnyCheckpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.str(4) != std::string(kMagic, 4)) throw IoError("not an RCN1 checkpoint (bad magic)");
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  const auto text_len = r.le<std::uint64_t>();
  RunConfig config = parse_config(r.str(text_len));
  const auto iteration = r.le<std::uint64_t>();
  const auto count = r.le<std::uint32_t>();

  std::map<std::string, RawRecord> records;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.le<std::uint32_t>());
    RawRecord rec;
    const auto rank = r.le<std::uint32_t>();
    std::size_t elements = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      rec.dims.push_back(r.le<std::uint64_t>());
      elements *= rec.dims.back();
    }
    const auto tag = r.le<std::uint8_t>();
    if (tag != 1 && tag != 2) throw IoError("checkpoint buffer " + name + " has an unknown precision tag");
    rec.precision = static_cast<Precision>(tag);
    rec.payload = r.str(elements * (tag == 1 ? 4 : 8));
    records.emplace(std::move(name), std::move(rec));
  }
  if (!r.done()) throw IoError("checkpoint has trailing bytes");
  if (config.precision == Precision::single) return restore<float>(config, iteration, records);
  return restore<double>(config, iteration, records);
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const RunConfig& config,
                     std::size_t iteration, Network<T>& net, const SGDState<T>* optimizer) {
  const std::string bytes = encode_checkpoint(config, iteration, net, optimizer);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

AnyCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

bool is_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4] = {};
  return in.read(magic, 4) && std::memcmp(magic, kMagic, 4) == 0;
}

template std::string encode_checkpoint(const RunConfig&, std::size_t, Network<float>&,
                                       const SGDState<float>*);
template std::string encode_checkpoint(const RunConfig&, std::size_t, Network<double>&,
                                       const SGDState<double>*);
template void save_checkpoint(const std::filesystem::path&, const RunConfig&, std::size_t,
                              Network<float>&, const SGDState<float>*);
template void save_checkpoint(const std::filesystem::path&, const RunConfig&, std::size_t,
                              Network<double>&, const SGDState<double>*);

}  // namespace rcnet
