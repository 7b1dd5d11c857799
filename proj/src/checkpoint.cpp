#include "spegcl/errors.hpp"
#include "spegcl/io.hpp"
#include "spegcl/trainer.hpp"

#include <bit>
#include <cstring>

namespace spegcl {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O writes host doubles as little-endian");

namespace {

constexpr char kMagic[8] = {'S', 'P', 'G', 'C', 'L', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, const T& value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_doubles(std::string& out, const std::vector<double>& xs) {
  out.append(reinterpret_cast<const char*>(xs.data()), xs.size() * sizeof(double));
}

class Reader {
 public:
  Reader(const std::string& data, std::string path) : data_(data), path_(std::move(path)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> doubles(std::size_t n) {
    need(n * sizeof(double));
    std::vector<double> xs(n);
    std::memcpy(xs.data(), data_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return xs;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError("truncated checkpoint: " + path_);
  }
  const std::string& data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const std::vector<double> flat = ck.params.flatten();
  if (!ck.adam.m.empty() && (ck.adam.m.size() != flat.size() || ck.adam.v.size() != flat.size())) {
    throw StateError("optimizer state does not match parameter count");
  }
  const nlohmann::json header = {
      {"kind", to_string(ck.params.kind)},
      {"layer_dims", ck.params.layer_dims},
      {"emb_dim", ck.params.emb_dim},
      {"init_seed", ck.params.seed},
      {"num_scalars", flat.size()},
      {"adam_step", ck.adam.step},
      {"adam_moments", !ck.adam.m.empty()},
      {"config_hash", ck.config_hash},
      {"config", ck.config},
      {"seed", ck.seed},
      {"epochs_completed", ck.epochs_completed},
      {"history_length", ck.loss_history.size()},
  };
  const std::string text = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  put(out, kVersion);
  put(out, static_cast<std::uint64_t>(text.size()));
  out += text;
  put_doubles(out, flat);
  put_doubles(out, ck.adam.m);
  put_doubles(out, ck.adam.v);
  put_doubles(out, ck.loss_history);
  write_file(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  Reader r(data, path.string());
  if (r.bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw FormatError("not a checkpoint file: " + path.string());
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = r.get<std::uint64_t>();
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(r.bytes(static_cast<std::size_t>(header_len)));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("corrupt checkpoint header: " + std::string(e.what()));
  }

  Checkpoint ck;
  try {
    const auto kind = parse_encoder_kind(h.at("kind").get<std::string>());
    const auto dims = h.at("layer_dims").get<std::vector<int>>();
    const int emb = h.at("emb_dim").get<int>();
    ck.params = init_params(dims, emb, kind, h.at("init_seed").get<std::uint64_t>());
    const auto n = h.at("num_scalars").get<std::size_t>();
    if (n != ck.params.num_scalars()) throw FormatError("checkpoint parameter count mismatch");
    ck.params.unflatten(r.doubles(n));
    ck.adam.step = h.at("adam_step").get<long>();
    if (h.at("adam_moments").get<bool>()) {
      ck.adam.m = r.doubles(n);
      ck.adam.v = r.doubles(n);
    }
    ck.config_hash = h.at("config_hash").get<std::string>();
    ck.config = h.at("config");
    ck.seed = h.at("seed").get<std::uint64_t>();
    ck.epochs_completed = h.at("epochs_completed").get<int>();
    ck.loss_history = r.doubles(h.at("history_length").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("corrupt checkpoint header: " + std::string(e.what()));
  } catch (const ArgumentError& e) {
    throw FormatError("corrupt checkpoint header: " + std::string(e.what()));
  }
  if (!r.done()) throw FormatError("trailing bytes in checkpoint: " + path.string());
  return ck;
}

}  // namespace spegcl
