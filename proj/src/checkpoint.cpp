#include <cstring>
#include <fstream>

#include "hvacf/errors.hpp"
#include "hvacf/trainer.hpp"

namespace hvacf::train {

using model::Param;

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  unsigned char b[4];
  std::memcpy(b, &v, 4);
  out.insert(out.end(), b, b + 4);
}

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  std::span<const unsigned char> take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw FormatError("checkpoint: truncated");
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    std::memcpy(&v, take(4).data(), 4);
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_checkpoint(const TrainConfig& cfg, const model::EmbeddingTables& t) {
  std::vector<unsigned char> out(kCheckpointMagic, kCheckpointMagic + sizeof(kCheckpointMagic));
  const std::string json = canonical_json(cfg);
  put_u32(out, static_cast<std::uint32_t>(json.size()));
  out.insert(out.end(), json.begin(), json.end());
  put_u32(out, static_cast<std::uint32_t>(model::kParamCount));
  for (std::size_t s = 0; s < model::kParamCount; ++s) {
    const auto name = model::param_name(s);
    const Tensor& x = t.tensors[s];
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, 2);
    put_u32(out, static_cast<std::uint32_t>(x.rows));
    put_u32(out, static_cast<std::uint32_t>(x.cols));
    for (double v : x.data) {
      const float f = static_cast<float>(v);
      unsigned char b[4];
      std::memcpy(b, &f, 4);
      out.insert(out.end(), b, b + 4);
    }
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const unsigned char> bytes) {
  Reader r(bytes);
  if (bytes.size() < sizeof(kCheckpointMagic) ||
      std::memcmp(r.take(sizeof(kCheckpointMagic)).data(), kCheckpointMagic,
                  sizeof(kCheckpointMagic)) != 0)
    throw FormatError("checkpoint: bad magic (expected HVACF01)");

  Checkpoint ck;
  const auto json_bytes = r.take(r.u32());
  try {
    ck.cfg = config_from_json(nlohmann::json::parse(json_bytes.begin(), json_bytes.end()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad config json: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }

  const std::uint32_t count = r.u32();
  if (count != model::kParamCount)
    throw FormatError("checkpoint: expected " + std::to_string(model::kParamCount) + " tensors");
  for (std::size_t s = 0; s < count; ++s) {
    const auto name_bytes = r.take(r.u32());
    const std::string name(name_bytes.begin(), name_bytes.end());
    if (name != model::param_name(s))
      throw FormatError("checkpoint: unexpected tensor '" + name + "', expected '" +
                        std::string(model::param_name(s)) + "'");
    const std::uint32_t rank = r.u32();
    if (rank != 2) throw FormatError("checkpoint: tensor " + name + " must have rank 2");
    const std::uint32_t rows = r.u32(), cols = r.u32();
    Tensor x(rows, cols);
    const auto payload = r.take(std::size_t(rows) * cols * 4);
    for (std::size_t k = 0; k < x.size(); ++k) {
      float f;
      std::memcpy(&f, payload.data() + 4 * k, 4);
      x.data[k] = f;
    }
    ck.tables.tensors[s] = std::move(x);
  }
  if (!r.done()) throw FormatError("checkpoint: trailing data");

  const auto& t = ck.tables;
  const std::size_t D = t.dim();
  auto shape_ok = [&](Param p, std::size_t rows, std::size_t cols) {
    return t[p].rows == rows && t[p].cols == cols;
  };
  if (!(shape_ok(Param::V, t.n_items(), D) && shape_ok(Param::P, t.n_items(), D) &&
        shape_ok(Param::Wu, D, D) && shape_ok(Param::Wv, D, D) && shape_ok(Param::Wp, D, D) &&
        t[Param::Wf].rows == D && shape_ok(Param::b1, 1, D) && shape_ok(Param::w2, 1, D) &&
        shape_ok(Param::b2, 1, 1) && shape_ok(Param::q, 1, D)) ||
      D != ck.cfg.dim)
    throw FormatError("checkpoint: tensor shapes are inconsistent");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const TrainConfig& cfg,
                     const model::EmbeddingTables& t) {
  const auto bytes = encode_checkpoint(cfg, t);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace hvacf::train
