#include "fino/io.hpp"

#include <openssl/evp.h>
#include <unistd.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>

namespace fino {

namespace {

static_assert(std::endian::native == std::endian::little, "on-disk formats assume a little-endian host");

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

void put_f32(Bytes& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

Bytes frame_container(const char magic[4], std::uint32_t version, const json& header, const Bytes& payload) {
  const std::string h = header.dump();
  Bytes out(magic, magic + 4);
  put_u32(out, version);
  put_u32(out, static_cast<std::uint32_t>(h.size()));
  out.insert(out.end(), h.begin(), h.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

struct Container {
  json header;
  std::span<const std::uint8_t> payload;
};

Container open_container(std::span<const std::uint8_t> b, const char magic[4], std::uint32_t version,
                         const char* what) {
  if (b.size() < 12 || std::memcmp(b.data(), magic, 4) != 0) throw IoError(std::string(what) + ": bad magic");
  const std::uint32_t v = get_u32(b, 4);
  if (v != version) throw IoError(std::string(what) + ": unsupported format version " + std::to_string(v));
  const std::uint32_t hlen = get_u32(b, 8);
  if (b.size() < 12 + static_cast<std::size_t>(hlen)) throw IoError(std::string(what) + ": truncated header");
  Container c;
  try {
    c.header = json::parse(b.begin() + 12, b.begin() + 12 + hlen);
  } catch (const json::exception& e) {
    throw IoError(std::string(what) + ": header is not valid JSON (" + e.what() + ")");
  }
  c.payload = b.subspan(12 + hlen);
  return c;
}

template <typename V>
V header_get(const json& h, const char* key, const char* what) {
  try {
    return h.at(key).get<V>();
  } catch (const json::exception&) {
    throw IoError(std::string(what) + ": header field '" + key + "' is missing or malformed");
  }
}

}  // namespace

Bytes dataset_payload(const Dataset& ds) {
  Bytes out;
  out.reserve(ds.frames.size() * 4);
  for (double v : ds.frames.data()) put_f32(out, static_cast<float>(v));
  return out;
}

Bytes encode_dataset(const Dataset& ds) {
  json h;
  h["pde"] = pde_to_json(ds.spec);
  h["grid"] = grid_to_json(ds.grid);
  h["n_traj"] = ds.n_traj();
  h["T_frames"] = ds.n_frames();
  h["V"] = ds.channels();
  h["H"] = ds.height();
  h["W"] = ds.width();
  h["dt_data"] = ds.dt_data;
  h["seed"] = ds.seed;
  h["dtype"] = "float32";
  return frame_container("FINO", kDatasetVersion, h, dataset_payload(ds));
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  const char* what = "dataset";
  const Container c = open_container(bytes, "FINO", kDatasetVersion, what);
  const json& h = c.header;
  if (header_get<std::string>(h, "dtype", what) != "float32") throw IoError("dataset: unsupported dtype");
  Dataset ds;
  try {
    ds.spec = pde_from_json(h.at("pde"));
    ds.grid = grid_from_json(h.at("grid"));
  } catch (const Error& e) {
    throw IoError(std::string("dataset: invalid header: ") + e.what());
  } catch (const json::exception& e) {
    throw IoError(std::string("dataset: invalid header: ") + e.what());
  }
  ds.dt_data = header_get<double>(h, "dt_data", what);
  ds.seed = header_get<std::uint64_t>(h, "seed", what);
  const Shape s{header_get<std::size_t>(h, "n_traj", what), header_get<std::size_t>(h, "T_frames", what),
                header_get<std::size_t>(h, "V", what), header_get<std::size_t>(h, "H", what),
                header_get<std::size_t>(h, "W", what)};
  if (s[2] != pde_channels(ds.spec) || s[3] != ds.grid.height() || s[4] != ds.grid.width())
    throw IoError("dataset: header extents disagree with the grid and PDE");
  for (std::size_t e : s)
    if (e == 0) throw IoError("dataset: zero extent in header");
  const std::size_t n = shape_numel(s);
  if (c.payload.size() != n * 4)
    throw IoError("dataset: payload is " + std::to_string(c.payload.size()) + " bytes, expected " +
                  std::to_string(n * 4));
  ds.frames = Tensor<double>(s);
  for (std::size_t i = 0; i < n; ++i) ds.frames[i] = static_cast<double>(std::bit_cast<float>(get_u32(c.payload, 4 * i)));
  return ds;
}

Bytes encode_checkpoint(const Checkpoint& ck) {
  json h;
  h["model_config"] = model_config_to_json(ck.model);
  h["train_config"] = train_config_to_json(ck.train);
  h["dtype"] = "float32";
  h["metrics"] = ck.metrics;
  h["data"] = ck.data;
  json table = json::array();
  Bytes payload;
  std::size_t offset = 0;
  for (const auto& p : ck.params) {
    if (shape_numel(p.shape) != p.values.size()) throw ShapeError("checkpoint parameter " + p.name + " has wrong size");
    table.push_back({{"name", p.name}, {"shape", p.shape}, {"offset", offset}});
    for (float f : p.values) put_f32(payload, f);
    offset += p.values.size() * 4;
  }
  h["params"] = table;
  return frame_container("FNCK", kCheckpointVersion, h, payload);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  const char* what = "checkpoint";
  const Container c = open_container(bytes, "FNCK", kCheckpointVersion, what);
  const json& h = c.header;
  if (header_get<std::string>(h, "dtype", what) != "float32") throw IoError("checkpoint: unsupported dtype");
  Checkpoint ck;
  try {
    ck.model = model_config_from_json(h.at("model_config"));
    ck.train = train_config_from_json(h.at("train_config"));
    ck.metrics = h.at("metrics");
    ck.data = h.at("data");
  } catch (const Error& e) {
    throw IoError(std::string("checkpoint: invalid header: ") + e.what());
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint: invalid header: ") + e.what());
  }
  std::size_t expect = 0;
  try {
    for (const auto& e : h.at("params")) {
      NamedTensor p;
      p.name = e.at("name").get<std::string>();
      p.shape = e.at("shape").get<Shape>();
      const std::size_t off = e.at("offset").get<std::size_t>();
      const std::size_t n = shape_numel(p.shape);
      if (off != expect || off + 4 * n > c.payload.size())
        throw IoError("checkpoint: parameter " + p.name + " lies outside the payload");
      p.values.resize(n);
      for (std::size_t i = 0; i < n; ++i) p.values[i] = std::bit_cast<float>(get_u32(c.payload, off + 4 * i));
      expect = off + 4 * n;
      ck.params.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint: malformed parameter table: ") + e.what());
  }
  if (expect != c.payload.size()) throw IoError("checkpoint: payload length does not match the parameter table");
  return ck;
}

template <typename T>
Checkpoint make_checkpoint(const FinoModel<T>& model, const TrainConfig& train, json metrics) {
  Checkpoint ck;
  ck.model = model.config();
  ck.train = train;
  ck.metrics = std::move(metrics);
  for (const auto& [name, p] : model.parameters()) {
    NamedTensor t{name, p.shape(), {}};
    t.values.reserve(p.value().size());
    for (T v : p.value().data()) t.values.push_back(static_cast<float>(v));
    ck.params.push_back(std::move(t));
  }
  return ck;
}

template <typename T>
FinoModel<T> model_from_checkpoint(const Checkpoint& ck, const ModelConfig* expected) {
  if (expected && !(*expected == ck.model)) throw ConfigError("checkpoint ModelConfig differs from the expected one");
  FinoModel<T> model = FinoModel<T>::zeros(ck.model);
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& p : ck.params) by_name[p.name] = &p;
  auto params = model.parameters();
  if (params.size() != ck.params.size())
    throw IoError("checkpoint holds " + std::to_string(ck.params.size()) + " parameters, model expects " +
                  std::to_string(params.size()));
  for (auto& [name, var] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IoError("checkpoint is missing parameter " + name);
    if (it->second->shape != var.shape())
      throw IoError("checkpoint parameter " + name + " has shape " + shape_str(it->second->shape) + ", model expects " +
                    shape_str(var.shape()));
    auto dst = var.mutable_value().data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(it->second->values[i]);
  }
  return model;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Bytes b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read error on " + path.string());
  return b;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("write failed for " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move output into place at " + path.string());
  }
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) { write_file_atomic(path, encode_dataset(ds)); }

Dataset load_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_file_atomic(path, encode_checkpoint(ck));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 || EVP_DigestFinal_ex(ctx.get(), md, &len) != 1)
    throw Error("SHA-256 computation failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

template Checkpoint make_checkpoint<float>(const FinoModel<float>&, const TrainConfig&, json);
template Checkpoint make_checkpoint<double>(const FinoModel<double>&, const TrainConfig&, json);
template FinoModel<float> model_from_checkpoint<float>(const Checkpoint&, const ModelConfig*);
template FinoModel<double> model_from_checkpoint<double>(const Checkpoint&, const ModelConfig*);

}  // namespace fino
