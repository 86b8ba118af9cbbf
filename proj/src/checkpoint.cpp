#include "f2s/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "f2s/error.hpp"

namespace f2s::checkpoint {
namespace {

constexpr char kMagic[8] = {'F', '2', 'S', 'C', 'K', 'P', 'T', '\0'};

template <class U>
U to_le(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    U out;
    auto* src = reinterpret_cast<const unsigned char*>(&v);
    auto* dst = reinterpret_cast<unsigned char*>(&out);
    for (std::size_t i = 0; i < sizeof(U); ++i) dst[i] = src[sizeof(U) - 1 - i];
    return out;
  } else {
    return v;
  }
}

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw DataError("cannot write checkpoint: " + path.string());
  }
  template <class U>
  void put(U v) {
    v = to_le(v);
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void tensor(const std::string& name, const std::vector<std::size_t>& shape, const std::vector<float>& data) {
    put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    bytes(name.data(), name.size());
    put<std::uint32_t>(static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) put<std::uint64_t>(d);
    for (float f : data) put<std::uint32_t>(std::bit_cast<std::uint32_t>(f));
  }
  void finish() {
    out_.flush();
    if (!out_) throw DataError("failed while writing checkpoint");
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path.string()) {
    if (!in_) throw DataError("cannot open checkpoint: " + path_);
  }
  template <class U>
  U get() {
    U v;
    bytes(&v, sizeof v);
    return to_le(v);
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) throw DataError("truncated checkpoint: " + path_);
  }
  std::string string(std::size_t n) {
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

 private:
  std::ifstream in_;
  std::string path_;
};

struct RawTensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;
};

void copy_into(const RawTensor& src, const std::vector<std::size_t>& shape, std::vector<float>& dst,
               const std::string& name) {
  if (src.shape != shape) throw DataError("checkpoint tensor shape mismatch: " + name);
  dst = src.data;
}

}  // namespace

void save(const std::filesystem::path& path, const model::Transformer<float>& model, const train::TrainState& state,
          const train::TrainConfig& train_config, const nlohmann::json& metadata) {
  nlohmann::ordered_json header;
  header["model"] = nlohmann::ordered_json::parse(nlohmann::json(model.config()).dump());
  header["partition"] = {{"sorted_order", model.partition().sorted_order()},
                         {"boundaries", model.partition().boundaries()},
                         {"class_mass", model.partition().class_mass()}};
  header["train"] = nlohmann::ordered_json::parse(nlohmann::json(train_config).dump());
  header["state"] = {{"step", state.step}, {"adam_step", state.adam.step}, {"rng_counter", state.rng_counter}};
  header["metadata"] = nlohmann::ordered_json::parse(metadata.dump());
  const std::string json = header.dump();

  Writer w(path);
  w.bytes(kMagic, sizeof kMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(json.size());
  w.bytes(json.data(), json.size());
  const auto& params = model.params();
  const bool has_adam = state.adam.m.size() == params.size();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size() * (has_adam ? 3 : 1)));
  for (const auto& p : params) w.tensor(p.name, p.shape, p.data);
  if (has_adam) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      w.tensor("adam.m/" + params[i].name, params[i].shape, state.adam.m[i]);
      w.tensor("adam.v/" + params[i].name, params[i].shape, state.adam.v[i]);
    }
  }
  w.finish();
}

Checkpoint load(const std::filesystem::path& path) {
  Reader r(path);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw DataError("not a checkpoint file: " + path.string());
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ConfigError("checkpoint version " + std::to_string(version) + " does not match supported version " +
                      std::to_string(kCheckpointVersion) + ": " + path.string());
  }
  const auto json_len = r.get<std::uint64_t>();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.string(json_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint header: ") + e.what());
  }

  std::map<std::string, RawTensor> tensors;
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name = r.string(r.get<std::uint32_t>());
    RawTensor t;
    const auto rank = r.get<std::uint32_t>();
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      t.shape.push_back(r.get<std::uint64_t>());
      n *= t.shape.back();
    }
    t.data.resize(n);
    for (auto& f : t.data) f = std::bit_cast<float>(r.get<std::uint32_t>());
    tensors.emplace(name, std::move(t));
  }

  Checkpoint ck;
  try {
    const auto cfg = header.at("model").get<model::ModelConfig>();
    partition::ClassPartition layout(header.at("partition").at("sorted_order").get<std::vector<corpus::TokenId>>(),
                                     header.at("partition").at("boundaries").get<std::vector<std::size_t>>());
    auto masses = header.at("partition").value("class_mass", std::vector<double>{});
    if (masses.size() == layout.num_classes()) {
      layout = partition::ClassPartition::with_stored(std::move(layout), std::move(masses), {});
    }
    ck.model = std::make_unique<model::Transformer<float>>(cfg, std::move(layout));
    ck.train_config = header.at("train").get<train::TrainConfig>();
    ck.state.step = header.at("state").at("step").get<std::uint64_t>();
    ck.state.rng_counter = header.at("state").at("rng_counter").get<std::uint64_t>();
    ck.metadata = header.value("metadata", nlohmann::json::object());

    auto& params = ck.model->params();
    for (auto& p : params) {
      auto it = tensors.find(p.name);
      if (it == tensors.end()) throw DataError("checkpoint missing tensor " + p.name);
      copy_into(it->second, p.shape, p.data, p.name);
    }
    if (tensors.count("adam.m/" + params.front().name) != 0) {
      ck.state.adam.reset(params);
      ck.state.adam.step = header.at("state").at("adam_step").get<std::uint64_t>();
      for (std::size_t i = 0; i < params.size(); ++i) {
        const auto m = tensors.find("adam.m/" + params[i].name);
        const auto v = tensors.find("adam.v/" + params[i].name);
        if (m == tensors.end() || v == tensors.end()) throw DataError("checkpoint missing optimizer state");
        copy_into(m->second, params[i].shape, ck.state.adam.m[i], m->first);
        copy_into(v->second, params[i].shape, ck.state.adam.v[i], v->first);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint header: ") + e.what());
  }
  return ck;
}

}  // namespace f2s::checkpoint
