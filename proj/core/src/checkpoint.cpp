#include "secoco/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace secoco::model {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written in native byte order");

namespace {

constexpr char kMagic[4] = {'S', 'E', 'C', 'O'};

template <class T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <class T>
T read_pod(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw InputError("truncated checkpoint: " + path.string());
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const SecocoModel& model,
                     const nlohmann::json& meta,
                     const std::map<std::string, numerics::Tensor>& extra) {
  std::vector<std::pair<std::string, const numerics::Tensor*>> tensors;
  const auto& params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    tensors.emplace_back(params.names()[i], &params.vars()[i]->value);
  }
  for (const auto& [name, t] : extra) tensors.emplace_back("extra:" + name, &t);

  nlohmann::json index = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    const std::uint64_t nbytes = t->numel() * sizeof(float);
    index.push_back({{"name", name}, {"shape", t->shape()}, {"offset", offset},
                     {"nbytes", nbytes}});
    offset += nbytes;
  }
  nlohmann::json header{{"config", model.config()}, {"meta", meta}, {"tensors", index}};
  const std::string text = header.dump();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write checkpoint: " + path.string());
    out.write(kMagic, 4);
    write_pod<std::uint32_t>(out, kCheckpointVersion);
    write_pod<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : tensors) {
      out.write(reinterpret_cast<const char*>(t->data()),
                static_cast<std::streamsize>(t->numel() * sizeof(float)));
    }
    if (!out) throw InputError("failed writing checkpoint: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read checkpoint: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw InputError("not a checkpoint (bad magic): " + path.string());
  }
  const auto version = read_pod<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw InputError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = read_pod<std::uint64_t>(in, path);
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw InputError("truncated checkpoint header: " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("corrupt checkpoint header: " + std::string(e.what()));
  }
  const std::streamoff payload_start = in.tellg();

  LoadedCheckpoint out;
  const auto config = header.at("config").get<ModelConfig>();
  out.model = std::make_unique<SecocoModel>(config, 0);
  out.meta = header.value("meta", nlohmann::json::object());

  auto& params = out.model->params();
  std::size_t loaded = 0;
  for (const auto& entry : header.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<numerics::Shape>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    const auto nbytes = entry.at("nbytes").get<std::uint64_t>();
    if (nbytes != numerics::shape_numel(shape) * sizeof(float)) {
      throw InputError("checkpoint tensor " + name + " has inconsistent size");
    }
    numerics::Tensor t(shape);
    in.seekg(payload_start + static_cast<std::streamoff>(offset));
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(nbytes));
    if (!in) throw InputError("truncated checkpoint payload for " + name);
    if (name.rfind("extra:", 0) == 0) {
      out.extra.emplace(name.substr(6), std::move(t));
      continue;
    }
    if (!params.contains(name)) {
      throw InputError("checkpoint tensor " + name + " is not a model parameter");
    }
    auto& var = params.get(name);
    if (var->value.shape() != shape) {
      throw InputError("checkpoint tensor " + name + " has shape " +
                       numerics::shape_string(shape) + ", config expects " +
                       numerics::shape_string(var->value.shape()));
    }
    var->value = std::move(t);
    ++loaded;
  }
  if (loaded != params.size()) {
    throw InputError("checkpoint is missing " + std::to_string(params.size() - loaded) +
                     " model parameters");
  }
  return out;
}

}  // namespace secoco::model
