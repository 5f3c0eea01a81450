#ifndef SECOCO_CHECKPOINT_HPP_
#define SECOCO_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "json.hpp"
#include "secoco/model.hpp"

namespace secoco::model {

// Layout: "SECO", u32 format version, u64 header length, UTF-8 JSON header
// {config, meta, tensors: [{name, shape, offset, nbytes}]}, then the
// little-endian f32 payloads at the listed offsets (relative to payload start).
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct LoadedCheckpoint {
  std::unique_ptr<SecocoModel> model;
  nlohmann::json meta;
  std::map<std::string, numerics::Tensor> extra;  // e.g. optimizer moments
};

void save_checkpoint(const std::filesystem::path& path, const SecocoModel& model,
                     const nlohmann::json& meta,
                     const std::map<std::string, numerics::Tensor>& extra = {});

// Rebuilds the model from the stored config and validates every parameter
// shape against it. Throws InputError on any mismatch or corruption.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace secoco::model

#endif  // SECOCO_CHECKPOINT_HPP_
