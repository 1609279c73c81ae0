#pragma once

// Binary checkpoint layout (all integers and doubles little-endian):
//
//   "CATPOL01"                      8 bytes magic
//   u32 tensor_count
//   per tensor: u32 name_len, name (UTF-8), u32 rows, u32 cols,
//               rows*cols IEEE-754 binary64 values (row-major)
//   u32 config_len, config text (UTF-8, "key = value" lines)
//   32 bytes generator state (4 x u64)

#include "catpol/gradcore.hpp"
#include "catpol/rng.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace catpol {

inline constexpr char kCheckpointMagic[9] = "CATPOL01";

/// Corrupt, truncated or incompatible checkpoint (exit code 2).
class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Checkpoint {
    std::vector<std::pair<std::string, Mat>> tensors;
    std::string config;
    Rng::State rng_state{};

    const Mat& tensor(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

} // namespace catpol
