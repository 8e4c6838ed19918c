#pragma once

#include <string>

#include "sve/model.hpp"

namespace sve {

// Binary checkpoint layout (all integers little-endian, doubles as raw
// IEEE-754 bit patterns, so save/load round-trips bitwise):
//
//   magic "SVE1" | u32 version | str rng_algorithm | u64 spec_hash |
//   str spec_json | str config_echo_json | u32 n_arrays |
//   n_arrays x (str name | u32 ndim | u64 dims[] | f64 data[]) |
//   u64 fnv1a checksum over everything after the magic
//
// Strings are u32 length + bytes. The spec hash is the FNV-1a of the spec
// JSON; a mismatch between the two is rejected.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const EnsembleModel& model, const std::string& path,
                     const std::string& config_echo_json = "{}");

struct LoadedCheckpoint {
    EnsembleModel model;
    std::string rng_algorithm;
    std::string config_echo_json;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

} // namespace sve
