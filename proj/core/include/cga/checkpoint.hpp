#pragma once

#include <cstdint>
#include <string>

#include "cga/network.hpp"
#include "cga/nn_ops.hpp"

namespace cga {

// ---- CGAC checkpoint container ----
// Byte-exact layout, little endian:
//   magic   "CGAC"    4 bytes
//   version u16       (currently 1)
//   reserved u16      0
//   epoch   u32
//   seed    u64
//   n       u32       entry count
//   entry:  name_len u16, name bytes, dtype u8 (0=f32,1=f64), rank u8,
//           dims u32[rank], payload little endian
// Entries hold model parameters and batch-norm running stats under their
// parameter names, Adam moments under adam.m.<name> / adam.v.<name>, and the
// Adam step count under adam.t (f64 scalar).
struct CheckpointMeta {
    uint32_t epoch = 0;
    uint64_t seed = 0;
};

void save_checkpoint(const std::string& path, CgaUnet<float>& model, const Adam<float>* opt,
                     const CheckpointMeta& meta);

// Loads into an already-built model (spec must match); optimizer state is
// restored when `opt` is given and the file carries it. Mismatched shapes
// report both sides.
CheckpointMeta load_checkpoint(const std::string& path, CgaUnet<float>& model, Adam<float>* opt);

} // namespace cga
