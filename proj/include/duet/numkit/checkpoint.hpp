#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "duet/numkit/param_store.hpp"

namespace duet {

inline constexpr const char* kCheckpointHeader = "DUETCKPT v1";

/// Archive layout: the header line, then per entry (sorted by name)
/// u32 name length, name bytes, u32 rank, u64 dims, little-endian f64 values.
void write_tensors(std::ostream& out, const std::map<std::string, Tensor>& tensors);
std::map<std::string, Tensor> read_tensors(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store);
std::map<std::string, Tensor> load_tensors(const std::filesystem::path& path);

/// Overwrites the values of `store` from a checkpoint; names and shapes must match exactly.
void load_checkpoint(const std::filesystem::path& path, ParamStore& store);
void assign_values(ParamStore& store, const std::map<std::string, Tensor>& tensors);

}  // namespace duet
