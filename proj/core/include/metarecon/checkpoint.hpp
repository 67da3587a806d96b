#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "metarecon/networks.hpp"
#include "metarecon/tensor.hpp"

namespace metarecon {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Record {
  std::string name;
  Tensor value;
};

/// "MRCK" file: version, record count, then (name, rank, extents, f64 data)
/// per record, all little-endian.
void write_checkpoint(const std::filesystem::path& path, const std::vector<Record>& records);
std::vector<Record> read_checkpoint(const std::filesystem::path& path);

/// One record per parameter, in ParamStore::all() order.
std::vector<Record> param_records(ParamStore& store);
/// Copies values into every parameter of `store` by name. Records the store
/// does not know (optimizer moments, counters) are ignored; a missing or
/// misshapen parameter throws FormatError.
void load_params(ParamStore& store, const std::vector<Record>& records);

const Record* find_record(const std::vector<Record>& records, const std::string& name);

}  // namespace metarecon
