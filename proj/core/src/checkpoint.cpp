#include "metarecon/checkpoint.hpp"

#include <unordered_map>

#include "binary_io.hpp"
#include "metarecon/errors.hpp"

namespace metarecon {

void write_checkpoint(const std::filesystem::path& path, const std::vector<Record>& records) {
  detail::BinaryWriter w;
  w.magic("MRCK");
  w.u32(kCheckpointVersion);
  w.u32(detail::BinaryWriter::checked_u32(records.size()));
  for (const Record& rec : records) {
    w.str(rec.name);
    w.u32(detail::BinaryWriter::checked_u32(rec.value.rank()));
    for (std::size_t e : rec.value.shape()) w.u32(detail::BinaryWriter::checked_u32(e));
    w.f64s(rec.value.data());
  }
  w.save(path);
}

std::vector<Record> read_checkpoint(const std::filesystem::path& path) {
  detail::BinaryReader r(path);
  r.expect_magic("MRCK");
  r.expect_version(kCheckpointVersion);
  const std::uint32_t count = r.u32();
  std::vector<Record> records;
  for (std::uint32_t i = 0; i < count; ++i) {
    Record rec;
    rec.name = r.str();
    Shape shape(r.u32());
    if (shape.size() > r.remaining() / 4) throw TruncatedError(path.string() + ": bad rank");
    for (std::size_t& e : shape) e = r.u32();
    rec.value = Tensor(shape, r.f64s(shape_numel(shape)));
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<Record> param_records(ParamStore& store) {
  std::vector<Record> out;
  for (const ParamRef& ref : store.all()) out.push_back({ref.name, ref.tensor->detach()});
  return out;
}

void load_params(ParamStore& store, const std::vector<Record>& records) {
  std::unordered_map<std::string, const Record*> index;
  for (const Record& rec : records) index[rec.name] = &rec;
  for (const ParamRef& ref : store.all()) {
    auto it = index.find(ref.name);
    if (it == index.end()) throw FormatError("checkpoint lacks parameter " + ref.name);
    if (it->second->value.shape() != ref.tensor->shape()) {
      throw FormatError("checkpoint parameter " + ref.name + " has shape " +
                        shape_str(it->second->value.shape()) + ", expected " +
                        shape_str(ref.tensor->shape()));
    }
    *ref.tensor = it->second->value.detach(ref.tensor->requires_grad());
  }
}

const Record* find_record(const std::vector<Record>& records, const std::string& name) {
  for (const Record& rec : records) {
    if (rec.name == name) return &rec;
  }
  return nullptr;
}

}  // namespace metarecon
