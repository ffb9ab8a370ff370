#include "s2w/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

namespace s2w
{

namespace
{
constexpr char kMagic[4] = {'S', '2', 'W', 'C'};
constexpr const char* kMetaName = "meta.config";
constexpr std::uint32_t kMaxNameLength = 4096;

struct Entry
{
  Shape shape;
  std::vector<float> values;
};

void write_entry(std::ostream& os, const std::string& name, const Shape& shape,
                 std::span<const double> values)
{
  io::write_u32(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  io::write_u32(os, static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape)
    io::write_u32(os, static_cast<std::uint32_t>(d));
  for (double v : values)
    io::write_f32(os, static_cast<float>(v));
}

std::vector<double> encode_config(const ModelConfig& c)
{
  const auto& a = c.ablation;
  return {double(c.ratio),
          double(c.bands),
          double(c.width),
          double(c.fmamba.ssm.expand),
          double(c.fmamba.ssm.d_state),
          double(c.fmamba.ssm.conv_width),
          c.fmamba.skip_uses_raw_inputs ? 1.0 : 0.0,
          double(static_cast<int>(a.structural)),
          a.gates.no_mul ? 1.0 : 0.0,
          a.gates.no_dec ? 1.0 : 0.0,
          a.gates.no_add ? 1.0 : 0.0};
}

ModelConfig decode_config(const std::vector<float>& v)
{
  if (v.size() != 11)
    throw FormatError("checkpoint: meta.config has " + std::to_string(v.size()) + " fields, expected 11");
  for (float x : v)
    if (!(x >= 0.0f) || x > 1e6f || x != std::floor(x))
      throw FormatError("checkpoint: meta.config holds a non-integer field");
  auto u = [&](std::size_t i) { return static_cast<std::size_t>(v[i]); };
  ModelConfig c;
  c.ratio = u(0);
  c.bands = u(1);
  c.width = u(2);
  c.fmamba.ssm.expand = u(3);
  c.fmamba.ssm.d_state = u(4);
  c.fmamba.ssm.conv_width = u(5);
  c.fmamba.skip_uses_raw_inputs = u(6) != 0;
  if (u(7) > static_cast<std::size_t>(Structural::AWS))
    throw FormatError("checkpoint: unknown ablation variant " + std::to_string(u(7)));
  c.ablation.structural = static_cast<Structural>(u(7));
  c.ablation.gates = {u(8) != 0, u(9) != 0, u(10) != 0};
  return c;
}

// Returns false on a clean end of file before the entry starts.
bool read_entry(std::istream& is, std::string& name, Entry& entry)
{
  if (is.peek() == std::char_traits<char>::eof())
    return false;
  const std::uint32_t len = io::read_u32(is);
  if (len == 0 || len > kMaxNameLength)
    throw FormatError("checkpoint: invalid entry name length " + std::to_string(len));
  name.resize(len);
  io::read_exact(is, name.data(), len);
  const std::uint32_t rank = io::read_u32(is);
  if (rank > 4)
    throw FormatError("checkpoint: entry '" + name + "' has rank " + std::to_string(rank));
  entry.shape.assign(rank, 0);
  std::uint64_t count = 1;
  for (auto& d : entry.shape) {
    d = io::read_u32(is);
    count *= d;
    if (count > (std::uint64_t{1} << 32))
      throw FormatError("checkpoint: entry '" + name + "' is too large");
  }
  entry.values.resize(static_cast<std::size_t>(count));
  for (auto& v : entry.values)
    v = io::read_f32(is);
  return true;
}
} // namespace

void save_checkpoint(std::ostream& os, S2WMambaModel& model)
{
  os.write(kMagic, 4);
  io::write_u16(os, kCheckpointVersion);
  const auto meta = encode_config(model.config);
  write_entry(os, kMetaName, Shape{meta.size()}, meta);
  model.visit_parameters([&](const std::string& name, Tensor& t) {
    write_entry(os, name, t.shape(), t.data());
  });
  if (!os)
    throw FormatError("checkpoint: stream write failed");
}

S2WMambaModel load_checkpoint(std::istream& is)
{
  char magic[4];
  io::read_exact(is, magic, 4);
  if (!std::equal(magic, magic + 4, kMagic))
    throw FormatError("bad magic: not an S2WC checkpoint");
  const std::uint16_t version = io::read_u16(is);
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));

  std::string name;
  Entry meta;
  if (!read_entry(is, name, meta) || name != kMetaName)
    throw FormatError("checkpoint: first entry must be meta.config");
  ModelConfig config = decode_config(meta.values);
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }

  std::map<std::string, Entry> entries;
  Entry entry;
  while (read_entry(is, name, entry))
    if (!entries.emplace(name, std::move(entry)).second)
      throw FormatError("checkpoint: duplicate entry '" + name + "'");

  S2WMambaModel model = build_model(config, 0);
  std::size_t matched = 0;
  model.visit_parameters([&](const std::string& pname, Tensor& t) {
    auto it = entries.find(pname);
    if (it == entries.end())
      throw FormatError("checkpoint: missing parameter '" + pname + "'");
    if (it->second.shape != t.shape())
      throw FormatError("checkpoint: parameter '" + pname + "' has shape " +
                        to_string(it->second.shape) + ", model expects " + to_string(t.shape()));
    std::vector<double> values(it->second.values.begin(), it->second.values.end());
    t = Tensor::parameter(t.shape(), std::move(values));
    ++matched;
  });
  if (matched != entries.size())
    throw FormatError("checkpoint: " + std::to_string(entries.size() - matched) +
                      " entries do not belong to a " + config.ablation.name() + " model");
  return model;
}

void save_checkpoint(const std::filesystem::path& path, S2WMambaModel& model)
{
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os)
    throw FormatError("cannot open " + path.string() + " for writing");
  save_checkpoint(os, model);
}

S2WMambaModel load_checkpoint(const std::filesystem::path& path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw FormatError("cannot open " + path.string());
  try {
    return load_checkpoint(is);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

} // namespace s2w
