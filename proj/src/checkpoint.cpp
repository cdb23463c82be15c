#include "tal/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "tal/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace tal {

namespace {

constexpr char kMagic[5] = {'T', 'A', 'L', 'F', '1'};

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw IoError("checkpoint: truncated while reading u32");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("checkpoint: cannot open " + tmp.string() + " for writing");
    os.write(kMagic, sizeof(kMagic));
    for (const auto& [name, p] : store) {
      write_u32(os, static_cast<uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_u32(os, static_cast<uint32_t>(p.value.shape.size()));
      for (size_t d : p.value.shape) write_u32(os, static_cast<uint32_t>(d));
      os.write(reinterpret_cast<const char*>(p.value.data.data()),
               static_cast<std::streamsize>(p.value.data.size() * sizeof(double)));
    }
    if (!os) throw IoError("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void load_checkpoint(const std::filesystem::path& path, ParamStore& store) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open " + path.string());
  char magic[5];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("checkpoint: bad magic in " + path.string());
  size_t loaded = 0;
  while (true) {
    uint32_t name_len = 0;
    is.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
    if (is.eof()) break;
    if (!is) throw IoError("checkpoint: truncated record header");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw IoError("checkpoint: truncated name");
    uint32_t rank = read_u32(is);
    if (rank > 8) throw IoError("checkpoint: implausible rank for " + name);
    std::vector<size_t> shape(rank);
    for (uint32_t i = 0; i < rank; ++i) shape[i] = read_u32(is);
    size_t n = 1;
    for (size_t d : shape) {
      if (d == 0) throw IoError("checkpoint: zero extent for " + name);
      n *= d;
    }
    if (n > (1u << 28)) throw IoError("checkpoint: implausible payload size for " + name);
    std::vector<double> payload(n);
    is.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw IoError("checkpoint: truncated payload for " + name);
    if (!store.has(name)) throw IoError("checkpoint: unknown parameter " + name);
    ParamTensor& p = store.at(name);
    if (p.value.shape != shape) {
      std::string fs;
      for (size_t d : shape) fs += (fs.empty() ? "" : "x") + std::to_string(d);
      throw IoError("checkpoint: shape mismatch for " + name + ": file [" + fs + "] vs model " +
                    p.value.shape_str());
    }
    p.value.data = std::move(payload);
    ++loaded;
  }
  if (loaded != store.tensor_count())
    throw IoError("checkpoint: file holds " + std::to_string(loaded) + " tensors, model expects " +
                  std::to_string(store.tensor_count()));
}

}  // namespace tal
