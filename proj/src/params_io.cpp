#include "hit/params_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "hit/error.hpp"

namespace hit::io {
namespace {

constexpr char kMagic[8] = {'H', 'I', 'T', 'P', 'A', 'R', 'A', 'M'};

template <class T>
void put(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U u = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
}

template <class T>
T get(const std::string& in, std::size_t& pos) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  require(pos + sizeof(U) <= in.size(), Errc::FormatError, "parameter file truncated");
  U u = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    u |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  pos += sizeof(U);
  return std::bit_cast<T>(u);
}

}  // namespace

void write_param_file(const std::filesystem::path& path, const ParamFile& file) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kParamFileVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.kind.size()));
  out += file.kind;
  const std::string meta = file.metadata.dump();
  put<std::uint64_t>(out, meta.size());
  out += meta;
  put<std::uint64_t>(out, file.values.size());
  for (double v : file.values) put<double>(out, v);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(Errc::IoError, "cannot write '" + path.string() + "'");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

ParamFile read_param_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(Errc::IoError, "cannot open '" + path.string() + "'");
  std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  require(in.size() >= sizeof(kMagic) && std::memcmp(in.data(), kMagic, sizeof(kMagic)) == 0,
          Errc::FormatError, "'" + path.string() + "' is not a parameter file");
  std::size_t pos = sizeof(kMagic);
  const auto version = get<std::uint32_t>(in, pos);
  require(version == kParamFileVersion, Errc::FormatError,
          "unsupported parameter file version " + std::to_string(version));
  ParamFile file;
  const auto kind_len = get<std::uint32_t>(in, pos);
  require(pos + kind_len <= in.size(), Errc::FormatError, "parameter file truncated");
  file.kind = in.substr(pos, kind_len);
  pos += kind_len;
  const auto meta_len = get<std::uint64_t>(in, pos);
  require(pos + meta_len <= in.size(), Errc::FormatError, "parameter file truncated");
  try {
    file.metadata = nlohmann::json::parse(in.substr(pos, meta_len));
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::FormatError, std::string("bad parameter metadata: ") + e.what());
  }
  pos += meta_len;
  const auto count = get<std::uint64_t>(in, pos);
  file.values.resize(count);
  for (auto& v : file.values) v = get<double>(in, pos);
  return file;
}

}  // namespace hit::io
