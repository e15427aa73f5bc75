#include "tinybird/bytes.h"

#include <fstream>
#include <iterator>

#include "tinybird/error.h"

namespace tinybird {

std::vector<std::uint8_t> ReadFileBytes(const std::filesystem::path& path,
                                        const std::string& module) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(module, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void WriteFileBytes(const std::filesystem::path& path,
                    std::span<const std::uint8_t> bytes,
                    const std::string& module) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(module, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(module, "short write to " + path.string());
}

}  // namespace tinybird
